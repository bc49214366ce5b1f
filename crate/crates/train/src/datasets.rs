//! Synthetic regression datasets, CSV ingestion and feature standardization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{forward, init_network, NetworkConfig};

/// `P` examples: `x` is `P × d_in`, `y` is `P × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows but {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset", "entries must be finite"));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_in(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.y.ncols()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    /// One example per row, inputs then outputs.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if header {
            let names: Vec<String> = (1..=self.d_in())
                .map(|i| format!("x{i}"))
                .chain((1..=self.d_out()).map(|i| format!("y{i}")))
                .collect();
            w.write_record(&names)?;
        }
        for r in 0..self.len() {
            let row: Vec<String> = self
                .x
                .row(r)
                .iter()
                .chain(self.y.row(r).iter())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_dims(p: usize, d_in: usize, d_out: usize) -> Result<()> {
    if p < 1 || d_in < 1 || d_out < 1 {
        return Err(Error::invalid("dims", format!("P, d_in, d_out must be >= 1, got {p}, {d_in}, {d_out}")));
    }
    Ok(())
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for v in m.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}

/// Independent standard-normal inputs and targets.
pub fn make_random<R: Rng + ?Sized>(p: usize, d_in: usize, d_out: usize, rng: &mut R) -> Result<Dataset> {
    check_dims(p, d_in, d_out)?;
    let x = normal_matrix(p, d_in, rng);
    let y = normal_matrix(p, d_out, rng);
    Dataset::new(x, y)
}

/// Standard-normal inputs labelled by a teacher network initialized from
/// `teacher_seed`, so a student initialized from the same seed and config
/// starts at zero loss.
pub fn make_teacher_student<R: Rng + ?Sized>(
    teacher: &NetworkConfig,
    p: usize,
    d_in: usize,
    d_out: usize,
    rng: &mut R,
    teacher_seed: u64,
) -> Result<Dataset> {
    check_dims(p, d_in, d_out)?;
    let params = init_network(teacher, d_in, d_out, &mut sharpness_core::seed::rng(teacher_seed))?;
    let x = normal_matrix(p, d_in, rng);
    let y = forward(&params, teacher, &x)?;
    Dataset::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub a_x: f64,
    pub b_x: f64,
    pub a_y: f64,
    pub b_y: f64,
}

impl PowerLawSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_x > 0.0 && self.a_y > 0.0) {
            return Err(Error::invalid("power-law amplitude", "A_x and A_y must be > 0"));
        }
        if !(self.b_x >= 0.0 && self.b_y >= 0.0) {
            return Err(Error::invalid("power-law exponent", "B_x and B_y must be >= 0"));
        }
        Ok(())
    }
}

/// Singular values of `m` in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Replaces the `k`-th largest singular value `σ_k` (k from 1) by `a·σ_k·k^{−b}`.
pub fn rescale_spectrum(m: &DMatrix<f64>, a: f64, b: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (rank, &i) in order.iter().enumerate() {
        let k = (rank + 1) as f64;
        scaled[i] = a * svd.singular_values[i] * k.powf(-b);
    }
    &u * DMatrix::from_diagonal(&scaled) * &vt
}

/// Random inputs and targets whose singular spectra are rescaled by a power law.
pub fn make_power_law<R: Rng + ?Sized>(
    p: usize,
    d_in: usize,
    d_out: usize,
    spec: &PowerLawSpec,
    rng: &mut R,
) -> Result<Dataset> {
    spec.validate()?;
    let raw = make_random(p, d_in, d_out, rng)?;
    Dataset::new(
        rescale_spectrum(&raw.x, spec.a_x, spec.b_x),
        rescale_spectrum(&raw.y, spec.a_y, spec.b_y),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleInput {
    Vector(Vec<f64>),
    /// `norm · e₁` in `dim` dimensions.
    Norm { norm: f64, dim: usize },
}

/// One-example dataset with scalar target `y`.
pub fn make_single_example(input: &SingleInput, y: f64) -> Result<Dataset> {
    let x = match input {
        SingleInput::Vector(v) => {
            if v.is_empty() || !(v.iter().map(|a| a * a).sum::<f64>() > 0.0) {
                return Err(Error::invalid("x", "must be a nonzero vector"));
            }
            DMatrix::from_row_slice(1, v.len(), v)
        }
        SingleInput::Norm { norm, dim } => {
            if !(*norm > 0.0) || *dim < 1 {
                return Err(Error::invalid("x", format!("need norm > 0 and dim >= 1, got {norm}, {dim}")));
            }
            let mut x = DMatrix::zeros(1, *dim);
            x[(0, 0)] = *norm;
            x
        }
    };
    Dataset::new(x, DMatrix::from_element(1, 1, y))
}

/// Reads rows of `d_in + d_out` numbers.
pub fn load_csv<P: AsRef<Path>>(path: P, d_in: usize, d_out: usize, header: bool) -> Result<Dataset> {
    read_csv(std::fs::File::open(path)?, d_in, d_out, header)
}

pub fn read_csv<R: Read>(input: R, d_in: usize, d_out: usize, header: bool) -> Result<Dataset> {
    check_dims(1, d_in, d_out)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let width = d_in + d_out;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "line {line} has {} columns, expected {width}",
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("`{field}` is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::invalid("csv", "no data rows"));
    }
    let all = DMatrix::from_row_slice(rows, width, &values);
    Dataset::new(all.columns(0, d_in).into_owned(), all.columns(d_in, d_out).into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub data: Dataset,
    /// Input columns with zero variance, left centered only.
    pub constant_columns: Vec<usize>,
}

/// Per input column: subtract the mean and divide by the population standard
/// deviation. Targets are untouched.
pub fn standardize(ds: &Dataset) -> Standardized {
    let p = ds.len() as f64;
    let mut x = ds.x.clone();
    let mut constant_columns = Vec::new();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / p;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / p).sqrt();
        if sd > 0.0 {
            col /= sd;
        } else {
            constant_columns.push(j);
        }
    }
    Standardized {
        data: Dataset { x, y: ds.y.clone() },
        constant_columns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Every row rescaled to the target norm.
    PerExample,
    /// One factor for the whole matrix so the mean squared row norm hits the
    /// target; preserves the singular-value profile.
    Global,
}

/// Rescales inputs to squared norm `sq_norm`. Zero rows stay zero.
pub fn normalize_inputs(ds: &Dataset, sq_norm: f64, mode: InputScaling) -> Dataset {
    let mut x = ds.x.clone();
    match mode {
        InputScaling::PerExample => {
            for mut row in x.row_iter_mut() {
                let n2 = row.norm_squared();
                if n2 > 0.0 {
                    row *= (sq_norm / n2).sqrt();
                }
            }
        }
        InputScaling::Global => {
            let mean = x.norm_squared() / ds.len() as f64;
            if mean > 0.0 {
                x *= (sq_norm / mean).sqrt();
            }
        }
    }
    Dataset { x, y: ds.y.clone() }
}
