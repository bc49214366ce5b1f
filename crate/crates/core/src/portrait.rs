//! Phase-portrait sampling of the function-space map: update field, nullclines
//! and region labels on a cell-centered grid.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uv::{is_forbidden, simulate, step_function_space, step_two, FunctionState, UvHyper};

/// Default forward-simulation horizon for divergence labels.
pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub df_range: (T, T),
    pub lam_range: (T, T),
    /// Cells per axis.
    pub resolution: usize,
}

impl<T: Scalar> GridSpec<T> {
    /// Center of cell `(i, j)`; `i` indexes Δf, `j` indexes λ.
    pub fn center(&self, i: usize, j: usize) -> FunctionState<T> {
        let r = T::lit(self.resolution as f64);
        let half = T::lit(0.5);
        let at = |(lo, hi): (T, T), idx: usize| lo + (T::lit(idx as f64) + half) * (hi - lo) / r;
        FunctionState::new(at(self.df_range, i), at(self.lam_range, j))
    }

    fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::invalid("resolution", "must be >= 2"));
        }
        if !(self.df_range.1 > self.df_range.0) || !(self.lam_range.1 > self.lam_range.0) {
            return Err(Error::invalid("range", "upper bound must exceed lower bound"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Forbidden,
    Divergent,
    Sharpening,
    Reduction,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Forbidden => "forbidden",
            Region::Divergent => "divergent",
            Region::Sharpening => "sharpening",
            Region::Reduction => "reduction",
        }
    }
}

/// A region label. `stationary` marks cells where `λ_{t+1} = λ_t` exactly,
/// which are folded into [`Region::Reduction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub region: Region,
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell<T> {
    pub state: FunctionState<T>,
    /// `G = M^(steps)(s) − s`.
    pub update: [T; 2],
    /// `G/‖G‖`, absent exactly when `G = 0`.
    pub unit_update: Option<[T; 2]>,
    pub region: Option<RegionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitGrid<T> {
    pub spec: GridSpec<T>,
    pub steps: usize,
    /// Row-major over Δf then λ: cell `(i, j)` is at `i * resolution + j`.
    pub cells: Vec<Cell<T>>,
}

impl<T: Scalar> PortraitGrid<T> {
    pub fn cell(&self, i: usize, j: usize) -> &Cell<T> {
        &self.cells[i * self.spec.resolution + j]
    }

    /// Fills every cell's region label.
    pub fn classify(&mut self, h: &UvHyper<T>, horizon: usize, threshold: T) {
        self.cells.par_iter_mut().for_each(|c| {
            c.region = Some(classify_region(c.state, h, horizon, threshold));
        });
    }

    /// `delta_f,lambda,g_df,g_lam,region` with the unit update; null arrows
    /// and missing labels are written as empty fields.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta_f,lambda,g_df,g_lam,region")?;
        for c in &self.cells {
            let (gx, gy) = match c.unit_update {
                Some([a, b]) => (a.to_string(), b.to_string()),
                None => (String::new(), String::new()),
            };
            let region = c.region.map(|r| r.region.as_str()).unwrap_or("");
            writeln!(out, "{},{},{gx},{gy},{region}", c.state.delta_f, c.state.lam)?;
        }
        Ok(())
    }
}

fn update_at<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>, steps: usize) -> [T; 2] {
    let next = if steps == 2 { step_two(s, h) } else { step_function_space(s, h) };
    [next.delta_f - s.delta_f, next.lam - s.lam]
}

/// Samples `G` and `Ĝ` for the one- or two-step map at every cell center.
pub fn vector_field<T: Scalar>(spec: &GridSpec<T>, h: &UvHyper<T>, steps: usize) -> Result<PortraitGrid<T>> {
    spec.validate()?;
    if steps != 1 && steps != 2 {
        return Err(Error::invalid("steps", format!("must be 1 or 2, got {steps}")));
    }
    let r = spec.resolution;
    let cells = (0..r * r)
        .into_par_iter()
        .map(|idx| {
            let state = spec.center(idx / r, idx % r);
            let update = update_at(state, h, steps);
            let norm = update[0].hypot(update[1]);
            let unit_update = (norm > T::zero()).then(|| [update[0] / norm, update[1] / norm]);
            Cell {
                state,
                update,
                unit_update,
                region: None,
            }
        })
        .collect();
    Ok(PortraitGrid {
        spec: *spec,
        steps,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpeningSign {
    Increasing,
    Decreasing,
    Stationary,
}

/// Sign of `λ_{t+1} − λ_t`, read off `Δf·(ηλΔf − 4(Δf + y))`.
pub fn sharpening_sign<T: Scalar>(s: FunctionState<T>, h: &UvHyper<T>) -> SharpeningSign {
    let df = s.delta_f;
    let v = df * (h.eta * s.lam * df - T::lit(4.0) * (df + h.y));
    if v > T::zero() {
        SharpeningSign::Increasing
    } else if v < T::zero() {
        SharpeningSign::Decreasing
    } else {
        SharpeningSign::Stationary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullclineKind {
    /// `Δf_{t+1} = Δf_t`: `λ = η k² Δf (Δf + y)`.
    DeltaF,
    /// `λ_{t+1} = λ_t`: `λ = 4(Δf + y)/(ηΔf)`.
    Lambda,
}

impl NullclineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NullclineKind::DeltaF => "delta_f",
            NullclineKind::Lambda => "lambda",
        }
    }
}

/// Sampled nullclines. Both also contain the axis `Δf = 0`, which is not sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nullclines<T> {
    pub delta_f: Vec<FunctionState<T>>,
    pub lambda: Vec<FunctionState<T>>,
}

impl<T: Scalar> Nullclines<T> {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta_f,lambda,curve")?;
        for (kind, pts) in [(NullclineKind::DeltaF, &self.delta_f), (NullclineKind::Lambda, &self.lambda)] {
            for s in pts {
                writeln!(out, "{},{},{}", s.delta_f, s.lam, kind.as_str())?;
            }
        }
        Ok(())
    }
}

pub fn delta_f_nullcline<T: Scalar>(df: T, h: &UvHyper<T>) -> T {
    h.eta * h.k2() * df * (df + h.y)
}

pub fn lambda_nullcline<T: Scalar>(df: T, h: &UvHyper<T>) -> T {
    T::lit(4.0) * (df + h.y) / (h.eta * df)
}

/// Samples both nullclines, dropping negative-λ and undefined points.
pub fn nullclines<T: Scalar>(h: &UvHyper<T>, df_samples: &[T]) -> Nullclines<T> {
    let keep = |lam: T| lam.is_finite() && lam >= T::zero();
    let sample = |f: &dyn Fn(T) -> T| -> Vec<FunctionState<T>> {
        df_samples
            .iter()
            .filter_map(|&df| {
                let lam = f(df);
                keep(lam).then(|| FunctionState::new(df, lam))
            })
            .collect()
    };
    Nullclines {
        delta_f: sample(&|df| delta_f_nullcline(df, h)),
        lambda: sample(&|df| if df == T::zero() { T::nan() } else { lambda_nullcline(df, h) }),
    }
}

/// Intersections of the two nullcline curves, located by a sign change of
/// their difference between consecutive samples and refined by bisection.
pub fn nullcline_crossings<T: Scalar>(h: &UvHyper<T>, df_samples: &[T]) -> Vec<FunctionState<T>> {
    let gap = |df: T| delta_f_nullcline(df, h) - lambda_nullcline(df, h);
    let mut out = Vec::new();
    for w in df_samples.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        // the λ-nullcline has a pole at Δf = 0
        if a == T::zero() || b == T::zero() || (a < T::zero()) != (b < T::zero()) {
            continue;
        }
        let (mut ga, gb) = (gap(a), gap(b));
        if ga == T::zero() {
            out.push(FunctionState::new(a, delta_f_nullcline(a, h)));
            continue;
        }
        if (ga < T::zero()) == (gb < T::zero()) || gb == T::zero() {
            continue;
        }
        for _ in 0..200 {
            let m = T::lit(0.5) * (a + b);
            let gm = gap(m);
            if (gm < T::zero()) == (ga < T::zero()) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        let df = T::lit(0.5) * (a + b);
        let lam = delta_f_nullcline(df, h);
        if lam >= T::zero() {
            out.push(FunctionState::new(df, lam));
        }
    }
    out
}

/// Labels a state: forbidden, then divergent under forward simulation, then
/// by the sharpening sign at the state itself.
pub fn classify_region<T: Scalar>(
    s: FunctionState<T>,
    h: &UvHyper<T>,
    horizon: usize,
    threshold: T,
) -> RegionLabel {
    let label = |region, stationary| RegionLabel { region, stationary };
    if is_forbidden(s, h) {
        return label(Region::Forbidden, false);
    }
    if simulate(s, h, horizon.max(1), threshold).diverged() {
        return label(Region::Divergent, false);
    }
    match sharpening_sign(s, h) {
        SharpeningSign::Increasing => label(Region::Sharpening, false),
        SharpeningSign::Decreasing => label(Region::Reduction, false),
        SharpeningSign::Stationary => label(Region::Reduction, true),
    }
}
