//! Network and dataset sections shared by `train`, `phase-diagram` and
//! `dataset`.

use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use sharpness_core::seed;
use sharpness_train::datasets::{
    load_csv, make_power_law, make_random, make_single_example, make_teacher_student, normalize_inputs,
    standardize, InputScaling, PowerLawSpec, SingleInput,
};
use sharpness_train::{Activation, Dataset, NetworkConfig, Parameterization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Sp,
    Interp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub param: ParamKind,
    /// Interpolation exponent, used with `param = interp`.
    pub s: f64,
    pub sigma_w2: f64,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            depth: 2,
            width: 512,
            activation: Activation::Linear,
            param: ParamKind::Interp,
            s: 1.0,
            sigma_w2: 1.0,
        }
    }
}

impl NetSection {
    pub fn config(&self) -> NetworkConfig {
        NetworkConfig {
            depth: self.depth,
            width: self.width,
            activation: self.activation,
            parameterization: match self.param {
                ParamKind::Sp => Parameterization::Sp,
                ParamKind::Interp => Parameterization::Interp { s: self.s },
            },
            sigma_w2: self.sigma_w2,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct NetArgs {
    /// Number of weight matrices
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// linear | relu
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long, value_enum)]
    pub param: Option<ParamKind>,
    /// Interpolation exponent (0 standard-like, 1 maximal update)
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sigma_w2: Option<f64>,
}

impl NetArgs {
    pub fn apply(&self, net: &mut NetSection) {
        crate::config::overlay!(net, self; depth, width, activation, param, s, sigma_w2);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalize {
    /// Per example for random data, global for power-law data, untouched otherwise
    #[default]
    Auto,
    None,
    PerExample,
    Global,
}

/// A parsed `--dataset` value.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Random { p: usize, d_in: usize, d_out: usize },
    Teacher { p: usize, d_in: usize, d_out: usize },
    PowerLaw { p: usize, d_in: usize, d_out: usize, law: PowerLawSpec },
    /// Input components followed by the scalar target.
    Single { x: Vec<f64>, y: f64 },
    /// Headed CSV with `d_in` input then `d_out` target columns.
    Csv { path: String, d_in: usize, d_out: usize },
}

fn numbers<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow!("`{v}`: {e}")))
        .collect()
}

impl FromStr for DataSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| anyhow!("expected `kind:args`, e.g. `random:256,64,1`"))?;
        let dims = |v: &[usize]| -> Result<(usize, usize, usize)> {
            match v {
                [p, d_in, d_out] => Ok((*p, *d_in, *d_out)),
                _ => bail!("`{kind}` takes P,d_in,d_out"),
            }
        };
        Ok(match kind {
            "random" => {
                let (p, d_in, d_out) = dims(&numbers(rest)?)?;
                DataSpec::Random { p, d_in, d_out }
            }
            "teacher" => {
                let (p, d_in, d_out) = dims(&numbers(rest)?)?;
                DataSpec::Teacher { p, d_in, d_out }
            }
            "power-law" => {
                let v: Vec<f64> = numbers(rest)?;
                if v.len() != 7 || v[..3].iter().any(|d| d.fract() != 0.0 || *d < 1.0) {
                    bail!("`power-law` takes P,d_in,d_out,A_x,B_x,A_y,B_y");
                }
                DataSpec::PowerLaw {
                    p: v[0] as usize,
                    d_in: v[1] as usize,
                    d_out: v[2] as usize,
                    law: PowerLawSpec { a_x: v[3], b_x: v[4], a_y: v[5], b_y: v[6] },
                }
            }
            "single" => {
                let mut v: Vec<f64> = numbers(rest)?;
                if v.len() < 2 {
                    bail!("`single` takes x_1,...,x_d,y");
                }
                let y = v.pop().unwrap();
                DataSpec::Single { x: v, y }
            }
            "csv" => {
                let mut parts = rest.rsplitn(3, ',');
                let (d_out, d_in, path) = (parts.next(), parts.next(), parts.next());
                match (path, d_in, d_out) {
                    (Some(path), Some(d_in), Some(d_out)) => DataSpec::Csv {
                        path: path.to_string(),
                        d_in: d_in.trim().parse()?,
                        d_out: d_out.trim().parse()?,
                    },
                    _ => bail!("`csv` takes path,d_in,d_out"),
                }
            }
            other => bail!("unknown dataset kind `{other}` (random, teacher, power-law, single, csv)"),
        })
    }
}

/// Builds the dataset named by `spec`, drawing from `derive_seed(seed, 0)`
/// (teacher weights from `derive_seed(seed, 3)`), then standardizes and
/// normalizes inputs as asked.
pub fn build(spec: &str, net: &NetworkConfig, normalize: Normalize, standardize_first: bool, base_seed: u64) -> Result<Dataset> {
    let parsed: DataSpec = spec.parse().with_context(|| format!("invalid value for `dataset`: `{spec}`"))?;
    let mut rng = seed::rng(seed::derive_seed(base_seed, 0));
    let data = match &parsed {
        DataSpec::Random { p, d_in, d_out } => make_random(*p, *d_in, *d_out, &mut rng)?,
        DataSpec::Teacher { p, d_in, d_out } => {
            make_teacher_student(net, *p, *d_in, *d_out, &mut rng, seed::derive_seed(base_seed, 3))?
        }
        DataSpec::PowerLaw { p, d_in, d_out, law } => make_power_law(*p, *d_in, *d_out, law, &mut rng)?,
        DataSpec::Single { x, y } => make_single_example(&SingleInput::Vector(x.clone()), *y)?,
        DataSpec::Csv { path, d_in, d_out } => load_csv(path, *d_in, *d_out, true)?,
    };
    let data = if standardize_first { standardize(&data).data } else { data };
    let mode = match (normalize, &parsed) {
        (Normalize::None, _) => None,
        (Normalize::PerExample, _) => Some(InputScaling::PerExample),
        (Normalize::Global, _) => Some(InputScaling::Global),
        (Normalize::Auto, DataSpec::Random { .. }) => Some(InputScaling::PerExample),
        (Normalize::Auto, DataSpec::PowerLaw { .. }) => Some(InputScaling::Global),
        (Normalize::Auto, _) => None,
    };
    Ok(match mode {
        Some(m) => normalize_inputs(&data, net.parameterization.input_sq_norm(data.d_in()), m),
        None => data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dataset_specs() {
        assert_eq!("random:8,3,1".parse::<DataSpec>().unwrap(), DataSpec::Random { p: 8, d_in: 3, d_out: 1 });
        assert_eq!("single:1,2".parse::<DataSpec>().unwrap(), DataSpec::Single { x: vec![1.0], y: 2.0 });
        assert_eq!(
            "csv:a,b.csv,4,2".parse::<DataSpec>().unwrap(),
            DataSpec::Csv { path: "a,b.csv".into(), d_in: 4, d_out: 2 }
        );
        match "power-law:16,4,2,1,1,1,0".parse::<DataSpec>().unwrap() {
            DataSpec::PowerLaw { p, law, .. } => {
                assert_eq!(p, 16);
                assert_eq!((law.b_x, law.b_y), (1.0, 0.0));
            }
            other => panic!("{other:?}"),
        }
        for bad in ["random:8,3", "single:2", "nope:1", "random", "power-law:1.5,2,1,1,1,1,1"] {
            assert!(bad.parse::<DataSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn auto_normalization_follows_the_data_kind() {
        let net = NetSection::default().config();
        let d = build("random:10,4,1", &net, Normalize::Auto, false, 1).unwrap();
        for r in d.x.row_iter() {
            assert!((r.norm() - 1.0).abs() < 1e-12);
        }
        let s = build("single:3,4,1", &net, Normalize::Auto, false, 1).unwrap();
        assert_eq!(s.x[(0, 1)], 4.0);
    }
}
