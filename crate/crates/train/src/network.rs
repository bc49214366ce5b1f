//! Bias-free fully connected networks under standard or interpolating
//! parameterization, with MSE loss and exact reverse-mode gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid("activation", format!("expected `linear` or `relu`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameterization {
    /// `W1 ~ σ²/d_in`, hidden `σ²/n`, last `1/n`; inputs with `‖x‖² = d_in`.
    Sp,
    /// `h1 = n^{s/2} W1 x` with `W1 ~ σ²/n^s`, hidden `σ²/n`,
    /// `f = n^{-s/2} W_d φ(h)` with `W_d ~ 1/n`; inputs with `‖x‖ = 1`.
    /// `s = 1` is µP.
    Interp { s: f64 },
}

impl Parameterization {
    /// Squared input norm each example is expected to carry.
    pub fn input_sq_norm(&self, d_in: usize) -> f64 {
        match self {
            Parameterization::Sp => d_in as f64,
            Parameterization::Interp { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of weight matrices, at least 2.
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub parameterization: Parameterization,
    /// σ_w² for every layer but the last.
    pub sigma_w2: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("depth", format!("need at least 2 layers, got {}", self.depth)));
        }
        if self.width < 1 {
            return Err(Error::invalid("width", "must be >= 1"));
        }
        if !(self.sigma_w2 >= 0.0 && self.sigma_w2.is_finite()) {
            return Err(Error::invalid("sigma_w2", format!("must be finite and >= 0, got {}", self.sigma_w2)));
        }
        if let Parameterization::Interp { s } = self.parameterization {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid("s", format!("must lie in [0, 1], got {s}")));
            }
        }
        Ok(())
    }

    /// Forward multiplier applied after each layer's matrix product.
    pub fn multipliers(&self) -> Vec<f64> {
        let n = self.width as f64;
        let mut m = vec![1.0; self.depth];
        if let Parameterization::Interp { s } = self.parameterization {
            m[0] = n.powf(s / 2.0);
            m[self.depth - 1] = n.powf(-s / 2.0);
        }
        m
    }

    /// `(rows, cols)` of each weight matrix, `W_l: fan_out × fan_in`.
    pub fn shapes(&self, d_in: usize, d_out: usize) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let rows = if l + 1 == self.depth { d_out } else { self.width };
                let cols = if l == 0 { d_in } else { self.width };
                (rows, cols)
            })
            .collect()
    }

    fn init_variances(&self, d_in: usize) -> Vec<f64> {
        let n = self.width as f64;
        (0..self.depth)
            .map(|l| {
                if l + 1 == self.depth {
                    1.0 / n
                } else if l == 0 {
                    match self.parameterization {
                        Parameterization::Sp => self.sigma_w2 / d_in as f64,
                        Parameterization::Interp { s } => self.sigma_w2 / n.powf(s),
                    }
                } else {
                    self.sigma_w2 / n
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<DMatrix<f64>>,
}

impl Params {
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Params {
            layers: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|w| w.shape()).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|w| w.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].nrows()
    }

    /// Concatenation of each layer in nalgebra's column-major storage order.
    pub fn flatten(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.layers.iter().flat_map(|w| w.iter().copied()))
    }

    pub fn from_flat(theta: &DVector<f64>, shapes: &[(usize, usize)]) -> Result<Self> {
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if theta.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, shapes need {total}",
                theta.len()
            )));
        }
        let mut offset = 0;
        let layers = shapes
            .iter()
            .map(|&(r, c)| {
                let w = DMatrix::from_column_slice(r, c, &theta.as_slice()[offset..offset + r * c]);
                offset += r * c;
                w
            })
            .collect();
        Ok(Params { layers })
    }

    /// `self + alpha·other`, layer by layer.
    pub fn axpy(&self, alpha: f64, other: &Params) -> Params {
        Params {
            layers: self.layers.iter().zip(&other.layers).map(|(a, b)| a + b * alpha).collect(),
        }
    }
}

/// Draws every layer from a centered normal with the parameterization's variance.
pub fn init_network<R: Rng + ?Sized>(cfg: &NetworkConfig, d_in: usize, d_out: usize, rng: &mut R) -> Result<Params> {
    cfg.validate()?;
    if d_in < 1 || d_out < 1 {
        return Err(Error::invalid("dims", "d_in and d_out must be >= 1"));
    }
    let layers = cfg
        .shapes(d_in, d_out)
        .into_iter()
        .zip(cfg.init_variances(d_in))
        .map(|((r, c), var)| {
            let sd = var.sqrt();
            let mut w = DMatrix::zeros(r, c);
            for v in w.iter_mut() {
                *v = sd * rng.sample::<f64, _>(StandardNormal);
            }
            w
        })
        .collect();
    Ok(Params { layers })
}

fn check_dims(params: &Params, cfg: &NetworkConfig, x: &DMatrix<f64>) -> Result<()> {
    if params.layers.len() != cfg.depth {
        return Err(Error::DimensionMismatch(format!(
            "config depth {} but {} layers",
            cfg.depth,
            params.layers.len()
        )));
    }
    if x.ncols() != params.d_in() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} features, first layer expects {}",
            x.ncols(),
            params.d_in()
        )));
    }
    for (l, w) in params.layers.windows(2).enumerate() {
        if w[1].ncols() != w[0].nrows() {
            return Err(Error::DimensionMismatch(format!("layer {} output does not feed layer {}", l + 1, l + 2)));
        }
    }
    Ok(())
}

fn activate(z: &DMatrix<f64>, act: Activation) -> DMatrix<f64> {
    match act {
        Activation::Linear => z.clone(),
        Activation::Relu => z.map(|v| v.max(0.0)),
    }
}

struct Tape {
    /// `inputs[l]` is what layer `l` multiplies: the data, then post-activations.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<DMatrix<f64>>,
    out: DMatrix<f64>,
}

fn run_forward(params: &Params, cfg: &NetworkConfig, x: &DMatrix<f64>) -> Tape {
    let m = cfg.multipliers();
    let depth = params.layers.len();
    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth - 1);
    let mut a = x.clone();
    for (l, w) in params.layers.iter().enumerate() {
        let z = (&a * w.transpose()) * m[l];
        inputs.push(a);
        if l + 1 == depth {
            return Tape { inputs, pre, out: z };
        }
        a = activate(&z, cfg.activation);
        pre.push(z);
    }
    unreachable!("depth >= 2")
}

/// Network outputs, one row per example.
pub fn forward(params: &Params, cfg: &NetworkConfig, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(params, cfg, x)?;
    Ok(run_forward(params, cfg, x).out)
}

/// `(1/2P) Σ_μ ‖f(x^μ) − y^μ‖²`.
pub fn loss(params: &Params, cfg: &NetworkConfig, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let f = forward(params, cfg, x)?;
    check_targets(&f, y)?;
    Ok((f - y).norm_squared() / (2.0 * x.nrows() as f64))
}

fn check_targets(f: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if f.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "outputs are {:?}, targets are {:?}",
            f.shape(),
            y.shape()
        )));
    }
    Ok(())
}

/// Loss and its exact gradient by reverse accumulation. The ReLU derivative
/// at 0 is taken as 0.
pub fn loss_and_grad(params: &Params, cfg: &NetworkConfig, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Params)> {
    check_dims(params, cfg, x)?;
    let tape = run_forward(params, cfg, x);
    check_targets(&tape.out, y)?;
    let p = x.nrows() as f64;
    let resid = &tape.out - y;
    let loss = resid.norm_squared() / (2.0 * p);

    let m = cfg.multipliers();
    let depth = params.layers.len();
    let mut grads: Vec<DMatrix<f64>> = Vec::with_capacity(depth);
    // g holds dL/dZ for the current layer
    let mut g = resid / p;
    for l in (0..depth).rev() {
        grads.push(g.tr_mul(&tape.inputs[l]) * m[l]);
        if l == 0 {
            break;
        }
        let mut da = (&g * &params.layers[l]) * m[l];
        if cfg.activation == Activation::Relu {
            da.zip_apply(&tape.pre[l - 1], |d, z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        g = da;
    }
    grads.reverse();
    Ok((loss, Params { layers: grads }))
}

/// Flat-vector form of [`loss_and_grad`] for curvature routines.
pub fn grad_flat(
    theta: &DVector<f64>,
    shapes: &[(usize, usize)],
    cfg: &NetworkConfig,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let params = Params::from_flat(theta, shapes)?;
    let (l, g) = loss_and_grad(&params, cfg, x, y)?;
    Ok((l, g.flatten()))
}
