//! Hessian-vector products by central differences of the exact gradient, and
//! power iteration for the dominant Hessian eigenvalue.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{grad_flat, NetworkConfig, Params};

/// Everything needed to evaluate gradients at a fixed point `θ`.
pub struct Curvature<'a> {
    theta: DVector<f64>,
    shapes: Vec<(usize, usize)>,
    cfg: &'a NetworkConfig,
    x: &'a DMatrix<f64>,
    y: &'a DMatrix<f64>,
    eps: f64,
}

impl<'a> Curvature<'a> {
    pub fn new(params: &Params, cfg: &'a NetworkConfig, x: &'a DMatrix<f64>, y: &'a DMatrix<f64>) -> Self {
        let theta = params.flatten();
        let eps = 1e-4 * (1.0 + theta.norm());
        Curvature {
            theta,
            shapes: params.shapes(),
            cfg,
            x,
            y,
            eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `(∇L(θ + εv̂) − ∇L(θ − εv̂))/(2ε)·‖v‖` with `ε = 1e-4·(1 + ‖θ‖)`.
    pub fn hvp(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.theta.len() {
            return Err(Error::DimensionMismatch(format!(
                "direction has {} entries, parameters {}",
                v.len(),
                self.theta.len()
            )));
        }
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroDirection);
        }
        let step = v * (self.eps / norm);
        let (_, gp) = grad_flat(&(&self.theta + &step), &self.shapes, self.cfg, self.x, self.y)?;
        let (_, gm) = grad_flat(&(&self.theta - &step), &self.shapes, self.cfg, self.x, self.y)?;
        Ok((gp - gm) * (norm / (2.0 * self.eps)))
    }
}

pub fn hvp(
    params: &Params,
    cfg: &NetworkConfig,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Curvature::new(params, cfg, x, y).hvp(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub m_max: usize,
    /// Relative change between successive Rayleigh quotients that ends the
    /// iteration. Zero runs exactly `m_max` iterations.
    pub tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration { m_max: 100, tol: 1e-6 }
    }
}

impl PowerIteration {
    /// Fixed 20 iterations.
    pub fn fixed_twenty() -> Self {
        PowerIteration { m_max: 20, tol: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessEstimate {
    /// Dominant-magnitude eigenvalue; may be negative.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Last unit iterate, usable as a warm start.
    pub vector: DVector<f64>,
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Power iteration on `H` from `start` (or a seeded random unit vector).
pub fn sharpness_from<R: Rng + ?Sized>(
    curv: &Curvature<'_>,
    opts: PowerIteration,
    start: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<SharpnessEstimate> {
    if opts.m_max < 1 {
        return Err(Error::invalid("m_max", "must be >= 1"));
    }
    let mut v = match start {
        Some(s) if s.len() == curv.dim() && s.norm() > 0.0 => s.normalize(),
        _ => random_unit(curv.dim(), rng),
    };
    let mut estimate = f64::NAN;
    for it in 1..=opts.m_max {
        let hv = curv.hvp(&v)?;
        let rq = v.dot(&hv);
        let norm = hv.norm();
        let done = it > 1 && (rq - estimate).abs() <= opts.tol * rq.abs();
        estimate = rq;
        if norm == 0.0 || !norm.is_finite() {
            // H v = 0: v is in the null space and 0 is the best estimate
            return Ok(SharpnessEstimate {
                value: if norm == 0.0 { 0.0 } else { estimate },
                iterations: it,
                converged: norm == 0.0,
                vector: v,
            });
        }
        if done {
            return Ok(SharpnessEstimate {
                value: estimate,
                iterations: it,
                converged: true,
                vector: v,
            });
        }
        v = hv / norm;
    }
    Ok(SharpnessEstimate {
        value: estimate,
        iterations: opts.m_max,
        converged: opts.tol == 0.0,
        vector: v,
    })
}

pub fn sharpness<R: Rng + ?Sized>(
    params: &Params,
    cfg: &NetworkConfig,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    opts: PowerIteration,
    rng: &mut R,
) -> Result<SharpnessEstimate> {
    sharpness_from(&Curvature::new(params, cfg, x, y), opts, None, rng)
}
