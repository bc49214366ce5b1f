//! Gradient-descent training with periodic sharpness and weight-norm
//! measurements, and learning-rate × initialization phase diagrams.

use std::io::{self, Write};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sharpness_core::seed;

use crate::curvature::{sharpness_from, Curvature, PowerIteration};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{init_network, loss, loss_and_grad, NetworkConfig, Parameterization, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LearningRate {
    /// `η = c / λ₀^H`, with `λ₀^H` measured at step 0 on the full dataset.
    Constant(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lr: LearningRate,
    pub steps: usize,
    /// Mini-batch size; `None` is full-batch GD.
    pub batch_size: Option<usize>,
    pub measure_every: usize,
    /// No sharpness measurements before this step, except `λ₀^H` at step 0.
    pub measure_after: usize,
    pub power: PowerIteration,
    /// Start each power iteration from the previous top eigenvector.
    pub warm_start: bool,
    /// Loss above this (or non-finite) ends the run as diverged.
    pub divergence_loss: f64,
}

impl TrainOptions {
    pub fn new(lr: LearningRate, steps: usize) -> Self {
        TrainOptions {
            lr,
            steps,
            batch_size: None,
            measure_every: 1,
            measure_after: 0,
            power: PowerIteration::default(),
            warm_start: true,
            divergence_loss: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    /// Full-dataset loss at the parameters before this step's update.
    pub loss: f64,
    pub sharpness: Option<f64>,
    pub weight_norm_total: f64,
    pub weight_norm_layers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub eta: f64,
    pub lambda0: f64,
    pub rows: Vec<LogRow>,
    /// Step at which the loss left the finite range; the row for it is not logged.
    pub diverged_at: Option<usize>,
    /// Measurement steps at which power iteration hit `m_max` unconverged.
    pub unconverged: Vec<usize>,
}

impl TrainLog {
    /// `(step, λ^H)` at every measurement.
    pub fn sharpness_series(&self) -> Vec<(usize, f64)> {
        self.rows.iter().filter_map(|r| r.sharpness.map(|s| (r.step, s))).collect()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// `step,loss,sharpness,weight_norm_total,weight_norm_layer_1,...`; a
    /// trailing `# diverged at step t` line marks divergence.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let layers = self.rows.first().map(|r| r.weight_norm_layers.len()).unwrap_or(0);
        write!(out, "step,loss,sharpness,weight_norm_total")?;
        for l in 1..=layers {
            write!(out, ",weight_norm_layer_{l}")?;
        }
        writeln!(out)?;
        for r in &self.rows {
            let s = r.sharpness.map(|v| v.to_string()).unwrap_or_default();
            write!(out, "{},{},{s},{}", r.step, r.loss, r.weight_norm_total)?;
            for w in &r.weight_norm_layers {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        if let Some(t) = self.diverged_at {
            writeln!(out, "# diverged at step {t}")?;
        }
        Ok(())
    }
}

/// Frobenius norm of every layer and the root of their sum of squares.
pub fn weight_norms(params: &Params) -> (f64, Vec<f64>) {
    let per: Vec<f64> = params.layers.iter().map(|w| w.norm()).collect();
    let total = per.iter().map(|v| v * v).sum::<f64>().sqrt();
    (total, per)
}

fn measure<R: Rng + ?Sized>(
    params: &Params,
    cfg: &NetworkConfig,
    data: &Dataset,
    opts: &TrainOptions,
    warm: &mut Option<DVector<f64>>,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let curv = Curvature::new(params, cfg, &data.x, &data.y);
    let start = if opts.warm_start { warm.as_ref() } else { None };
    let est = sharpness_from(&curv, opts.power, start, rng)?;
    *warm = Some(est.vector);
    Ok((est.value, est.converged))
}

/// Trains from `params` and returns the log and final parameters. Sharpness is
/// always measured at step 0 to fix `λ₀^H`.
pub fn train<R: Rng + ?Sized>(
    params: &Params,
    cfg: &NetworkConfig,
    data: &Dataset,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<(TrainLog, Params)> {
    if opts.steps < 1 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    if opts.measure_every < 1 {
        return Err(Error::invalid("measure_every", "must be >= 1"));
    }
    if let Some(b) = opts.batch_size {
        if b < 1 || b > data.len() {
            return Err(Error::invalid("batch_size", format!("must lie in [1, {}], got {b}", data.len())));
        }
    }
    let mut warm = None;
    let mut unconverged = Vec::new();
    let (lambda0, ok) = measure(params, cfg, data, opts, &mut warm, rng)?;
    if !ok {
        unconverged.push(0);
    }
    let eta = match opts.lr {
        LearningRate::Constant(c) => c / lambda0,
        LearningRate::Absolute(eta) => eta,
    };
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid("learning rate", format!("η = {eta} (λ₀^H = {lambda0})")));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    let mut rows = Vec::with_capacity(opts.steps + 1);
    let mut diverged_at = None;
    let mut theta = params.clone();
    for t in 0..=opts.steps {
        let (full_loss, full_grad) = match opts.batch_size {
            None => {
                let (l, g) = loss_and_grad(&theta, cfg, &data.x, &data.y)?;
                (l, Some(g))
            }
            Some(_) => (loss(&theta, cfg, &data.x, &data.y)?, None),
        };
        if !full_loss.is_finite() || full_loss > opts.divergence_loss {
            diverged_at = Some(t);
            break;
        }
        let sharp = if t == 0 {
            Some(lambda0)
        } else if t >= opts.measure_after && t % opts.measure_every == 0 {
            let (v, ok) = measure(&theta, cfg, data, opts, &mut warm, rng)?;
            if !ok {
                unconverged.push(t);
            }
            Some(v)
        } else {
            None
        };
        let (total, per) = weight_norms(&theta);
        rows.push(LogRow {
            step: t,
            loss: full_loss,
            sharpness: sharp,
            weight_norm_total: total,
            weight_norm_layers: per,
        });
        if t == opts.steps {
            break;
        }
        let grad = match (full_grad, opts.batch_size) {
            (Some(g), _) => g,
            (None, Some(b)) => {
                if cursor + b > data.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let batch = data.subset(&order[cursor..cursor + b]);
                cursor += b;
                loss_and_grad(&theta, cfg, &batch.x, &batch.y)?.1
            }
            (None, None) => unreachable!(),
        };
        theta = theta.axpy(-eta, &grad);
    }
    let log = TrainLog {
        eta,
        lambda0,
        rows,
        diverged_at,
        unconverged,
    };
    Ok((log, theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum PhaseAxis {
    SigmaW2(Vec<f64>),
    /// Interpolation parameter `s`; the template must use `Interp`.
    S(Vec<f64>),
}

impl PhaseAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            PhaseAxis::SigmaW2(v) | PhaseAxis::S(v) => v,
        }
    }

    fn apply(&self, template: &NetworkConfig, v: f64) -> NetworkConfig {
        let mut cfg = *template;
        match self {
            PhaseAxis::SigmaW2(_) => cfg.sigma_w2 = v,
            PhaseAxis::S(_) => cfg.parameterization = Parameterization::Interp { s: v },
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub axis1: f64,
    pub c: f64,
    /// `η·λ̄^H/2` over the tail; `NaN` when diverged.
    pub value: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub axis1: Vec<f64>,
    pub c: Vec<f64>,
    /// Row-major: `cells[i * c.len() + j]` is `(axis1[i], c[j])`.
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, i: usize, j: usize) -> &PhaseCell {
        &self.cells[i * self.c.len() + j]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "axis1,c,value,diverged")?;
        for c in &self.cells {
            writeln!(out, "{},{},{},{}", c.axis1, c.c, c.value, c.diverged)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOptions {
    pub steps: usize,
    /// Number of trailing sharpness measurements averaged.
    pub tail: usize,
    pub measure_every: usize,
    pub power: PowerIteration,
    pub seed: u64,
}

/// Trains one network per `(axis1, c)` cell, each from a seed derived from
/// `opts.seed` and the cell index, and reports `η·λ̄^H/2`.
pub fn eos_phase_diagram(
    axis1: &PhaseAxis,
    c_grid: &[f64],
    template: &NetworkConfig,
    data: &Dataset,
    opts: &PhaseOptions,
) -> Result<PhaseDiagram> {
    if axis1.values().is_empty() || c_grid.is_empty() {
        return Err(Error::invalid("grid", "both axes need at least one value"));
    }
    if opts.tail < 1 || opts.tail * opts.measure_every > opts.steps {
        return Err(Error::invalid("tail", "need 1 <= tail·measure_every <= steps"));
    }
    if let PhaseAxis::S(_) = axis1 {
        if !matches!(template.parameterization, Parameterization::Interp { .. }) {
            return Err(Error::invalid("axis1", "an s axis needs an interpolating template"));
        }
    }
    let a_vals = axis1.values().to_vec();
    let jobs: Vec<(usize, usize)> = (0..a_vals.len()).flat_map(|i| (0..c_grid.len()).map(move |j| (i, j))).collect();
    let cells = jobs
        .into_par_iter()
        .map(|(i, j)| -> Result<PhaseCell> {
            let cfg = axis1.apply(template, a_vals[i]);
            let cell_seed = seed::derive_seed(opts.seed, (i * c_grid.len() + j) as u64);
            let mut rng = seed::rng(cell_seed);
            let params = init_network(&cfg, data.d_in(), data.d_out(), &mut rng)?;
            let mut t_opts = TrainOptions::new(LearningRate::Constant(c_grid[j]), opts.steps);
            t_opts.measure_every = opts.measure_every;
            t_opts.measure_after = opts.steps + 1 - opts.tail * opts.measure_every;
            t_opts.power = opts.power;
            let (log, _) = train(&params, &cfg, data, &t_opts, &mut rng)?;
            let series = log.sharpness_series();
            let tail: Vec<f64> = series.iter().rev().take(opts.tail).map(|(_, v)| *v).collect();
            let (value, diverged) = if log.diverged() || tail.len() < opts.tail {
                (f64::NAN, true)
            } else {
                let mean = tail.iter().sum::<f64>() / tail.len() as f64;
                (log.eta * mean / 2.0, false)
            };
            Ok(PhaseCell {
                axis1: a_vals[i],
                c: c_grid[j],
                value,
                diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseDiagram {
        axis1: a_vals,
        c: c_grid.to_vec(),
        cells,
    })
}
