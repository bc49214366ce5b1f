//! `train`, `phase-diagram` and `dataset`.

use std::io::Write;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use sharpness_core::seed;
use sharpness_train::network::init_network;
use sharpness_train::trainer::{eos_phase_diagram, PhaseAxis, PhaseOptions};
use sharpness_train::{train, Activation, LearningRate, PowerIteration, TrainOptions};

use crate::config::{self, overlay, overlay_opt, Common};
use crate::data::{self, NetArgs, NetSection, Normalize, ParamKind};
use crate::Outcome;

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// random:P,d_in,d_out | teacher:P,d_in,d_out | power-law:P,d_in,d_out,A_x,B_x,A_y,B_y |
    /// single:x_1,...,x_d,y | csv:path,d_in,d_out
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub normalize: Option<Normalize>,
    /// Standardize input and target columns before normalizing
    #[arg(long)]
    pub standardize: Option<bool>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Learning-rate constant: η = c/λ₀^H
    #[arg(long, conflicts_with = "eta")]
    pub c: Option<f64>,
    /// Absolute learning rate
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Mini-batch size (full batch when omitted)
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub measure_every: Option<usize>,
    #[arg(long)]
    pub measure_after: Option<usize>,
    /// Power-iteration cap
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Power-iteration relative tolerance (0 runs m_max iterations)
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub warm_start: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub network: NetSection,
    pub dataset: String,
    pub normalize: Normalize,
    pub standardize: bool,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub steps: usize,
    pub batch_size: Option<usize>,
    pub measure_every: usize,
    pub measure_after: usize,
    pub m_max: usize,
    pub tol: f64,
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let power = PowerIteration::default();
        TrainConfig {
            seed: 0,
            network: NetSection::default(),
            dataset: "random:256,64,1".into(),
            normalize: Normalize::Auto,
            standardize: false,
            c: None,
            eta: None,
            steps: 1000,
            batch_size: None,
            measure_every: 1,
            measure_after: 0,
            m_max: power.m_max,
            tol: power.tol,
            warm_start: true,
        }
    }
}

/// Seeds: data from `derive_seed(seed, 0)`, weights from `derive_seed(seed, 1)`,
/// power-iteration starts and batch order from `derive_seed(seed, 2)`.
pub fn train_cmd(common: &Common, args: &TrainArgs) -> Result<Outcome> {
    let mut cfg: TrainConfig = config::load(common.config.as_deref())?;
    args.net.apply(&mut cfg.network);
    overlay!(cfg, args.data; dataset, normalize, standardize);
    overlay!(cfg, args; steps, measure_every, measure_after, m_max, tol, warm_start);
    overlay_opt!(cfg, args; batch_size);
    match (args.c, args.eta) {
        (Some(c), _) => (cfg.c, cfg.eta) = (Some(c), None),
        (_, Some(eta)) => (cfg.c, cfg.eta) = (None, Some(eta)),
        _ => {}
    }
    overlay!(cfg, common; seed);
    let lr = match (cfg.c, cfg.eta) {
        (Some(_), Some(_)) => bail!("invalid value for `c`/`eta`: give one, not both"),
        (None, Some(eta)) => LearningRate::Absolute(eta),
        (c, None) => LearningRate::Constant(c.unwrap_or(1.0)),
    };
    if cfg.c.is_none() && cfg.eta.is_none() {
        cfg.c = Some(1.0);
    }

    let net = cfg.network.config();
    let data = data::build(&cfg.dataset, &net, cfg.normalize, cfg.standardize, cfg.seed)?;
    let params = init_network(&net, data.d_in(), data.d_out(), &mut seed::rng(seed::derive_seed(cfg.seed, 1)))?;
    let mut opts = TrainOptions::new(lr, cfg.steps);
    opts.batch_size = cfg.batch_size;
    opts.measure_every = cfg.measure_every;
    opts.measure_after = cfg.measure_after;
    opts.power = PowerIteration { m_max: cfg.m_max, tol: cfg.tol };
    opts.warm_start = cfg.warm_start;
    let (log, _) = train(&params, &net, &data, &opts, &mut seed::rng(seed::derive_seed(cfg.seed, 2)))?;

    let mut out = config::open_out(common.out.as_deref())?;
    log.write_csv(&mut out)?;
    out.flush()?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome { diverged: log.diverged() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    SigmaW2,
    S,
}

#[derive(Args, Debug, Clone)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Row axis
    #[arg(long, value_enum)]
    pub axis: Option<AxisKind>,
    /// Comma-separated row-axis values
    #[arg(long, value_delimiter = ',')]
    pub axis_values: Option<Vec<f64>>,
    /// Comma-separated learning-rate constants
    #[arg(long, value_delimiter = ',')]
    pub c_values: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Trailing measurements averaged per cell
    #[arg(long)]
    pub tail: Option<usize>,
    #[arg(long)]
    pub measure_every: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub seed: u64,
    pub network: NetSection,
    pub dataset: String,
    pub normalize: Normalize,
    pub standardize: bool,
    pub axis: AxisKind,
    pub axis_values: Vec<f64>,
    pub c_values: Vec<f64>,
    pub steps: usize,
    pub tail: usize,
    pub measure_every: usize,
    pub m_max: usize,
    pub tol: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        let power = PowerIteration::default();
        PhaseConfig {
            seed: 0,
            network: NetSection {
                depth: 3,
                width: 64,
                activation: Activation::Relu,
                param: ParamKind::Interp,
                s: 0.0,
                sigma_w2: 1.0,
            },
            dataset: "random:256,64,1".into(),
            normalize: Normalize::Auto,
            standardize: false,
            axis: AxisKind::SigmaW2,
            axis_values: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            c_values: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            steps: 2000,
            tail: 40,
            measure_every: 5,
            m_max: power.m_max,
            tol: power.tol,
        }
    }
}

/// Data from `derive_seed(seed, 0)`; cell `k` trains from
/// `derive_seed(seed, k)` as assigned by the sweep.
pub fn phase_cmd(common: &Common, args: &PhaseArgs) -> Result<Outcome> {
    let mut cfg: PhaseConfig = config::load(common.config.as_deref())?;
    args.net.apply(&mut cfg.network);
    overlay!(cfg, args.data; dataset, normalize, standardize);
    overlay!(cfg, args; axis, axis_values, c_values, steps, tail, measure_every, m_max, tol);
    overlay!(cfg, common; seed);

    let net = cfg.network.config();
    let data = data::build(&cfg.dataset, &net, cfg.normalize, cfg.standardize, cfg.seed)?;
    let axis = match cfg.axis {
        AxisKind::SigmaW2 => PhaseAxis::SigmaW2(cfg.axis_values.clone()),
        AxisKind::S => PhaseAxis::S(cfg.axis_values.clone()),
    };
    let opts = PhaseOptions {
        steps: cfg.steps,
        tail: cfg.tail,
        measure_every: cfg.measure_every,
        power: PowerIteration { m_max: cfg.m_max, tol: cfg.tol },
        seed: cfg.seed,
    };
    let diagram = eos_phase_diagram(&axis, &cfg.c_values, &net, &data, &opts)?;
    let mut out = config::open_out(common.out.as_deref())?;
    diagram.write_csv(&mut out)?;
    out.flush()?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome::default())
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Network used as teacher and for the input-norm convention
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the x1..,y1.. header row
    #[arg(long)]
    pub header: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub network: NetSection,
    pub dataset: String,
    pub normalize: Normalize,
    pub standardize: bool,
    pub header: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            network: NetSection::default(),
            dataset: "random:256,64,1".into(),
            normalize: Normalize::Auto,
            standardize: false,
            header: true,
        }
    }
}

pub fn dataset_cmd(common: &Common, args: &DatasetArgs) -> Result<Outcome> {
    let mut cfg: DatasetConfig = config::load(common.config.as_deref())?;
    args.net.apply(&mut cfg.network);
    overlay!(cfg, args.data; dataset, normalize, standardize);
    overlay!(cfg, args; header);
    overlay!(cfg, common; seed);

    let data = data::build(&cfg.dataset, &cfg.network.config(), cfg.normalize, cfg.standardize, cfg.seed)?;
    let mut out = config::open_out(common.out.as_deref())?;
    data.write_csv(&mut out, cfg.header)?;
    out.flush()?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome::default())
}
