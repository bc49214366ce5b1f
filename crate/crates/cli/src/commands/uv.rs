//! `uv-trajectory`, `uv-portrait`, `fixed-points` and `uv-bifurcation`.

use std::io::Write;

use anyhow::{bail, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use sharpness_core::eos::{bifurcation, BifurcationConfig, BifurcationInit, MapKind};
use sharpness_core::fixed_points::{critical_rates, fixed_points, line_lambda_min, reports_to_json};
use sharpness_core::portrait::{nullclines, vector_field, GridSpec};
use sharpness_core::uv::{observe, sample_init, simulate, FunctionState, Termination, UvHyper};
use sharpness_core::{seed, DEFAULT_DIVERGENCE_THRESHOLD};

use crate::config::{self, overlay, overlay_opt, Common};
use crate::Outcome;

#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub eta: Option<f64>,
    /// Input norm ‖x‖
    #[arg(long)]
    pub xnorm: Option<f64>,
    /// Effective width n_eff
    #[arg(long)]
    pub neff: Option<f64>,
    /// Target
    #[arg(long)]
    pub y: Option<f64>,
}

macro_rules! hyper_fields {
    ($name:ident) => {
        impl $name {
            fn hyper(&self) -> Result<UvHyper<f64>> {
                Ok(UvHyper::new(self.eta, self.xnorm, self.neff, self.y)?)
            }

            fn apply_hyper(&mut self, a: &HyperArgs) {
                overlay!(self, a; eta, xnorm, neff, y);
            }
        }
    };
}

#[derive(Args, Debug, Clone)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Initial residual Δf₀; with --lam0 replaces the weight draw
    #[arg(long)]
    pub df0: Option<f64>,
    #[arg(long)]
    pub lam0: Option<f64>,
    /// Hidden width of the drawn weights
    #[arg(long)]
    pub width: Option<usize>,
    /// Width exponent: n_eff = width^(1-p)
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub eta: f64,
    pub xnorm: f64,
    /// Overwritten by `width^(1-p)` when the state is drawn from weights.
    pub neff: f64,
    pub y: f64,
    pub df0: Option<f64>,
    pub lam0: Option<f64>,
    pub width: usize,
    pub p: f64,
    pub sigma_w2: f64,
    pub steps: usize,
    pub threshold: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            seed: 0,
            eta: 0.45,
            xnorm: 1.0,
            neff: 1.0,
            y: 2.0,
            df0: None,
            lam0: None,
            width: 512,
            p: 1.0,
            sigma_w2: 1.0,
            steps: 1000,
            threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

hyper_fields!(TrajectoryConfig);

pub fn trajectory(common: &Common, args: &TrajectoryArgs) -> Result<Outcome> {
    let mut cfg: TrajectoryConfig = config::load(common.config.as_deref())?;
    cfg.apply_hyper(&args.hyper);
    overlay!(cfg, args; width, p, sigma_w2, steps, threshold);
    overlay_opt!(cfg, args; df0, lam0);
    overlay!(cfg, common; seed);

    let (s0, h) = match (cfg.df0, cfg.lam0) {
        (Some(df), Some(lam)) => (FunctionState::new(df, lam), cfg.hyper()?),
        (None, None) => {
            // one-dimensional input x = ‖x‖·e₁
            let w = sample_init::<f64, _>(&mut seed::rng(cfg.seed), cfg.width, cfg.p, cfg.sigma_w2, 1)?;
            let x = [cfg.xnorm];
            let h = w.hyper(&x, cfg.y, cfg.eta)?;
            cfg.neff = h.n_eff;
            (observe(&w, &x, cfg.y)?, h)
        }
        _ => bail!("invalid value for `df0`/`lam0`: give both or neither"),
    };
    let traj = simulate(s0, &h, cfg.steps, cfg.threshold);
    let mut out = config::open_out(common.out.as_deref())?;
    traj.write_csv(&mut out)?;
    if let Termination::Diverged { step } = traj.terminated {
        writeln!(out, "# diverged at step {step}")?;
    }
    out.flush()?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome { diverged: traj.diverged() })
}

#[derive(Args, Debug, Clone)]
pub struct PortraitArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub df_min: Option<f64>,
    #[arg(long)]
    pub df_max: Option<f64>,
    #[arg(long)]
    pub lam_min: Option<f64>,
    #[arg(long)]
    pub lam_max: Option<f64>,
    /// Cells per axis
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Map applications per arrow (1 or 2)
    #[arg(long)]
    pub steps: Option<usize>,
    /// Label cells by region (forward simulation per cell)
    #[arg(long)]
    pub classify: Option<bool>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub nullcline_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortraitConfig {
    pub seed: u64,
    pub eta: f64,
    pub xnorm: f64,
    pub neff: f64,
    pub y: f64,
    pub df_min: f64,
    pub df_max: f64,
    pub lam_min: f64,
    pub lam_max: f64,
    pub resolution: usize,
    pub steps: usize,
    pub classify: bool,
    pub horizon: usize,
    pub threshold: f64,
    pub nullcline_samples: usize,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        PortraitConfig {
            seed: 0,
            eta: 0.55,
            xnorm: 1.0,
            neff: 1.0,
            y: 2.0,
            df_min: -4.0,
            df_max: 4.0,
            lam_min: 0.0,
            lam_max: 10.0,
            resolution: 40,
            steps: 1,
            classify: true,
            horizon: sharpness_core::portrait::DEFAULT_HORIZON,
            threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            nullcline_samples: 400,
        }
    }
}

hyper_fields!(PortraitConfig);

pub fn portrait(common: &Common, args: &PortraitArgs) -> Result<Outcome> {
    let out = config::require_out(common, "uv-portrait")?;
    let mut cfg: PortraitConfig = config::load(common.config.as_deref())?;
    cfg.apply_hyper(&args.hyper);
    overlay!(cfg, args; df_min, df_max, lam_min, lam_max, resolution, steps, classify, horizon, threshold, nullcline_samples);
    overlay!(cfg, common; seed);
    if cfg.nullcline_samples < 2 {
        bail!("invalid value for `nullcline_samples`: must be >= 2");
    }

    let h = cfg.hyper()?;
    let spec = GridSpec {
        df_range: (cfg.df_min, cfg.df_max),
        lam_range: (cfg.lam_min, cfg.lam_max),
        resolution: cfg.resolution,
    };
    let mut grid = vector_field(&spec, &h, cfg.steps)?;
    if cfg.classify {
        grid.classify(&h, cfg.horizon, cfg.threshold);
    }
    let mut w = config::create(out)?;
    grid.write_csv(&mut w)?;
    w.flush()?;

    let n = cfg.nullcline_samples;
    let dfs: Vec<f64> = (0..n)
        .map(|i| cfg.df_min + (cfg.df_max - cfg.df_min) * i as f64 / (n - 1) as f64)
        .collect();
    let mut w = config::create(&config::sibling(out, "nullclines.csv"))?;
    nullclines(&h, &dfs).write_csv(&mut w)?;
    w.flush()?;
    config::write_sidecar(Some(out), &cfg)?;
    Ok(Outcome::default())
}

#[derive(Args, Debug, Clone)]
pub struct FixedPointsArgs {
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// λ of the reported zero-loss line point (default: the lowest reachable)
    #[arg(long)]
    pub line_lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointsConfig {
    pub seed: u64,
    pub eta: f64,
    pub xnorm: f64,
    pub neff: f64,
    pub y: f64,
    pub line_lambda: Option<f64>,
}

impl Default for FixedPointsConfig {
    fn default() -> Self {
        FixedPointsConfig {
            seed: 0,
            eta: 0.5,
            xnorm: 1.0,
            neff: 1.0,
            y: 2.0,
            line_lambda: None,
        }
    }
}

hyper_fields!(FixedPointsConfig);

pub fn fixed_points_cmd(common: &Common, args: &FixedPointsArgs) -> Result<Outcome> {
    let mut cfg: FixedPointsConfig = config::load(common.config.as_deref())?;
    cfg.apply_hyper(&args.hyper);
    overlay_opt!(cfg, args; line_lambda);
    overlay!(cfg, common; seed);

    let h = cfg.hyper()?;
    let line = cfg.line_lambda.unwrap_or_else(|| line_lambda_min(&h));
    let reports = fixed_points(&h, line)?;
    let rates = critical_rates(cfg.xnorm, cfg.neff, cfg.y, Some(line)).ok();
    let report = serde_json::json!({
        "eta": cfg.eta,
        "xnorm": cfg.xnorm,
        "neff": cfg.neff,
        "y": cfg.y,
        "critical_rates": rates,
        "fixed_points": reports_to_json(&reports),
    });
    config::write_json(common.out.as_deref(), &report)?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome::default())
}

#[derive(Args, Debug, Clone)]
pub struct BifurcationArgs {
    /// manifold | full
    #[arg(long)]
    pub map: Option<MapKind>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    /// Number of η samples
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub xnorm: Option<f64>,
    #[arg(long)]
    pub neff: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    /// Starting Δf (manifold) or Δf₀ (full map, with --init-lam)
    #[arg(long)]
    pub init_df: Option<f64>,
    #[arg(long)]
    pub init_lam: Option<f64>,
    #[arg(long)]
    pub transient: Option<usize>,
    #[arg(long)]
    pub record: Option<usize>,
    #[arg(long)]
    pub bin_tol: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_period: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationCliConfig {
    pub seed: u64,
    pub map: MapKind,
    pub eta_min: f64,
    pub eta_max: f64,
    pub count: usize,
    pub xnorm: f64,
    pub neff: f64,
    pub y: f64,
    pub init_df: Option<f64>,
    pub init_lam: Option<f64>,
    pub transient: usize,
    pub record: usize,
    pub bin_tol: f64,
    pub threshold: f64,
    pub max_period: usize,
}

impl Default for BifurcationCliConfig {
    fn default() -> Self {
        let base = BifurcationConfig::<f64>::new(MapKind::Manifold, (0.3, 1.0), 400);
        BifurcationCliConfig {
            seed: 0,
            map: MapKind::Manifold,
            eta_min: 0.3,
            eta_max: 1.0,
            count: 400,
            xnorm: 1.0,
            neff: 1.0,
            y: 2.0,
            init_df: None,
            init_lam: None,
            transient: base.transient,
            record: base.record,
            bin_tol: base.bin_tol,
            threshold: base.threshold,
            max_period: base.max_period,
        }
    }
}

pub fn bifurcation_cmd(common: &Common, args: &BifurcationArgs) -> Result<Outcome> {
    let out = config::require_out(common, "uv-bifurcation")?;
    let mut cfg: BifurcationCliConfig = config::load(common.config.as_deref())?;
    overlay!(cfg, args; map, eta_min, eta_max, count, xnorm, neff, y, transient, record, bin_tol, threshold, max_period);
    overlay_opt!(cfg, args; init_df, init_lam);
    overlay!(cfg, common; seed);

    let mut bc = BifurcationConfig::new(cfg.map, (cfg.eta_min, cfg.eta_max), cfg.count);
    bc.init = match (cfg.map, cfg.init_df, cfg.init_lam) {
        (_, None, None) => bc.init,
        (MapKind::Manifold, Some(df), None) => BifurcationInit::Scalar(df),
        (_, Some(df), Some(lam)) => BifurcationInit::State(FunctionState::new(df, lam)),
        (MapKind::Full, Some(_), None) | (_, None, Some(_)) => {
            bail!("invalid value for `init_df`/`init_lam`: the full map needs both")
        }
    };
    bc.transient = cfg.transient;
    bc.record = cfg.record;
    bc.bin_tol = cfg.bin_tol;
    bc.threshold = cfg.threshold;
    bc.max_period = cfg.max_period;
    let template = UvHyper::new(cfg.eta_min, cfg.xnorm, cfg.neff, cfg.y)?;
    let diagram = bifurcation(&template, &bc)?;

    let mut w = config::create(out)?;
    diagram.write_csv(&mut w)?;
    w.flush()?;
    let mut w = config::create(&config::sibling(out, "summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &diagram.summary_json())?;
    writeln!(w)?;
    w.flush()?;
    config::write_sidecar(Some(out), &cfg)?;
    Ok(Outcome::default())
}
