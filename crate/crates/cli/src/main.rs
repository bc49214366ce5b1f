//! `sharplab`: seeded, config-driven runs of the UV-model analyses and network
//! training, writing CSV and JSON.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod data;

use commands::spectrum::SpectrumArgs;
use commands::train::{DatasetArgs, PhaseArgs, TrainArgs};
use commands::uv::{BifurcationArgs, FixedPointsArgs, PortraitArgs, TrajectoryArgs};
use config::Common;

#[derive(Parser, Debug)]
#[command(name = "sharplab", version, about = "Edge-of-stability dynamics: UV model and trained networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterate the function-space map from a state or from drawn weights
    #[command(allow_negative_numbers = true)]
    UvTrajectory(TrajectoryArgs),
    /// Vector field, region labels and nullclines on a (Δf, λ) grid
    #[command(allow_negative_numbers = true)]
    UvPortrait(PortraitArgs),
    /// Fixed points with Jacobian eigenpairs and critical rates, as JSON
    #[command(allow_negative_numbers = true)]
    FixedPoints(FixedPointsArgs),
    /// Late-time λ against η for the manifold or full map
    #[command(allow_negative_numbers = true)]
    UvBifurcation(BifurcationArgs),
    /// Train a network and log loss, sharpness and weight norms
    #[command(allow_negative_numbers = true)]
    Train(TrainArgs),
    /// η·λ̄^H/2 over a grid of initialization and learning-rate constants
    #[command(allow_negative_numbers = true)]
    PhaseDiagram(PhaseArgs),
    /// Power spectrum of a CSV column
    Spectrum(SpectrumArgs),
    /// Generate a dataset as CSV
    #[command(allow_negative_numbers = true)]
    Dataset(DatasetArgs),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Outcome {
    pub diverged: bool,
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    if let Some(k) = cli.common.threads {
        if k == 0 {
            anyhow::bail!("invalid value for `threads`: must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let c = &cli.common;
    match &cli.command {
        Command::UvTrajectory(a) => commands::uv::trajectory(c, a),
        Command::UvPortrait(a) => commands::uv::portrait(c, a),
        Command::FixedPoints(a) => commands::uv::fixed_points_cmd(c, a),
        Command::UvBifurcation(a) => commands::uv::bifurcation_cmd(c, a),
        Command::Train(a) => commands::train::train_cmd(c, a),
        Command::PhaseDiagram(a) => commands::train::phase_cmd(c, a),
        Command::Spectrum(a) => commands::spectrum::spectrum_cmd(c, a),
        Command::Dataset(a) => commands::train::dataset_cmd(c, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(o) if o.diverged && cli.common.strict => {
            eprintln!("error: run diverged");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
