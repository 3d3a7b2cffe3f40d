//! `mutsel <subcommand> --config <path> [--out <dir>] [--seed <n>]`
//!
//! Exit status is 0 when every verdict passes, 1 when some verdict fails and
//! 2 when the run could not be carried out.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mutsel_core::harness::{run, Config, ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(
    name = "mutsel",
    version,
    about = "Numerical experiments for nonlocal mutation-selection equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenpair of the linear operator.
    Eig(Common),
    /// Spectral gap of the weighted Dirichlet form.
    Gap(Common),
    /// Time integration with entropy diagnostics.
    Simulate(Common),
    /// Positive steady state or its nonexistence.
    Steady(Common),
    /// Entropy identity, Lyapunov monotonicity and gap bound on a trajectory.
    Entropy {
        #[command(flatten)]
        common: Common,
        /// Snapshot CSV written by `simulate` with `output.snapshots = true`.
        #[arg(long)]
        traj: Option<PathBuf>,
    },
    /// Perturbed-kernel sweep.
    Sweep(Common),
    /// Refinement studies for the operator, the time stepper and the identity.
    Convergence(Common),
    /// Existence of steady states across constant growth rates.
    Dichotomy(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    let (scenario, common, traj) = match cli.command {
        Command::Eig(c) => (Scenario::Eig, c, None),
        Command::Gap(c) => (Scenario::Gap, c, None),
        Command::Simulate(c) => (Scenario::Simulate, c, None),
        Command::Steady(c) => (Scenario::Steady, c, None),
        Command::Entropy { common, traj } => (Scenario::EntropyCheck, common, traj),
        Command::Sweep(c) => (Scenario::EpsilonSweep, c, None),
        Command::Convergence(c) => (Scenario::ConvergenceStudy, c, None),
        Command::Dichotomy(c) => (Scenario::Dichotomy, c, None),
    };
    let config = Config::load(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut exp = ExperimentConfig::with_scenario(scenario, config)
        .with_context(|| format!("in {}", common.config.display()))?;
    if let Some(out) = common.out {
        exp.out_dir = out;
    }
    if let Some(seed) = common.seed {
        exp.seed = seed;
    }
    exp.traj = traj;
    let report = run(&exp).with_context(|| format!("running {}", common.config.display()))?;
    println!("{}", report.to_pretty());
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
