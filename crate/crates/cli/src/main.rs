//! `pwlab` - reproducible pilot-wave / Bell-test experiments.
//!
//! Every subcommand reads an optional TOML config, derives all randomness
//! from one master seed, and writes CSV/JSON artifacts plus a checksummed
//! manifest into the output directory. Given the same config and seed, every
//! output byte outside the manifest timestamps is identical across runs.

mod artifacts;
mod config;
mod experiments;
mod svg;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;

use config::{ExperimentKind, RunConfig};

#[derive(Parser)]
#[command(name = "pwlab", version, about = "Pilot-wave laboratory: trajectory engine, ring-lattice local models, and Bell/CHSH ensembles")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(clap::Subcommand)]
enum Experiment {
    /// Closed-form singlet correlators and the CHSH combination: E = -cos(theta),
    /// local bound 2, quantum value 2*sqrt(2).
    Oracle(CommonArgs),
    /// Pilot-wave CHSH ensemble: Born-sampled trajectories through
    /// Stern-Gerlach readout; estimates E(a,b) per pair and S with error bars.
    PwChsh(CommonArgs),
    /// Homogeneous ring-lattice CHSH ensemble: a fully local model whose
    /// mass-density readout reproduces the pilot-wave statistics, violating
    /// the local bound via settings-lambda correlations.
    LpwChsh(CommonArgs),
    /// Homogeneous lattice vs reference engine: mass-density support match,
    /// position drift, and fast-vs-faithful bit identity.
    LpwEquivalence(CommonArgs),
    /// Diffusion relaxation of an inhomogeneous lattice: gradient-norm decay
    /// against the discrete heat-kernel rate 2*kappa*k^2.
    Relax(CommonArgs),
    /// Settings-independence check: chi-square independence between binned
    /// lambda snapshots and setting choices (rho(lambda|a,b) vs rho(lambda)).
    SiTest(CommonArgs),
    /// Brute-force local-hidden-variable bound: max CHSH over all 16
    /// deterministic strategies plus random mixtures (never exceeds 2).
    LhvBruteforce(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration; defaults applied for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override; all per-run streams derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also emit SVG plots.
    #[arg(long)]
    plots: bool,
}

impl Experiment {
    fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::Oracle(_) => ExperimentKind::Oracle,
            Experiment::PwChsh(_) => ExperimentKind::PwChsh,
            Experiment::LpwChsh(_) => ExperimentKind::LpwChsh,
            Experiment::LpwEquivalence(_) => ExperimentKind::LpwEquivalence,
            Experiment::Relax(_) => ExperimentKind::Relax,
            Experiment::SiTest(_) => ExperimentKind::SiTest,
            Experiment::LhvBruteforce(_) => ExperimentKind::LhvBruteforce,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Experiment::Oracle(a)
            | Experiment::PwChsh(a)
            | Experiment::LpwChsh(a)
            | Experiment::LpwEquivalence(a)
            | Experiment::Relax(a)
            | Experiment::SiTest(a)
            | Experiment::LhvBruteforce(a) => a,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let kind = cli.experiment.kind();
    let args = cli.experiment.args();

    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text).map_err(anyhow::Error::msg)?
        }
        None => RunConfig::default(),
    };
    if let Some(kind_from_config) = config.experiment {
        if kind_from_config != kind {
            anyhow::bail!(
                "config selects experiment '{}' but the subcommand is '{}'",
                kind_from_config.name(),
                kind.name()
            );
        }
    }
    config.experiment = Some(kind);
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }

    experiments::execute(&config, &args.out, args.plots)?;
    println!(
        "{}: artifacts written to {}",
        kind.name(),
        args.out.display()
    );
    Ok(())
}
