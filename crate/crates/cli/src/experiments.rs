//! Experiment execution: one function per subcommand, producing CSV/JSON
//! artifacts plus optional SVG plots, all under one output directory with a
//! checksummed manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use pwlab_core::engine::{prepare_singlet_state, run_measurement, TrajectoryTrace};
use pwlab_core::field::born_sample;
use pwlab_core::harness::{
    chsh_report, run_bell_ensemble, si_test, ChshReport, ModelSpec, RunLedger, SiTestReport,
};
use pwlab_core::lattice::{
    compare_to_reference, evolve_lattice, init_homogeneous, init_single_mode, mass_density,
    CellState, EvolutionContext, EvolveMode, LatticeSweep, MassDensity, RingSpec,
};
use pwlab_core::oracle::{
    brute_force_lhv_max, chsh_value, mixture_correlators, quantum_correlation,
    quantum_correlators, ChshForm, Correlators, DeterministicStrategy, SettingPair,
    StrategyMixture,
};
use pwlab_core::relax::{
    decay_rate_fit, GradientDiagnostics, GradientKind, RelaxationDriver, RelaxationParams,
};
use pwlab_core::{grid::GridSpec, rng, snapshot};

use crate::artifacts::ArtifactSink;
use crate::config::{ExperimentKind, RunConfig};
use crate::svg::{line_plot, Series};

/// Run the configured experiment, leaving all artifacts in `out_dir`.
pub fn execute(config: &RunConfig, out_dir: &Path, plots: bool) -> Result<()> {
    let experiment = config
        .experiment
        .context("no experiment selected (subcommand or config key)")?;
    config.validate().map_err(anyhow::Error::msg)?;
    let mut sink = ArtifactSink::new(out_dir)?;
    let flagged = match experiment {
        ExperimentKind::Oracle => oracle(config, &mut sink, plots)?,
        ExperimentKind::PwChsh => bell_chsh(config, &mut sink, plots, false)?,
        ExperimentKind::LpwChsh => bell_chsh(config, &mut sink, plots, true)?,
        ExperimentKind::LpwEquivalence => lpw_equivalence(config, &mut sink)?,
        ExperimentKind::Relax => relax(config, &mut sink, plots)?,
        ExperimentKind::SiTest => si_experiment(config, &mut sink)?,
        ExperimentKind::LhvBruteforce => lhv_bruteforce(config, &mut sink)?,
    };
    sink.finalize(config, experiment.name(), flagged)?;
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    correlators: Correlators,
    s_two_term: f64,
    s_one_term: f64,
    local_bound: f64,
    quantum_value: f64,
}

fn oracle(config: &RunConfig, sink: &mut ArtifactSink, plots: bool) -> Result<usize> {
    let quad = config.chsh_quad();
    let correlators = quantum_correlators(&quad);
    let report = OracleReport {
        correlators,
        s_two_term: chsh_value(&correlators, ChshForm::TwoTerm).map_err(anyhow::Error::from)?,
        s_one_term: chsh_value(&correlators, ChshForm::OneTerm).map_err(anyhow::Error::from)?,
        local_bound: 2.0,
        quantum_value: 2.0 * std::f64::consts::SQRT_2,
    };
    sink.write_json("oracle_report.json", &report)?;
    if plots {
        let curve: Vec<(f64, f64)> = (0..=256)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 256.0;
                (
                    theta,
                    quantum_correlation(pwlab_core::oracle::Angle::new(theta)),
                )
            })
            .collect();
        let svg = line_plot(
            "Singlet correlator",
            "relative angle (rad)",
            "E",
            &[Series {
                label: "-cos(theta)".into(),
                color: "#1f77b4",
                points: curve,
            }],
            &[(0.0, "")],
            false,
        );
        sink.write("plots/correlator.svg", svg.as_bytes())?;
    }
    Ok(0)
}

fn write_ledger_and_report(
    sink: &mut ArtifactSink,
    ledger: &RunLedger,
    report: &ChshReport,
    plots: bool,
) -> Result<()> {
    let mut csv = Vec::new();
    snapshot::write_ledger_csv(&mut csv, ledger)?;
    sink.write("ledger.csv", &csv)?;
    sink.write_json("chsh_report.json", report)?;
    if plots {
        // estimated correlators against the singlet curve
        let quad = ledger.quad;
        let curve: Vec<(f64, f64)> = (0..=256)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 256.0;
                (
                    theta,
                    quantum_correlation(pwlab_core::oracle::Angle::new(theta)),
                )
            })
            .collect();
        let estimates: Vec<(f64, f64)> = report
            .pairs
            .iter()
            .map(|p| {
                let theta = quad.pair(p.pair.0, p.pair.1).theta().radians();
                (theta, p.e_hat)
            })
            .collect();
        let svg = line_plot(
            "Estimated correlators vs singlet prediction",
            "relative angle (rad)",
            "E",
            &[
                Series {
                    label: "-cos(theta)".into(),
                    color: "#1f77b4",
                    points: curve,
                },
                Series {
                    label: "estimates".into(),
                    color: "#d62728",
                    points: estimates,
                },
            ],
            &[],
            false,
        );
        sink.write("plots/correlators.svg", svg.as_bytes())?;

        let s_series = vec![(0.0, report.s), (1.0, report.s)];
        let svg = line_plot(
            "CHSH value",
            "",
            "S",
            &[Series {
                label: format!("S = {:.4} +- {:.4}", report.s, report.s_stderr),
                color: "#d62728",
                points: s_series,
            }],
            &[(2.0, "local bound"), (2.0 * std::f64::consts::SQRT_2, "quantum value")],
            false,
        );
        sink.write("plots/chsh.svg", svg.as_bytes())?;
    }
    Ok(())
}

fn bell_chsh(
    config: &RunConfig,
    sink: &mut ArtifactSink,
    plots: bool,
    lattice: bool,
) -> Result<usize> {
    let params = config.engine_params();
    let model = if lattice {
        ModelSpec::LocalLattice {
            engine: params,
            cells: config.run.cells,
        }
    } else {
        ModelSpec::PilotWave(params)
    };
    let ledger = run_bell_ensemble(
        &model,
        &config.chsh_quad(),
        &config.setting_policy(),
        config.run.n_runs,
        config.master_seed,
    )?;
    let report = chsh_report(&ledger)?;
    write_ledger_and_report(sink, &ledger, &report, plots)?;
    Ok(report.flagged_runs)
}

#[derive(Serialize)]
struct EquivalenceReport {
    cells: usize,
    steps: usize,
    max_deviation_cells: usize,
    position_drift: f64,
    fast_faithful_identical: bool,
}

fn lpw_equivalence(config: &RunConfig, sink: &mut ArtifactSink) -> Result<usize> {
    let params = config.engine_params();
    let settings = SettingPair::new(config.quad.a, config.quad.b);
    let ring = RingSpec::for_grid(&params.grid, config.run.cells)?;
    let steps_limit = (params.schedule.t_read / params.dt).round() as usize;
    let steps = config.run.steps.min(steps_limit);

    let phi = prepare_singlet_state(&params.grid, params.schedule.sigma0)?;
    let mut r = rng::stream(config.master_seed, rng::SALT_BORN);
    let z = born_sample(&phi, &mut r);
    let template = CellState::new(phi.clone(), z);

    let ctx = EvolutionContext::new(
        params.grid,
        params.constants,
        settings,
        params.schedule,
        params.dt,
    )?;
    let mut faithful = init_homogeneous(&template, ring)?;
    let mut trace: Vec<(f64, MassDensity)> = vec![(0.0, mass_density(&faithful))];
    let mut sweep = LatticeSweep::new(&ctx, &faithful);
    for _ in 0..steps {
        sweep.step(&mut faithful)?;
        trace.push((faithful.t(), mass_density(&faithful)));
    }

    let mut fast = init_homogeneous(&template, ring)?;
    for _ in 0..steps {
        evolve_lattice(&mut fast, &ctx, EvolveMode::Fast)?;
    }

    let reference = run_measurement(
        &phi,
        settings,
        &params.schedule,
        &params.constants,
        &[z],
        params.dt,
        Some(1),
    )?;
    let full = &reference.traces.as_ref().unwrap()[0];
    let mut truncated = TrajectoryTrace::default();
    for &(t, c) in full.samples().iter().take(steps + 1) {
        truncated.push(t, c);
    }
    let max_deviation = compare_to_reference(&trace, &truncated, &ring)?;
    let reference_z = truncated.samples()[steps].1;
    let lattice_z = faithful.cells()[0].z;
    let drift = params
        .grid
        .signed_arc(reference_z.x1, lattice_z.x1)
        .abs()
        .max(params.grid.signed_arc(reference_z.x2, lattice_z.x2).abs());

    let report = EquivalenceReport {
        cells: config.run.cells,
        steps,
        max_deviation_cells: max_deviation,
        position_drift: drift,
        fast_faithful_identical: fast.cells() == faithful.cells(),
    };
    sink.write_json("equivalence_report.json", &report)?;

    let mut csv = Vec::new();
    snapshot::write_mass_density_csv(&mut csv, &trace)?;
    sink.write("mass_density.csv", &csv)?;
    let mut csv = Vec::new();
    snapshot::write_trajectories_csv(&mut csv, std::slice::from_ref(&truncated))?;
    sink.write("reference_trajectory.csv", &csv)?;
    Ok(0)
}

#[derive(Serialize)]
struct RelaxReport {
    kappa: f64,
    dt: f64,
    steps: usize,
    fitted_rate_phi: f64,
    fitted_rate_z: f64,
    heat_kernel_rate: f64,
}

fn relax(config: &RunConfig, sink: &mut ArtifactSink, plots: bool) -> Result<usize> {
    let grid = GridSpec::new(config.relax.points, config.grid.length)?;
    let constants = config.physical_constants();
    let ring = RingSpec::for_grid(&grid, config.relax.cells)?;
    let schedule = pwlab_core::engine::MeasurementSchedule::free_flight(1.0, 1.0);
    let settings = SettingPair::new(0.0, 0.0);

    let mut r = rng::stream(config.master_seed, rng::SALT_LATTICE);
    let template = {
        let generic = pwlab_core::lattice::init_generic(ring, &grid, &mut r)?;
        generic.cells()[0].clone()
    };
    // single lowest-mode inhomogeneity: its gradient norms decay at the
    // discrete heat-kernel rate reported alongside the fit
    let mut lattice = init_single_mode(
        &template,
        ring,
        1,
        config.relax.phi_noise,
        config.relax.z_noise,
        &mut r,
    )?;

    let params = RelaxationParams {
        kappa: config.relax.kappa,
        dt: config.relax.dt,
        internal_dynamics: config.relax.internal_dynamics,
        renormalize_cells: config.relax.renormalize_cells,
    };
    let driver = RelaxationDriver::new(params, grid, constants, settings, schedule)?;
    let mut diag = GradientDiagnostics::default();
    diag.record(&lattice);
    for _ in 0..config.relax.steps {
        driver.step(&mut lattice)?;
        diag.record(&lattice);
    }

    let window = (0.0, config.relax.steps as f64 * config.relax.dt);
    let k1 = 2.0 * std::f64::consts::PI / ring.circumference();
    let report = RelaxReport {
        kappa: config.relax.kappa,
        dt: config.relax.dt,
        steps: config.relax.steps,
        fitted_rate_phi: decay_rate_fit(&diag, window, GradientKind::Phi)?,
        fitted_rate_z: decay_rate_fit(&diag, window, GradientKind::Z)?,
        heat_kernel_rate: 2.0 * config.relax.kappa * k1 * k1,
    };
    let mut csv = Vec::new();
    snapshot::write_gradient_csv(&mut csv, &diag)?;
    sink.write("gradients.csv", &csv)?;
    sink.write_json("relax_report.json", &report)?;
    if plots {
        let svg = line_plot(
            "Gradient decay under diffusion",
            "t",
            "log10 G",
            &[
                Series {
                    label: "G_phi".into(),
                    color: "#1f77b4",
                    points: diag.series(GradientKind::Phi),
                },
                Series {
                    label: "G_z".into(),
                    color: "#d62728",
                    points: diag.series(GradientKind::Z),
                },
            ],
            &[],
            true,
        );
        sink.write("plots/gradient_decay.svg", svg.as_bytes())?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct SiExperimentReport {
    report: SiTestReport,
    n_runs: u64,
    policy: String,
}

fn si_experiment(config: &RunConfig, sink: &mut ArtifactSink) -> Result<usize> {
    let model = ModelSpec::QuantumOracle {
        domain_length: config.grid.length,
        sigma0: config.schedule.sigma0,
    };
    let policy = config.setting_policy();
    if matches!(policy, pwlab_core::harness::SettingPolicy::LatticeDerived { .. }) {
        bail!("the si-test experiment runs over the oracle model; use an external policy");
    }
    let ledger = run_bell_ensemble(
        &model,
        &config.chsh_quad(),
        &policy,
        config.run.n_runs,
        config.master_seed,
    )?;
    let report = si_test(&ledger, config.run.n_bins)?;
    let mut csv = Vec::new();
    snapshot::write_ledger_csv(&mut csv, &ledger)?;
    sink.write("ledger.csv", &csv)?;
    sink.write_json(
        "si_report.json",
        &SiExperimentReport {
            report,
            n_runs: config.run.n_runs,
            policy: ledger.policy.clone(),
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct LhvReport {
    max_two_term: f64,
    max_one_term: f64,
    argmax_two_term: DeterministicStrategy,
    mixtures_scored: usize,
    worst_mixture_s: f64,
    local_bound: f64,
}

fn lhv_bruteforce(config: &RunConfig, sink: &mut ArtifactSink) -> Result<usize> {
    let (max2, arg2) = brute_force_lhv_max(ChshForm::TwoTerm);
    let (max1, _) = brute_force_lhv_max(ChshForm::OneTerm);
    let strategies = DeterministicStrategy::all();
    let mut r = rng::stream(config.master_seed, rng::SALT_STRATEGY);
    let mut worst: f64 = 0.0;
    for _ in 0..config.run.n_mixtures {
        let raw: Vec<f64> = (0..16).map(|_| rand_f64(&mut r)).collect();
        let total: f64 = raw.iter().sum();
        let mixture = StrategyMixture::new(
            strategies
                .iter()
                .copied()
                .zip(raw.iter().map(|w| w / total))
                .collect(),
        )?;
        let s = chsh_value(&mixture_correlators(&mixture), config.run.chsh_form)?;
        worst = worst.max(s);
    }
    sink.write_json(
        "lhv_report.json",
        &LhvReport {
            max_two_term: max2,
            max_one_term: max1,
            argmax_two_term: arg2,
            mixtures_scored: config.run.n_mixtures,
            worst_mixture_s: worst,
            local_bound: 2.0,
        },
    )?;
    Ok(0)
}

fn rand_f64<R: rand::Rng>(r: &mut R) -> f64 {
    r.random()
}
