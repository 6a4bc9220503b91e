//! Physics checks for the pilot-wave engine against closed-form oracles:
//! free Gaussian spreading, impulsive kick momentum transfer, guiding-law
//! identities, Born-sampling statistics, and measurement correlations.

use num_complex::Complex64;
use pwlab_core::engine::{
    estimate_correlator, evolve_step, guiding_velocity, prepare_singlet_state, run_measurement,
    MeasurementSchedule, Propagator,
};
use pwlab_core::field::{born_sample, BornSampler, ParticleConfig, SpinorField, VelocityField};
use pwlab_core::grid::{GridSpec, PhysicalConstants};
use pwlab_core::oracle::{quantum_correlation, Angle, SettingPair};
use pwlab_core::stats::{goodness_of_fit, rebin_masses};
use pwlab_core::{rng, CoreError};

const SIGMA0: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn grid128() -> GridSpec {
    GridSpec::new(128, 16.0).unwrap()
}

fn default_schedule(grid: &GridSpec, constants: &PhysicalConstants) -> MeasurementSchedule {
    MeasurementSchedule::new(
        152.0,
        (0.0, 0.05),
        (0.06, 0.11),
        0.5,
        SIGMA0,
        grid,
        constants,
    )
    .unwrap()
}

/// Mean momentum of particle `k` via the probability current:
/// `<p_k> = hbar * sum J_k h^2` for a unit-norm field.
fn mean_momentum(field: &SpinorField, constants: &PhysicalConstants, k: usize) -> f64 {
    let v = VelocityField::new(field, constants);
    let h = field.grid().spacing();
    let j = if k == 0 { v.current_x1() } else { v.current_x2() };
    constants.hbar * j.iter().sum::<f64>() * h * h
}

fn marginal_variance(field: &SpinorField, k: usize) -> f64 {
    let grid = field.grid();
    let h = grid.spacing();
    let marginal = field.marginal_density(k);
    let total: f64 = marginal.iter().sum::<f64>() * h;
    let mean: f64 = marginal
        .iter()
        .enumerate()
        .map(|(i, d)| grid.node(i) * d * h)
        .sum::<f64>()
        / total;
    marginal
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let dx = grid.node(i) - mean;
            dx * dx * d * h
        })
        .sum::<f64>()
        / total
}

#[test]
fn free_evolution_spreads_like_a_gaussian() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let sigma0 = 0.5;
    let mut field = prepare_singlet_state(&grid, sigma0).unwrap();
    let schedule = MeasurementSchedule::free_flight(1.0, sigma0);
    let settings = SettingPair::new(0.0, 0.0);
    let prop = Propagator::new(grid, constants, settings, schedule, 1e-3).unwrap();

    let t_final: f64 = 0.5;
    let steps = (t_final / 1e-3).round() as usize;
    for step in 0..steps {
        prop.step(&mut field, step as f64 * 1e-3).unwrap();
    }
    let expected = sigma0 * sigma0
        + (constants.hbar * t_final / (2.0 * constants.mass * sigma0)).powi(2);
    for k in 0..2 {
        let var = marginal_variance(&field, k);
        assert!(
            (var - expected).abs() / expected < 0.01,
            "axis {k}: width^2 = {var}, expected {expected}"
        );
    }
    assert!((field.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn coupling_window_kicks_eigenspinors_by_the_impulse() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let alpha = 1.0;
    let schedule = default_schedule(&grid, &constants);
    let settings = SettingPair::new(alpha, 0.0);

    for (sign, chi) in [
        (1.0, [(alpha / 2.0).cos(), (alpha / 2.0).sin()]),
        (-1.0, [-(alpha / 2.0).sin(), (alpha / 2.0).cos()]),
    ] {
        // eigenspinor of the wing-1 measurement direction times a Gaussian pair
        let mut field = SpinorField::zeros(grid);
        let n = grid.points();
        let envelope: Vec<f64> = (0..n)
            .map(|i| {
                let d = grid.node(i) - grid.midpoint();
                (-d * d / (4.0 * SIGMA0 * SIGMA0)).exp()
            })
            .collect();
        for i1 in 0..n {
            for i2 in 0..n {
                let g = envelope[i1] * envelope[i2];
                field.plane_mut(0, 0)[i1 * n + i2] = Complex64::new(chi[0] * g, 0.0);
                field.plane_mut(1, 0)[i1 * n + i2] = Complex64::new(chi[1] * g, 0.0);
            }
        }
        field.normalize();

        assert!(mean_momentum(&field, &constants, 0).abs() < 1e-9);
        let prop = Propagator::new(grid, constants, settings, schedule, 1e-3).unwrap();
        // run through the wing-1 window
        for step in 0..60 {
            prop.step(&mut field, step as f64 * 1e-3).unwrap();
        }
        let p1 = mean_momentum(&field, &constants, 0);
        let expected = sign * schedule.impulse(0);
        assert!(
            (p1 - expected).abs() / expected.abs() < 0.01,
            "sign {sign}: <p1> = {p1}, expected {expected}"
        );
        // the second wing is untouched by the wing-1 window
        assert!(mean_momentum(&field, &constants, 1).abs() < 0.01);
    }
}

#[test]
fn guiding_velocity_identities() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let field = prepare_singlet_state(&grid, 0.5).unwrap();
    let config = ParticleConfig::new(8.3, 7.6);

    // real field: zero current
    let (v1, v2) = guiding_velocity(&field, &config, &constants).unwrap();
    assert!(v1.abs() < 1e-12 && v2.abs() < 1e-12);

    // plane-wave factor shifts v1 by hbar k / m and leaves v2 alone
    let k = 2.0 * std::f64::consts::PI * 4.0 / grid.length();
    let mut boosted = field.clone();
    let n = grid.points();
    for s1 in 0..2 {
        for s2 in 0..2 {
            let plane = boosted.plane_mut(s1, s2);
            for i1 in 0..n {
                let phase = Complex64::new(0.0, k * grid.node(i1)).exp();
                for i2 in 0..n {
                    plane[i1 * n + i2] *= phase;
                }
            }
        }
    }
    let (w1, w2) = guiding_velocity(&boosted, &config, &constants).unwrap();
    assert!(
        (w1 - (v1 + constants.hbar * k / constants.mass)).abs() < 1e-9,
        "w1 = {w1}"
    );
    assert!((w2 - v2).abs() < 1e-9);

    // rescaling by a complex constant changes nothing; a real power of two
    // survives even the FFT bit for bit
    let mut scaled = boosted.clone();
    scaled.scale(Complex64::new(2.0, 0.0));
    let (u1, u2) = guiding_velocity(&scaled, &config, &constants).unwrap();
    assert_eq!((u1, u2), (w1, w2));

    let mut rotated = boosted.clone();
    rotated.scale(Complex64::new(0.0, 2.0));
    let (r1, r2) = guiding_velocity(&rotated, &config, &constants).unwrap();
    assert!((r1 - w1).abs() < 1e-12 * w1.abs().max(1.0));
    assert!((r2 - w2).abs() < 1e-12 * w2.abs().max(1.0));
}

#[test]
fn guiding_velocity_errors_at_nodes() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let field = prepare_singlet_state(&grid, 0.5).unwrap();
    // far in the tail the density underflows the node floor
    let node = ParticleConfig::new(0.5, 0.5);
    match guiding_velocity(&field, &node, &constants) {
        Err(CoreError::DensityNode { x1, x2, .. }) => {
            assert_eq!((x1, x2), (0.5, 0.5));
        }
        other => panic!("expected node error, got {other:?}"),
    }
}

#[test]
fn born_samples_match_the_grid_density() {
    let grid = grid128();
    let field = prepare_singlet_state(&grid, 0.5).unwrap();
    let sampler = BornSampler::new(&field);
    let mut r = rng::stream(31, rng::SALT_BORN);
    let n_samples = 10_000usize;

    let mut mean = (0.0, 0.0);
    let bins = 20;
    let mut observed = vec![0.0f64; bins * bins];
    let bin_of = |x: f64| (((x / grid.length()) * bins as f64).floor() as usize).min(bins - 1);
    for _ in 0..n_samples {
        let c = sampler.sample(&mut r);
        mean.0 += c.x1;
        mean.1 += c.x2;
        observed[bin_of(c.x1) * bins + bin_of(c.x2)] += 1.0;
    }
    mean.0 /= n_samples as f64;
    mean.1 /= n_samples as f64;

    // CLT bound on the sample mean
    let tol = 4.0 * 0.5 / (n_samples as f64).sqrt();
    assert!((mean.0 - grid.midpoint()).abs() < tol, "mean x1 = {}", mean.0);
    assert!((mean.1 - grid.midpoint()).abs() < tol, "mean x2 = {}", mean.1);

    // chi-square goodness of fit against the exact cell masses
    let h = grid.spacing();
    let masses: Vec<f64> = field
        .spin_summed_density()
        .iter()
        .map(|d| d * h * h)
        .collect();
    let expected: Vec<f64> = rebin_masses(&masses, grid.points(), bins)
        .iter()
        .map(|m| m * n_samples as f64)
        .collect();
    let out = goodness_of_fit(&observed, &expected, 5.0).unwrap();
    assert!(out.p_value > 0.01, "p = {}", out.p_value);
}

#[test]
fn equal_settings_anticorrelate_exactly() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let schedule = default_schedule(&grid, &constants);
    let field = prepare_singlet_state(&grid, SIGMA0).unwrap();
    let sampler = BornSampler::new(&field);
    let mut r = rng::stream(7, rng::SALT_BORN);
    let configs: Vec<ParticleConfig> = (0..256).map(|_| sampler.sample(&mut r)).collect();

    let run = run_measurement(
        &field,
        SettingPair::new(0.9, 0.9),
        &schedule,
        &constants,
        &configs,
        1e-3,
        None,
    )
    .unwrap();
    assert!(run.flagged_count <= 3, "{} flagged", run.flagged_count);
    for (a, b) in run.outcomes() {
        assert_eq!(a, b.flip());
    }
    // norm drift over the full run
    assert!((run.final_field.norm() - 1.0).abs() < 1e-7);
}

#[test]
fn right_angle_settings_decorrelate() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let schedule = default_schedule(&grid, &constants);
    let field = prepare_singlet_state(&grid, SIGMA0).unwrap();
    let sampler = BornSampler::new(&field);
    let mut r = rng::stream(8, rng::SALT_BORN);
    let n = 4096;
    let configs: Vec<ParticleConfig> = (0..n).map(|_| sampler.sample(&mut r)).collect();

    let run = run_measurement(
        &field,
        SettingPair::new(0.0, std::f64::consts::FRAC_PI_2),
        &schedule,
        &constants,
        &configs,
        1e-3,
        None,
    )
    .unwrap();
    let outcomes = run.outcomes();
    let (e, _) = estimate_correlator(&outcomes).unwrap();
    assert!(
        e.abs() <= 3.0 / (outcomes.len() as f64).sqrt() + 0.01,
        "E = {e}"
    );

    // single-wing marginals stay unbiased
    let frac_a = outcomes
        .iter()
        .filter(|(a, _)| a.value() > 0.0)
        .count() as f64
        / outcomes.len() as f64;
    let sigma = 0.5 / (outcomes.len() as f64).sqrt();
    assert!((frac_a - 0.5).abs() < 3.0 * sigma + 0.01, "P(A=+1) = {frac_a}");
}

#[test]
fn duplicated_configs_give_identical_outcomes() {
    let grid = grid128();
    let constants = PhysicalConstants::natural();
    let schedule = default_schedule(&grid, &constants);
    let field = prepare_singlet_state(&grid, SIGMA0).unwrap();
    let config = ParticleConfig::new(8.21, 7.83);
    let configs = vec![config; 16];
    let run = run_measurement(
        &field,
        SettingPair::new(0.3, 1.1),
        &schedule,
        &constants,
        &configs,
        1e-3,
        None,
    )
    .unwrap();
    let first = run.records[0];
    for r in &run.records {
        assert_eq!(r.outcome, first.outcome);
        assert_eq!(r.final_config, first.final_config);
    }
}

#[test]
fn measurement_runs_are_deterministic() {
    let grid = GridSpec::new(64, 16.0).unwrap();
    let constants = PhysicalConstants::natural();
    let schedule =
        MeasurementSchedule::new(130.0, (0.0, 0.05), (0.06, 0.11), 0.5, 1.0, &grid, &constants)
            .unwrap();
    let field = prepare_singlet_state(&grid, 1.0).unwrap();
    let mut r = rng::stream(3, rng::SALT_BORN);
    let configs: Vec<ParticleConfig> = (0..32).map(|_| born_sample(&field, &mut r)).collect();
    let settings = SettingPair::new(0.4, 1.9);

    let run1 = run_measurement(&field, settings, &schedule, &constants, &configs, 2.5e-3, None)
        .unwrap();
    let run2 = run_measurement(&field, settings, &schedule, &constants, &configs, 2.5e-3, None)
        .unwrap();
    assert_eq!(run1.records, run2.records);
}

#[test]
fn oracle_sampler_cross_checks_the_correlator() {
    let mut r = rng::stream(12, rng::SALT_ORACLE);
    let theta = Angle::new(std::f64::consts::FRAC_PI_4);
    let outcomes: Vec<_> = (0..4096)
        .map(|_| pwlab_core::oracle::sample_quantum_outcomes(theta, &mut r))
        .collect();
    let (e, se) = estimate_correlator(&outcomes).unwrap();
    assert!((e - quantum_correlation(theta)).abs() <= 3.0 * se);
}

#[test]
fn free_step_matches_single_step_api() {
    let grid = GridSpec::new(64, 16.0).unwrap();
    let constants = PhysicalConstants::natural();
    let field = prepare_singlet_state(&grid, 1.0).unwrap();
    let schedule = MeasurementSchedule::free_flight(1.0, 1.0);
    let settings = SettingPair::new(0.0, 0.0);
    let stepped = evolve_step(&field, settings, &schedule, &constants, 0.0, 1e-3).unwrap();
    // free evolution preserves the norm to roundoff in a single step
    assert!((stepped.norm() - 1.0).abs() < 1e-12);
    assert_ne!(stepped, field);
}
