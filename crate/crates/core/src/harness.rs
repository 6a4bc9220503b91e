//! Ensemble experiment runner: setting-selection policies, CHSH estimation
//! with error bars, and the settings-independence test, over any backing
//! model (closed-form oracle, pilot-wave engine, homogeneous lattice, or
//! local-hidden-variable mixtures).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{estimate_correlator, run_measurement, MeasurementSchedule};
use crate::field::{BornSampler, ParticleConfig};
use crate::grid::{GridSpec, PhysicalConstants};
use crate::lattice::{field_fingerprint, fingerprint_settings, LatticeState, RingSpec};
use crate::oracle::{
    chsh_value_unchecked, sample_quantum_outcomes, ChshForm, ChshQuad, Correlators, Outcome,
    SettingPair, StrategyMixture,
};
use crate::stats::independence_test;
use crate::{engine, rng, CoreError, Result};

/// How the harness picks a setting pair for each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SettingPolicy {
    /// Counter-based uniform draw per run, independent of everything else.
    IndependentUniform { seed: u64 },
    /// Parity of consecutive decimal digits of pi (one digit per wing per
    /// run, starting at `offset` fractional digits in): odd selects the
    /// first setting of a wing, even the second.
    PiDigits { offset: usize },
    /// Cycle through an explicit list of pair indices.
    FixedList(Vec<(u8, u8)>),
    /// Deterministic function of a designated apparatus cell's content.
    LatticeDerived { cell: usize },
}

impl SettingPolicy {
    pub fn descriptor(&self) -> String {
        match self {
            SettingPolicy::IndependentUniform { seed } => {
                format!("independent-uniform(seed={seed})")
            }
            SettingPolicy::PiDigits { offset } => format!("pi-digits(offset={offset})"),
            SettingPolicy::FixedList(list) => format!("fixed-list(len={})", list.len()),
            SettingPolicy::LatticeDerived { cell } => format!("lattice-derived(cell={cell})"),
        }
    }

    fn validate(&self) -> Result<()> {
        if let SettingPolicy::FixedList(list) = self {
            if list.is_empty() {
                return Err(CoreError::InvalidPolicy("empty fixed list".into()));
            }
            if list.iter().any(|&(i, j)| i > 1 || j > 1) {
                return Err(CoreError::InvalidPolicy(
                    "fixed-list entries must be 0 or 1 per wing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Setting pair indices for one run.
///
/// `LatticeDerived` requires the run's lattice as context. `PiDigits`
/// recomputes the digit stream on every call; ensemble runs precompute it
/// once instead.
pub fn choose_settings(
    policy: &SettingPolicy,
    run_index: u64,
    context: Option<&LatticeState>,
) -> Result<(u8, u8)> {
    policy.validate()?;
    match policy {
        SettingPolicy::IndependentUniform { seed } => {
            let mut r = rng::stream(*seed, rng::SALT_SETTINGS + run_index);
            Ok((r.random_range(0..2u8), r.random_range(0..2u8)))
        }
        SettingPolicy::PiDigits { offset } => {
            let needed = offset + 2 * run_index as usize + 2;
            let digits = pi_fractional_digits(needed);
            Ok(pair_from_digits(&digits, *offset, run_index))
        }
        SettingPolicy::FixedList(list) => Ok(list[(run_index % list.len() as u64) as usize]),
        SettingPolicy::LatticeDerived { cell } => {
            let lattice = context.ok_or_else(|| {
                CoreError::InvalidPolicy(
                    "lattice-derived policy requires a lattice context".into(),
                )
            })?;
            let cell = &lattice.cells()[cell % lattice.cells().len()];
            Ok(fingerprint_settings(field_fingerprint(&cell.phi), &cell.z))
        }
    }
}

fn pair_from_digits(digits: &[u8], offset: usize, run_index: u64) -> (u8, u8) {
    let base = offset + 2 * run_index as usize;
    let wing = |d: u8| if d % 2 == 1 { 0u8 } else { 1u8 };
    (wing(digits[base]), wing(digits[base + 1]))
}

/// First `count` decimal digits of pi after the decimal point, by the
/// streaming spigot of Rabinowitz and Wagon. Quadratic in `count`; intended
/// for setting selection, not record digit hunts.
pub fn pi_fractional_digits(count: usize) -> Vec<u8> {
    if count == 0 {
        return Vec::new();
    }
    // emitted stream starts with a spurious 0 followed by "3", so we need
    // count + 2 emitted digits; iterations can lag emissions while nines
    // are buffered, hence the slack.
    let iterations = count + 34;
    let len = iterations * 10 / 3 + 2;
    let mut a = vec![2u64; len];
    let mut emitted: Vec<u8> = Vec::with_capacity(count + 4);
    let mut predigit: u64 = 0;
    let mut nines: usize = 0;
    for _ in 0..iterations {
        if emitted.len() >= count + 2 {
            break;
        }
        let mut q: u64 = 0;
        for i in (0..len).rev() {
            let x = 10 * a[i] + q * (i as u64 + 1);
            a[i] = x % (2 * i as u64 + 1);
            q = x / (2 * i as u64 + 1);
        }
        a[0] = q % 10;
        q /= 10;
        if q == 9 {
            nines += 1;
        } else if q == 10 {
            emitted.push((predigit + 1) as u8);
            for _ in 0..nines {
                emitted.push(0);
            }
            predigit = 0;
            nines = 0;
        } else {
            emitted.push(predigit as u8);
            predigit = q;
            for _ in 0..nines {
                emitted.push(9);
            }
            nines = 0;
        }
    }
    emitted.push(predigit as u8);
    assert!(emitted.len() >= count + 2, "spigot under-produced");
    debug_assert_eq!(emitted[1], 3);
    emitted[2..2 + count].to_vec()
}

/// Engine configuration shared by the pilot-wave and lattice models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    pub grid: GridSpec,
    pub constants: PhysicalConstants,
    pub schedule: MeasurementSchedule,
    pub dt: f64,
}

/// Backing model of a Bell ensemble.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// Closed-form singlet sampling; lambda snapshots are packet-distributed
    /// positions drawn independently of everything else.
    QuantumOracle { domain_length: f64, sigma0: f64 },
    /// Full pilot-wave dynamics with Stern-Gerlach readout.
    PilotWave(EngineParams),
    /// Homogeneous ring lattice over the same engine: per run a fresh
    /// homogeneous lattice whose template configuration is Born-sampled,
    /// with outcomes read from the mass-density cell support.
    LocalLattice { engine: EngineParams, cells: usize },
    /// Local-hidden-variable mixture: one strategy drawn per run.
    Lhv(StrategyMixture),
}

impl ModelSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::QuantumOracle { .. } => "quantum-oracle",
            ModelSpec::PilotWave(_) => "pilot-wave",
            ModelSpec::LocalLattice { .. } => "lpw",
            ModelSpec::Lhv(_) => "lhv",
        }
    }

    fn domain_length(&self) -> f64 {
        match self {
            ModelSpec::QuantumOracle { domain_length, .. } => *domain_length,
            ModelSpec::PilotWave(p) | ModelSpec::LocalLattice { engine: p, .. } => {
                p.grid.length()
            }
            ModelSpec::Lhv(_) => 1.0,
        }
    }
}

/// One run of the ensemble: settings, outcomes, and the lambda snapshot
/// (the run's creation-time configuration plus its stream seed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleRecord {
    pub run_id: u64,
    pub pair: (u8, u8),
    pub settings: SettingPair,
    /// `None` when the run was flagged for ambiguous readout.
    pub outcome: Option<(Outcome, Outcome)>,
    pub lambda: ParticleConfig,
    pub seed: u64,
}

impl EnsembleRecord {
    pub fn flagged(&self) -> bool {
        self.outcome.is_none()
    }
}

/// A complete Bell ensemble with enough context to recompute everything.
#[derive(Debug, Clone, Serialize)]
pub struct RunLedger {
    pub model: String,
    pub quad: ChshQuad,
    pub policy: String,
    pub master_seed: u64,
    pub domain_length: f64,
    pub records: Vec<EnsembleRecord>,
}

impl RunLedger {
    pub fn new(
        model: String,
        quad: ChshQuad,
        policy: String,
        master_seed: u64,
        domain_length: f64,
        mut records: Vec<EnsembleRecord>,
    ) -> Result<Self> {
        records.sort_by_key(|r| r.run_id);
        for (i, r) in records.iter().enumerate() {
            if r.run_id != i as u64 {
                return Err(CoreError::Ensemble(format!(
                    "run ids must be unique and contiguous; found {} at position {i}",
                    r.run_id
                )));
            }
        }
        Ok(Self {
            model,
            quad,
            policy,
            master_seed,
            domain_length,
            records,
        })
    }

    pub fn flagged_count(&self) -> usize {
        self.records.iter().filter(|r| r.flagged()).count()
    }
}

/// Run a Bell ensemble of `n_runs` over the given model, quad and policy.
///
/// Runs sharing a setting pair share one field evolution (the wave dynamics
/// does not depend on the particle positions); every run keeps its own
/// counter-derived streams, so results are independent of batching.
pub fn run_bell_ensemble(
    model: &ModelSpec,
    quad: &ChshQuad,
    policy: &SettingPolicy,
    n_runs: u64,
    master_seed: u64,
) -> Result<RunLedger> {
    if n_runs == 0 {
        return Err(CoreError::Ensemble("n_runs must be at least 1".into()));
    }
    policy.validate()?;
    if matches!(policy, SettingPolicy::LatticeDerived { .. })
        && !matches!(model, ModelSpec::LocalLattice { .. })
    {
        return Err(CoreError::InvalidPolicy(
            "lattice-derived policy needs the lattice model".into(),
        ));
    }
    if let ModelSpec::LocalLattice { cells, engine } = model {
        // an odd ring straddles the midpoint with one cell, making the
        // sign readout ambiguous there
        if *cells < 2 || *cells % 2 != 0 {
            return Err(CoreError::Ensemble(format!(
                "lattice model needs an even cell count >= 2, got {cells}"
            )));
        }
        RingSpec::for_grid(&engine.grid, *cells)?;
    }

    // precomputed digit stream for the pi policy
    let pi_digits = if let SettingPolicy::PiDigits { offset } = policy {
        Some(pi_fractional_digits(offset + 2 * n_runs as usize + 2))
    } else {
        None
    };

    let records = match model {
        ModelSpec::QuantumOracle {
            domain_length,
            sigma0,
        } => {
            let mid = 0.5 * domain_length;
            (0..n_runs)
                .map(|run| {
                    let seed = rng::SALT_BORN + run;
                    let mut lambda_rng = rng::stream(master_seed, seed);
                    let g1: f64 = lambda_rng.sample(StandardNormal);
                    let g2: f64 = lambda_rng.sample(StandardNormal);
                    let lambda = ParticleConfig::new(
                        (mid + sigma0 * g1).rem_euclid(*domain_length),
                        (mid + sigma0 * g2).rem_euclid(*domain_length),
                    );
                    let pair = pick_pair(policy, pi_digits.as_deref(), run, None)?;
                    let settings = quad.pair(pair.0, pair.1);
                    let mut out_rng = rng::stream(master_seed, rng::SALT_ORACLE + run);
                    let (a, b) = sample_quantum_outcomes(settings.theta(), &mut out_rng);
                    Ok(EnsembleRecord {
                        run_id: run,
                        pair,
                        settings,
                        outcome: Some((a, b)),
                        lambda,
                        seed,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        ModelSpec::Lhv(mixture) => (0..n_runs)
            .map(|run| {
                let seed = rng::SALT_STRATEGY + run;
                let mut r = rng::stream(master_seed, seed);
                let strategy = mixture.sample(&mut r);
                let pair = pick_pair(policy, pi_digits.as_deref(), run, None)?;
                let settings = quad.pair(pair.0, pair.1);
                let idx = strategy_index(&strategy);
                let lambda = ParticleConfig::new((idx as f64 + 0.5) / 16.0, (idx as f64 + 0.5) / 16.0);
                Ok(EnsembleRecord {
                    run_id: run,
                    pair,
                    settings,
                    outcome: Some((strategy.wing1(pair.0), strategy.wing2(pair.1))),
                    lambda,
                    seed,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        ModelSpec::PilotWave(params) => {
            engine_ensemble(params, None, quad, policy, pi_digits.as_deref(), n_runs, master_seed)?
        }
        ModelSpec::LocalLattice { engine, cells } => engine_ensemble(
            engine,
            Some(RingSpec::for_grid(&engine.grid, *cells)?),
            quad,
            policy,
            pi_digits.as_deref(),
            n_runs,
            master_seed,
        )?,
    };

    RunLedger::new(
        model.id().to_string(),
        *quad,
        policy.descriptor(),
        master_seed,
        model.domain_length(),
        records,
    )
}

fn pick_pair(
    policy: &SettingPolicy,
    pi_digits: Option<&[u8]>,
    run: u64,
    lattice_hash: Option<(u8, u8)>,
) -> Result<(u8, u8)> {
    match policy {
        SettingPolicy::PiDigits { offset } => {
            Ok(pair_from_digits(pi_digits.expect("precomputed digits"), *offset, run))
        }
        SettingPolicy::LatticeDerived { .. } => lattice_hash.ok_or_else(|| {
            CoreError::InvalidPolicy("lattice-derived policy requires a lattice context".into())
        }),
        other => choose_settings(other, run, None),
    }
}

/// Shared implementation for the pilot-wave and lattice models: Born-sample
/// each run's configuration, batch runs by setting pair, run one measurement
/// sweep per batch.
fn engine_ensemble(
    params: &EngineParams,
    ring: Option<RingSpec>,
    quad: &ChshQuad,
    policy: &SettingPolicy,
    pi_digits: Option<&[u8]>,
    n_runs: u64,
    master_seed: u64,
) -> Result<Vec<EnsembleRecord>> {
    let field0 = engine::prepare_singlet_state(&params.grid, params.schedule.sigma0)?;
    let sampler = BornSampler::new(&field0);
    let phi_print = field_fingerprint(&field0);

    let mut lambdas = Vec::with_capacity(n_runs as usize);
    let mut pairs = Vec::with_capacity(n_runs as usize);
    for run in 0..n_runs {
        let mut lambda_rng = rng::stream(master_seed, rng::SALT_BORN + run);
        let lambda = sampler.sample(&mut lambda_rng);
        let hash_pair = ring.map(|_| fingerprint_settings(phi_print, &lambda));
        let pair = pick_pair(policy, pi_digits, run, hash_pair)?;
        lambdas.push(lambda);
        pairs.push(pair);
    }

    let mut groups: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for (i, &pair) in pairs.iter().enumerate() {
        groups.entry(pair).or_default().push(i);
    }

    let mid = params.grid.midpoint();
    let mut outcomes: Vec<Option<(Outcome, Outcome)>> = vec![None; n_runs as usize];
    for (&pair, indices) in &groups {
        let settings = quad.pair(pair.0, pair.1);
        let configs: Vec<ParticleConfig> = indices.iter().map(|&i| lambdas[i]).collect();
        let sweep = run_measurement(
            &field0,
            settings,
            &params.schedule,
            &params.constants,
            &configs,
            params.dt,
            None,
        )?;
        for (&i, record) in indices.iter().zip(&sweep.records) {
            outcomes[i] = match (&ring, record.outcome) {
                (_, None) => None,
                (None, some) => some,
                (Some(ring), Some(_)) => {
                    // mass-density readout: the sign of the occupied cell's center
                    let read = |x: f64| {
                        if ring.center(ring.cell_of(x)) > mid {
                            Outcome::Plus
                        } else {
                            Outcome::Minus
                        }
                    };
                    Some((read(record.final_config.x1), read(record.final_config.x2)))
                }
            };
        }
    }

    Ok((0..n_runs)
        .map(|run| {
            let i = run as usize;
            EnsembleRecord {
                run_id: run,
                pair: pairs[i],
                settings: quad.pair(pairs[i].0, pairs[i].1),
                outcome: outcomes[i],
                lambda: lambdas[i],
                seed: rng::SALT_BORN + run,
            }
        })
        .collect())
}

fn strategy_index(s: &crate::oracle::DeterministicStrategy) -> usize {
    let bit = |o: Outcome| if o == Outcome::Minus { 1usize } else { 0 };
    8 * bit(s.a_at_a) + 4 * bit(s.a_at_a_prime) + 2 * bit(s.b_at_b) + bit(s.b_at_b_prime)
}

/// Per-pair correlator estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEstimate {
    pub pair: (u8, u8),
    pub e_hat: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BelowBound,
    ViolatesBound,
}

/// CHSH estimate over a ledger, two-term form, with first-order error
/// propagation (root sum of squares with unit sensitivities).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshReport {
    pub pairs: [PairEstimate; 4],
    pub s: f64,
    pub s_stderr: f64,
    pub local_bound: f64,
    pub quantum_value: f64,
    /// `violates-bound` when `s` exceeds the local bound by more than three
    /// standard errors.
    pub verdict: Verdict,
    pub flagged_runs: usize,
}

/// Minimum unflagged runs per pair before a CHSH estimate makes sense.
pub const MIN_RUNS_PER_PAIR: usize = 30;

pub fn chsh_report(ledger: &RunLedger) -> Result<ChshReport> {
    let mut estimates = Vec::with_capacity(4);
    for (i, j) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
        let outcomes: Vec<(Outcome, Outcome)> = ledger
            .records
            .iter()
            .filter(|r| r.pair == (i, j))
            .filter_map(|r| r.outcome)
            .collect();
        if outcomes.len() < MIN_RUNS_PER_PAIR {
            return Err(CoreError::UndersampledPair(
                i,
                j,
                outcomes.len(),
                MIN_RUNS_PER_PAIR,
            ));
        }
        let (e_hat, stderr) = estimate_correlator(&outcomes)?;
        estimates.push(PairEstimate {
            pair: (i, j),
            e_hat,
            stderr,
            count: outcomes.len(),
        });
    }
    let correlators = Correlators::from([
        estimates[0].e_hat,
        estimates[1].e_hat,
        estimates[2].e_hat,
        estimates[3].e_hat,
    ]);
    let s = chsh_value_unchecked(&correlators, ChshForm::TwoTerm);
    let s_stderr = estimates
        .iter()
        .map(|p| p.stderr * p.stderr)
        .sum::<f64>()
        .sqrt();
    let local_bound = 2.0;
    Ok(ChshReport {
        pairs: [estimates[0], estimates[1], estimates[2], estimates[3]],
        s,
        s_stderr,
        local_bound,
        quantum_value: 2.0 * std::f64::consts::SQRT_2,
        verdict: if s > local_bound + 3.0 * s_stderr {
            Verdict::ViolatesBound
        } else {
            Verdict::BelowBound
        },
        flagged_runs: ledger.flagged_count(),
    })
}

/// Settings-independence test: chi-square independence between binned lambda
/// snapshots and the chosen setting pair. Low p-values signal dependence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiTestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n_bins_per_axis: usize,
}

pub fn si_test(ledger: &RunLedger, n_bins: usize) -> Result<SiTestReport> {
    if n_bins < 2 {
        return Err(CoreError::DegenerateTable(format!(
            "need at least 2 bins per axis, got {n_bins}"
        )));
    }
    if ledger.records.len() < 2 {
        return Err(CoreError::DegenerateTable(format!(
            "ledger has {} record(s); the test needs at least 2",
            ledger.records.len()
        )));
    }
    let length = ledger.domain_length;
    let bin_of = |x: f64| (((x / length) * n_bins as f64).floor() as usize).min(n_bins - 1);
    let mut table = vec![vec![0.0f64; 4]; n_bins * n_bins];
    for r in &ledger.records {
        let row = bin_of(r.lambda.x1) * n_bins + bin_of(r.lambda.x2);
        let col = (2 * r.pair.0 + r.pair.1) as usize;
        table[row][col] += 1.0;
    }
    let out = independence_test(&table, 5.0)?;
    Ok(SiTestReport {
        statistic: out.statistic,
        dof: out.dof,
        p_value: out.p_value,
        n_bins_per_axis: n_bins,
    })
}
