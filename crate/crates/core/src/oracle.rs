//! Closed-form singlet predictions, CHSH algebra, and brute-force
//! local-hidden-variable bounds.
//!
//! Everything here is exact; the simulation modules are checked against it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Direction in the x-z plane, stored normalized to `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        let mut a = radians.rem_euclid(TAU);
        if a >= TAU {
            a = 0.0;
        }
        Angle(a)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Relative angle `self - other`, normalized.
    pub fn between(self, other: Angle) -> Angle {
        Angle::new(self.0 - other.0)
    }
}

/// One measurement outcome, spin-up = `+1`, spin-down = `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl TryFrom<i8> for Outcome {
    type Error = CoreError;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(CoreError::InvalidOutcome(other)),
        }
    }
}

/// The pair of directions measured on the two wings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingPair {
    pub alpha: Angle,
    pub beta: Angle,
}

impl SettingPair {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha: Angle::new(alpha),
            beta: Angle::new(beta),
        }
    }

    /// Relative angle between the two settings.
    pub fn theta(&self) -> Angle {
        self.alpha.between(self.beta)
    }
}

/// The four directions of a CHSH experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshQuad {
    pub a: Angle,
    pub a_prime: Angle,
    pub b: Angle,
    pub b_prime: Angle,
}

impl ChshQuad {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self {
            a: Angle::new(a),
            a_prime: Angle::new(a_prime),
            b: Angle::new(b),
            b_prime: Angle::new(b_prime),
        }
    }

    /// Settings for pair indices `(i, j)`, wing 1 picking `a`/`a'` and wing 2
    /// picking `b`/`b'`.
    pub fn pair(&self, i: u8, j: u8) -> SettingPair {
        let alpha = if i == 0 { self.a } else { self.a_prime };
        let beta = if j == 0 { self.b } else { self.b_prime };
        SettingPair { alpha, beta }
    }

    /// The four pairs in ledger order: (a,b), (a,b'), (a',b), (a',b').
    pub fn pairs(&self) -> [SettingPair; 4] {
        [
            self.pair(0, 0),
            self.pair(0, 1),
            self.pair(1, 0),
            self.pair(1, 1),
        ]
    }
}

/// Which algebraic form of the CHSH combination to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChshForm {
    /// `|E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|`
    #[default]
    TwoTerm,
    /// `|E(a,b) + E(a,b') + E(a',b) - E(a',b')|`
    OneTerm,
}

/// Correlators for the four CHSH pairs, in the order of [`ChshQuad::pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlators {
    pub e_ab: f64,
    pub e_ab_prime: f64,
    pub e_a_prime_b: f64,
    pub e_a_prime_b_prime: f64,
}

impl Correlators {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.e_ab,
            self.e_ab_prime,
            self.e_a_prime_b,
            self.e_a_prime_b_prime,
        ]
    }
}

impl From<[f64; 4]> for Correlators {
    fn from(e: [f64; 4]) -> Self {
        Self {
            e_ab: e[0],
            e_ab_prime: e[1],
            e_a_prime_b: e[2],
            e_a_prime_b_prime: e[3],
        }
    }
}

/// A deterministic local strategy: one fixed outcome per wing per setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub a_at_a: Outcome,
    pub a_at_a_prime: Outcome,
    pub b_at_b: Outcome,
    pub b_at_b_prime: Outcome,
}

impl DeterministicStrategy {
    /// Enumerate all 16 strategies.
    pub fn all() -> Vec<DeterministicStrategy> {
        let o = [Outcome::Plus, Outcome::Minus];
        let mut out = Vec::with_capacity(16);
        for &a0 in &o {
            for &a1 in &o {
                for &b0 in &o {
                    for &b1 in &o {
                        out.push(DeterministicStrategy {
                            a_at_a: a0,
                            a_at_a_prime: a1,
                            b_at_b: b0,
                            b_at_b_prime: b1,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn wing1(&self, i: u8) -> Outcome {
        if i == 0 {
            self.a_at_a
        } else {
            self.a_at_a_prime
        }
    }

    pub fn wing2(&self, j: u8) -> Outcome {
        if j == 0 {
            self.b_at_b
        } else {
            self.b_at_b_prime
        }
    }

    /// Correlators of this strategy alone.
    pub fn correlators(&self) -> Correlators {
        let e = |i: u8, j: u8| self.wing1(i).value() * self.wing2(j).value();
        Correlators {
            e_ab: e(0, 0),
            e_ab_prime: e(0, 1),
            e_a_prime_b: e(1, 0),
            e_a_prime_b_prime: e(1, 1),
        }
    }
}

/// A convex mixture of deterministic strategies: a finite distribution over
/// fundamental states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMixture {
    entries: Vec<(DeterministicStrategy, f64)>,
}

impl StrategyMixture {
    /// Weights must be nonnegative and sum to 1 within 1e-12.
    pub fn new(entries: Vec<(DeterministicStrategy, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(CoreError::InvalidPolicy("empty strategy mixture".into()));
        }
        let mut total = 0.0;
        for &(_, w) in &entries {
            if !(w >= 0.0) {
                return Err(CoreError::InvalidPolicy(format!(
                    "negative mixture weight {w}"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidPolicy(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { entries })
    }

    pub fn single(strategy: DeterministicStrategy) -> Self {
        Self {
            entries: vec![(strategy, 1.0)],
        }
    }

    /// Uniform mixture over all 16 deterministic strategies.
    pub fn uniform() -> Self {
        let all = DeterministicStrategy::all();
        let w = 1.0 / all.len() as f64;
        Self {
            entries: all.into_iter().map(|s| (s, w)).collect(),
        }
    }

    pub fn entries(&self) -> &[(DeterministicStrategy, f64)] {
        &self.entries
    }

    /// Draw one strategy according to the weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DeterministicStrategy {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(s, w) in &self.entries {
            acc += w;
            if u < acc {
                return s;
            }
        }
        self.entries.last().unwrap().0
    }
}

/// Singlet expectation value of the product of outcomes: `-cos(theta)`.
pub fn quantum_correlation(theta: Angle) -> f64 {
    -theta.radians().cos()
}

/// Singlet joint probability `P(A, B)` for settings at relative angle
/// `theta`: `(1 - A*B*cos(theta)) / 4`.
pub fn joint_probability(a: Outcome, b: Outcome, theta: Angle) -> f64 {
    0.25 * (1.0 - a.value() * b.value() * theta.radians().cos())
}

/// Evaluate the CHSH combination for the given correlators.
///
/// Errors if any correlator lies outside `[-1, 1]`.
pub fn chsh_value(correlators: &Correlators, form: ChshForm) -> Result<f64> {
    for e in correlators.as_array() {
        if !(e.abs() <= 1.0 + 1e-12) {
            return Err(CoreError::CorrelatorOutOfRange(e));
        }
    }
    let c = correlators;
    Ok(match form {
        ChshForm::TwoTerm => {
            (c.e_ab - c.e_ab_prime).abs() + (c.e_a_prime_b + c.e_a_prime_b_prime).abs()
        }
        ChshForm::OneTerm => {
            (c.e_ab + c.e_ab_prime + c.e_a_prime_b - c.e_a_prime_b_prime).abs()
        }
    })
}

/// CHSH combination evaluated like [`chsh_value`] but without the range
/// check, for statistical estimates that may stray slightly outside 1.
pub fn chsh_value_unchecked(correlators: &Correlators, form: ChshForm) -> f64 {
    let c = correlators;
    match form {
        ChshForm::TwoTerm => {
            (c.e_ab - c.e_ab_prime).abs() + (c.e_a_prime_b + c.e_a_prime_b_prime).abs()
        }
        ChshForm::OneTerm => (c.e_ab + c.e_ab_prime + c.e_a_prime_b - c.e_a_prime_b_prime).abs(),
    }
}

/// The coplanar quad `(a, a', b, b') = (0, pi/2, pi/4, 3pi/4)`: 90 degrees
/// between `a` and `a'` and between `b` and `b'`, 45 degrees between `a` and
/// `b`. On the singlet it drives the two-term CHSH combination to `2*sqrt(2)`.
pub fn standard_chsh_angles() -> ChshQuad {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    ChshQuad::new(0.0, FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4)
}

/// Quantum correlators for all four pairs of a quad.
pub fn quantum_correlators(quad: &ChshQuad) -> Correlators {
    let e = quad.pairs().map(|p| quantum_correlation(p.theta()));
    Correlators::from(e)
}

/// Ensemble correlators of a strategy mixture: for each setting pair the
/// weighted sum of outcome products over the mixture.
pub fn mixture_correlators(mixture: &StrategyMixture) -> Correlators {
    let mut e = [0.0; 4];
    for &(s, w) in mixture.entries() {
        for (acc, v) in e.iter_mut().zip(s.correlators().as_array()) {
            *acc += w * v;
        }
    }
    Correlators::from(e)
}

/// Maximize the CHSH combination over all 16 deterministic strategies.
///
/// Mixtures are convex combinations of these extreme points, so the returned
/// value bounds every local model.
pub fn brute_force_lhv_max(form: ChshForm) -> (f64, DeterministicStrategy) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = DeterministicStrategy::all()[0];
    for s in DeterministicStrategy::all() {
        let v = chsh_value(&s.correlators(), form).expect("strategy correlators are in range");
        if v > best {
            best = v;
            arg = s;
        }
    }
    (best, arg)
}

/// Draw one pair of singlet outcomes at relative angle `theta`.
///
/// Deterministic given the rng state: two uniform draws decide first the
/// product A*B and then the sign of A.
pub fn sample_quantum_outcomes<R: Rng + ?Sized>(theta: Angle, rng: &mut R) -> (Outcome, Outcome) {
    let p_anti = 0.5 * (1.0 + theta.radians().cos());
    let anti = rng.random::<f64>() < p_anti;
    let a = if rng.random::<f64>() < 0.5 {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    let b = if anti { a.flip() } else { a };
    (a, b)
}
