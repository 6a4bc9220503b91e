//! Run configuration: a TOML document with one section per subsystem.
//! Unknown keys are rejected; all range and stability violations are
//! collected into a single error.

use serde::{Deserialize, Serialize};

use pwlab_core::engine::MeasurementSchedule;
use pwlab_core::grid::{GridSpec, PhysicalConstants};
use pwlab_core::harness::{EngineParams, SettingPolicy};
use pwlab_core::oracle::{standard_chsh_angles, ChshForm, ChshQuad};
use pwlab_core::relax::RelaxationParams;

/// Which experiment a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Oracle,
    PwChsh,
    LpwChsh,
    LpwEquivalence,
    Relax,
    SiTest,
    LhvBruteforce,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::PwChsh => "pw-chsh",
            ExperimentKind::LpwChsh => "lpw-chsh",
            ExperimentKind::LpwEquivalence => "lpw-equivalence",
            ExperimentKind::Relax => "relax",
            ExperimentKind::SiTest => "si-test",
            ExperimentKind::LhvBruteforce => "lhv-bruteforce",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub points: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            points: 256,
            length: 16.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub coupling_strength: f64,
    pub window1: (f64, f64),
    pub window2: (f64, f64),
    pub t_read: f64,
    pub sigma0: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            coupling_strength: 152.0,
            window1: (0.0, 0.05),
            window2: (0.06, 0.11),
            t_read: 0.5,
            sigma0: std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSection {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for QuadSection {
    fn default() -> Self {
        let q = standard_chsh_angles();
        Self {
            a: q.a.radians(),
            a_prime: q.a_prime.radians(),
            b: q.b.radians(),
            b_prime: q.b_prime.radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    FixedCycle,
    IndependentUniform,
    PiDigits,
    LatticeDerived,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub dt: f64,
    pub n_runs: u64,
    /// Ring cells for the lattice experiments.
    pub cells: usize,
    /// Evolution steps for the equivalence experiment.
    pub steps: usize,
    /// Bins per axis for the settings-independence test.
    pub n_bins: usize,
    pub policy: PolicyKind,
    pub pi_offset: usize,
    pub chsh_form: ChshForm,
    /// Mixtures scored by the brute-force experiment.
    pub n_mixtures: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_runs: 4096,
            cells: 16,
            steps: 100,
            n_bins: 4,
            policy: PolicyKind::FixedCycle,
            pi_offset: 0,
            chsh_form: ChshForm::TwoTerm,
            n_mixtures: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxSection {
    pub kappa: f64,
    pub dt: f64,
    pub steps: usize,
    pub internal_dynamics: bool,
    pub renormalize_cells: bool,
    pub cells: usize,
    /// Relative wave-function noise of the initial perturbed lattice.
    pub phi_noise: f64,
    /// Position noise (length units) of the initial perturbed lattice.
    pub z_noise: f64,
    /// Grid points used for the relaxation lattice (coarser than CHSH runs).
    pub points: usize,
}

impl Default for RelaxSection {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            dt: 0.02,
            steps: 300,
            internal_dynamics: false,
            renormalize_cells: false,
            cells: 64,
            phi_noise: 0.01,
            z_noise: 0.05,
            points: 32,
        }
    }
}

/// Complete, validated run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    pub master_seed: u64,
    pub grid: GridSection,
    pub constants: ConstantsSection,
    pub schedule: ScheduleSection,
    pub quad: QuadSection,
    pub run: RunSection,
    pub relax: RelaxSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            master_seed: 0,
            grid: GridSection::default(),
            constants: ConstantsSection::default(),
            schedule: ScheduleSection::default(),
            quad: QuadSection::default(),
            run: RunSection::default(),
            relax: RelaxSection::default(),
        }
    }
}

impl RunConfig {
    /// Parse and fully validate a TOML document, reporting every violation.
    pub fn parse(text: &str) -> Result<Self, String> {
        let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    /// Validate all sections together; collects every violation into one
    /// message.
    pub fn validate(&self) -> Result<(), String> {
        let mut violations = Vec::new();

        let grid = match GridSpec::new(self.grid.points, self.grid.length) {
            Ok(g) => Some(g),
            Err(e) => {
                violations.push(e.to_string());
                None
            }
        };
        let constants = match PhysicalConstants::new(self.constants.hbar, self.constants.mass) {
            Ok(c) => Some(c),
            Err(e) => {
                violations.push(e.to_string());
                None
            }
        };
        if let (Some(grid), Some(constants)) = (grid, constants) {
            let s = &self.schedule;
            if let Err(e) = MeasurementSchedule::new(
                s.coupling_strength,
                s.window1,
                s.window2,
                s.t_read,
                s.sigma0,
                &grid,
                &constants,
            ) {
                violations.push(e.to_string());
            }
        }
        if self.run.cells < 2 {
            violations.push(format!("run.cells must be >= 2, got {}", self.run.cells));
        }
        if !(self.run.dt > 0.0) {
            violations.push(format!("run.dt must be positive, got {}", self.run.dt));
        }
        if self.run.n_runs == 0 {
            violations.push("run.n_runs must be >= 1".into());
        }
        if self.run.n_bins < 2 {
            violations.push(format!("run.n_bins must be >= 2, got {}", self.run.n_bins));
        }

        // relaxation stability: explicit Euler bound kappa*dt/spacing^2 <= 1/4
        if self.relax.cells < 2 {
            violations.push(format!(
                "relax.cells must be >= 2, got {}",
                self.relax.cells
            ));
        } else {
            let spacing = self.grid.length / self.relax.cells as f64;
            let params = RelaxationParams {
                kappa: self.relax.kappa,
                dt: self.relax.dt,
                internal_dynamics: self.relax.internal_dynamics,
                renormalize_cells: self.relax.renormalize_cells,
            };
            match pwlab_core::lattice::RingSpec::new(self.relax.cells, spacing) {
                Ok(ring) => {
                    if let Err(e) = params.validate(&ring) {
                        violations.push(e.to_string());
                    }
                }
                Err(e) => violations.push(e.to_string()),
            }
            if !self.relax.points.is_power_of_two() || self.relax.points < 32 {
                violations.push(format!(
                    "relax.points must be a power of two >= 32, got {}",
                    self.relax.points
                ));
            }
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations.join("; "))
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid.points, self.grid.length).expect("validated")
    }

    pub fn physical_constants(&self) -> PhysicalConstants {
        PhysicalConstants::new(self.constants.hbar, self.constants.mass).expect("validated")
    }

    pub fn measurement_schedule(&self) -> MeasurementSchedule {
        let s = &self.schedule;
        MeasurementSchedule::new(
            s.coupling_strength,
            s.window1,
            s.window2,
            s.t_read,
            s.sigma0,
            &self.grid_spec(),
            &self.physical_constants(),
        )
        .expect("validated")
    }

    pub fn engine_params(&self) -> EngineParams {
        EngineParams {
            grid: self.grid_spec(),
            constants: self.physical_constants(),
            schedule: self.measurement_schedule(),
            dt: self.run.dt,
        }
    }

    pub fn chsh_quad(&self) -> ChshQuad {
        ChshQuad::new(self.quad.a, self.quad.a_prime, self.quad.b, self.quad.b_prime)
    }

    pub fn setting_policy(&self) -> SettingPolicy {
        match self.run.policy {
            PolicyKind::FixedCycle => {
                SettingPolicy::FixedList(vec![(0, 0), (0, 1), (1, 0), (1, 1)])
            }
            PolicyKind::IndependentUniform => SettingPolicy::IndependentUniform {
                seed: self.master_seed,
            },
            PolicyKind::PiDigits => SettingPolicy::PiDigits {
                offset: self.run.pi_offset,
            },
            PolicyKind::LatticeDerived => SettingPolicy::LatticeDerived { cell: 0 },
        }
    }
}
