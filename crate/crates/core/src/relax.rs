//! Diffusion-coupled lattice dynamics: a discrete periodic Laplacian across
//! cells drives both the wave-function field and the position field toward
//! homogeneity, optionally interleaved with the cells' internal dynamics by
//! Strang splitting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::MeasurementSchedule;
use crate::grid::{GridSpec, PhysicalConstants};
use crate::lattice::{evolve_lattice, EvolutionContext, EvolveMode, LatticeState, RingSpec};
use crate::oracle::SettingPair;
use crate::stats::linear_fit;
use crate::{CoreError, Result};

/// Parameters of one relaxation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    /// Diffusion coefficient (length^2 / time).
    pub kappa: f64,
    pub dt: f64,
    pub internal_dynamics: bool,
    /// Renormalize each cell's wave function after the diffusion step; the
    /// diffusion term does not preserve per-cell norm and the guiding law
    /// needs a nonvanishing field.
    pub renormalize_cells: bool,
}

impl RelaxationParams {
    pub fn validate(&self, ring: &RingSpec) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(CoreError::InvalidRelaxation(format!(
                "kappa must be nonnegative and finite, got {}",
                self.kappa
            )));
        }
        if !(self.dt > 0.0) {
            return Err(CoreError::InvalidRelaxation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        let spacing = ring.spacing();
        let number = self.kappa * self.dt / (spacing * spacing);
        if number > 0.25 {
            return Err(CoreError::InvalidRelaxation(format!(
                "kappa*dt/spacing^2 = {number:.4} violates the explicit-step bound 1/4"
            )));
        }
        Ok(())
    }
}

/// Driver holding the propagators a relaxation run needs: a full-step context
/// for the kappa = 0 path and a half-step context for the Strang splitting.
pub struct RelaxationDriver {
    params: RelaxationParams,
    constants: PhysicalConstants,
    full: EvolutionContext,
    half: Option<EvolutionContext>,
}

impl RelaxationDriver {
    pub fn new(
        params: RelaxationParams,
        grid: GridSpec,
        constants: PhysicalConstants,
        settings: SettingPair,
        schedule: MeasurementSchedule,
    ) -> Result<Self> {
        if !(params.dt > 0.0) {
            return Err(CoreError::InvalidRelaxation(format!(
                "dt must be positive, got {}",
                params.dt
            )));
        }
        let full = EvolutionContext::new(grid, constants, settings, schedule, params.dt)?;
        let half = if params.internal_dynamics && params.kappa > 0.0 {
            Some(EvolutionContext::new(
                grid,
                constants,
                settings,
                schedule,
                0.5 * params.dt,
            )?)
        } else {
            None
        };
        Ok(Self {
            params,
            constants,
            full,
            half,
        })
    }

    pub fn params(&self) -> &RelaxationParams {
        &self.params
    }

    /// One relaxation step.
    ///
    /// `kappa = 0` reduces to the plain faithful lattice step (identical
    /// code path, hence identical bits). Otherwise: half-step internal
    /// dynamics, full diffusion step, half-step internal dynamics, with the
    /// internal halves skipped when `internal_dynamics` is off.
    pub fn step(&self, lattice: &mut LatticeState) -> Result<()> {
        self.params.validate(lattice.ring())?;
        if self.params.kappa == 0.0 {
            if self.params.internal_dynamics {
                evolve_lattice(lattice, &self.full, EvolveMode::Faithful)?;
            } else {
                lattice.set_t(lattice.t() + self.params.dt);
            }
            return Ok(());
        }
        if let Some(half) = &self.half {
            evolve_lattice(lattice, half, EvolveMode::Faithful)?;
        }
        diffusion_step(lattice, &self.params, &self.constants)?;
        if let Some(half) = &self.half {
            evolve_lattice(lattice, half, EvolveMode::Faithful)?;
        } else {
            lattice.set_t(lattice.t() + self.params.dt);
        }
        Ok(())
    }
}

/// One relaxation step with a throwaway driver; loops should build a
/// [`RelaxationDriver`] once instead.
pub fn relax_step(
    lattice: &mut LatticeState,
    params: RelaxationParams,
    settings: SettingPair,
    schedule: MeasurementSchedule,
    constants: PhysicalConstants,
) -> Result<()> {
    RelaxationDriver::new(params, *lattice.grid(), constants, settings, schedule)?.step(lattice)
}

/// Explicit Euler step of the discrete periodic heat equation across cells,
/// applied to the wave-function field (coefficient `kappa / hbar`, the form
/// the modified Schrodinger equation reduces to) and to the position field
/// (coefficient `kappa`, with neighbor differences taken as shortest signed
/// arcs).
fn diffusion_step(
    lattice: &mut LatticeState,
    params: &RelaxationParams,
    constants: &PhysicalConstants,
) -> Result<()> {
    let m = lattice.ring().cells();
    let spacing = lattice.ring().spacing();
    let grid = *lattice.grid();
    let a_phi = params.kappa * params.dt / (constants.hbar * spacing * spacing);
    let a_z = params.kappa * params.dt / (spacing * spacing);

    let cells = lattice.cells();
    let mut phi_increments: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut z_next: Vec<(f64, f64)> = Vec::with_capacity(m);
    for x in 0..m {
        let prev = &cells[(x + m - 1) % m];
        let here = &cells[x];
        let next = &cells[(x + 1) % m];
        let inc: Vec<Complex64> = here
            .phi
            .amplitudes()
            .iter()
            .zip(prev.phi.amplitudes().iter().zip(next.phi.amplitudes()))
            .map(|(c, (p, n))| a_phi * (p + n - 2.0 * c))
            .collect();
        phi_increments.push(inc);
        let lap1 = grid.signed_arc(here.z.x1, next.z.x1) + grid.signed_arc(here.z.x1, prev.z.x1);
        let lap2 = grid.signed_arc(here.z.x2, next.z.x2) + grid.signed_arc(here.z.x2, prev.z.x2);
        z_next.push((
            grid.wrap(here.z.x1 + a_z * lap1),
            grid.wrap(here.z.x2 + a_z * lap2),
        ));
    }

    for (x, (cell, inc)) in lattice
        .cells_mut()
        .iter_mut()
        .zip(phi_increments)
        .enumerate()
    {
        let mut touched = false;
        for (a, d) in cell.phi.amplitudes_mut().iter_mut().zip(&inc) {
            if d.re != 0.0 || d.im != 0.0 {
                touched = true;
                *a += d;
            }
        }
        if touched {
            let norm = cell.phi.norm();
            if !(0.5..=2.0).contains(&norm) {
                return Err(CoreError::DiffusionUnstable { cell: x, norm });
            }
            if params.renormalize_cells {
                cell.phi.normalize();
            }
        }
        cell.z.x1 = z_next[x].0;
        cell.z.x2 = z_next[x].1;
    }
    Ok(())
}

/// Sum over adjacent cell pairs of the squared L2 wave-function difference
/// and of the squared periodic position differences. Zero exactly when the
/// lattice is homogeneous.
pub fn gradient_norms(lattice: &LatticeState) -> (f64, f64) {
    let m = lattice.ring().cells();
    let grid = lattice.grid();
    let mut g_phi = 0.0;
    let mut g_z = 0.0;
    for x in 0..m {
        let a = &lattice.cells()[x];
        let b = &lattice.cells()[(x + 1) % m];
        let d = a.phi.l2_distance(&b.phi);
        g_phi += d * d;
        let d1 = grid.signed_arc(a.z.x1, b.z.x1);
        let d2 = grid.signed_arc(a.z.x2, b.z.x2);
        g_z += d1 * d1 + d2 * d2;
    }
    (g_phi, g_z)
}

/// Time series of the lattice gradient norms.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GradientDiagnostics {
    samples: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    Phi,
    Z,
}

impl GradientDiagnostics {
    pub fn record(&mut self, lattice: &LatticeState) {
        let (g_phi, g_z) = gradient_norms(lattice);
        if let Some(&(last, _, _)) = self.samples.last() {
            assert!(lattice.t() > last, "diagnostics times must increase");
        }
        self.samples.push((lattice.t(), g_phi, g_z));
    }

    pub fn samples(&self) -> &[(f64, f64, f64)] {
        &self.samples
    }

    pub fn series(&self, kind: GradientKind) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|&(t, p, z)| match kind {
                GradientKind::Phi => (t, p),
                GradientKind::Z => (t, z),
            })
            .collect()
    }
}

/// Least-squares decay rate of `log G` against `t` over the given window;
/// returns the rate as a positive number for decaying data.
///
/// Requires at least 10 samples in the window, all strictly positive.
pub fn decay_rate_fit(
    diag: &GradientDiagnostics,
    window: (f64, f64),
    kind: GradientKind,
) -> Result<f64> {
    let pts: Vec<(f64, f64)> = diag
        .series(kind)
        .into_iter()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if pts.len() < 10 {
        return Err(CoreError::DecayFit(format!(
            "{} samples in window [{}, {}]; need at least 10",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let mut logged = Vec::with_capacity(pts.len());
    for (t, g) in pts {
        if !(g > 0.0) {
            return Err(CoreError::DecayFit(format!(
                "nonpositive gradient norm {g} at t = {t}"
            )));
        }
        logged.push((t, g.ln()));
    }
    let (slope, _) = linear_fit(&logged)
        .ok_or_else(|| CoreError::DecayFit("degenerate time window".into()))?;
    Ok(-slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ParticleConfig;
    use crate::lattice::init_homogeneous;
    use crate::{engine, rng};

    fn homogeneous_fixture(m: usize) -> (LatticeState, GridSpec) {
        let grid = GridSpec::new(32, 16.0).unwrap();
        let ring = RingSpec::for_grid(&grid, m).unwrap();
        let mut r = rng::stream(21, rng::SALT_LATTICE);
        let generic = crate::lattice::init_generic(ring, &grid, &mut r).unwrap();
        let template = generic.cells()[0].clone();
        (init_homogeneous(&template, ring).unwrap(), grid)
    }

    #[test]
    fn stability_bound_is_enforced() {
        let ring = RingSpec::new(8, 2.0).unwrap();
        let bad = RelaxationParams {
            kappa: 1.0,
            dt: 2.1,
            internal_dynamics: false,
            renormalize_cells: true,
        };
        assert!(bad.validate(&ring).is_err());
        let good = RelaxationParams {
            kappa: 1.0,
            dt: 0.9,
            internal_dynamics: false,
            renormalize_cells: true,
        };
        assert!(good.validate(&ring).is_ok());
    }

    #[test]
    fn homogeneous_lattice_is_a_fixed_point_for_any_kappa() {
        let (lattice0, grid) = homogeneous_fixture(8);
        let constants = PhysicalConstants::natural();
        let schedule = engine::MeasurementSchedule::free_flight(1.0, 1.0);
        for kappa in [0.0, 1e-3, 0.2, 0.9] {
            let params = RelaxationParams {
                kappa,
                dt: 1.0,
                internal_dynamics: false,
                renormalize_cells: true,
            };
            let driver = RelaxationDriver::new(
                params,
                grid,
                constants,
                SettingPair::new(0.0, 0.0),
                schedule,
            )
            .unwrap();
            let mut lattice = lattice0.clone();
            driver.step(&mut lattice).unwrap();
            assert_eq!(lattice.cells(), lattice0.cells(), "kappa = {kappa}");
        }
    }

    #[test]
    fn gradient_norms_examples() {
        let (mut lattice, grid) = homogeneous_fixture(8);
        assert_eq!(gradient_norms(&lattice), (0.0, 0.0));

        let delta = 0.3;
        let z = lattice.cells()[2].z;
        lattice.cells_mut()[2].z = ParticleConfig::new(z.x1 + delta, z.x2).wrapped(&grid);
        let (g_phi, g_z) = gradient_norms(&lattice);
        assert_eq!(g_phi, 0.0);
        assert!((g_z - 2.0 * delta * delta).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let mut diag = GradientDiagnostics::default();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            diag.samples.push((t, (-3.0 * t).exp(), (-3.0 * t).exp()));
        }
        let rate = decay_rate_fit(&diag, (0.0, 2.0), GradientKind::Phi).unwrap();
        assert!((rate - 3.0).abs() < 1e-6);
    }

    #[test]
    fn decay_fit_preconditions() {
        let mut diag = GradientDiagnostics::default();
        for i in 0..5 {
            diag.samples.push((i as f64, 1.0, 1.0));
        }
        assert!(decay_rate_fit(&diag, (0.0, 10.0), GradientKind::Phi).is_err());

        let mut diag = GradientDiagnostics::default();
        for i in 0..12 {
            diag.samples.push((i as f64, 0.0, 1.0));
        }
        assert!(decay_rate_fit(&diag, (0.0, 20.0), GradientKind::Phi).is_err());
        assert!(decay_rate_fit(&diag, (0.0, 20.0), GradientKind::Z).is_ok());
    }
}
