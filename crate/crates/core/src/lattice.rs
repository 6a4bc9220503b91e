//! Ring lattice of internal pilot-wave systems.
//!
//! Each of the M cells on the physical ring carries a complete two-particle
//! pilot-wave system (a wave function over an internal copy of the ring plus
//! an internal configuration). Evolution is ultra-local: no cell ever reads
//! another cell. Mass appears at a cell only when one of its internal
//! particle coordinates matches the cell's own position.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{advance_trajectory, MeasurementSchedule, Propagator, TrajectoryTrace};
use crate::fft::Fft2;
use crate::field::{born_sample, ParticleConfig, SpinorField, VelocityField};
use crate::grid::{GridSpec, PhysicalConstants};
use crate::oracle::{Outcome, SettingPair};
use crate::{exec, CoreError, Result};

/// The physical ring: M cells of width `spacing`, periodic.
///
/// Each cell's internal configuration space is a coordinate-wise copy of the
/// ring, so the circumference must equal the internal grid's domain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    cells: usize,
    spacing: f64,
}

impl RingSpec {
    pub fn new(cells: usize, spacing: f64) -> Result<Self> {
        if cells < 2 {
            return Err(CoreError::InvalidRing(format!(
                "need at least 2 cells, got {cells}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(CoreError::InvalidRing(format!(
                "cell spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { cells, spacing })
    }

    /// Ring subdividing the grid's domain into `cells` cells.
    pub fn for_grid(grid: &GridSpec, cells: usize) -> Result<Self> {
        Self::new(cells, grid.length() / cells as f64)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn circumference(&self) -> f64 {
        self.cells as f64 * self.spacing
    }

    pub fn center(&self, cell: usize) -> f64 {
        (cell as f64 + 0.5) * self.spacing
    }

    /// Cell whose center lies within half a spacing of `x`, ties on the
    /// upper edge going to the lower-index cell.
    pub fn cell_of(&self, x: f64) -> usize {
        let m = self.cells;
        let w = x.rem_euclid(self.circumference());
        let c = (w / self.spacing).floor() as usize;
        let c = c.min(m - 1);
        if w == c as f64 * self.spacing && c > 0 {
            c - 1
        } else {
            c
        }
    }

    /// Index distance between two cells along the ring.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b) % self.cells;
        d.min(self.cells - d)
    }

    fn matches_grid(&self, grid: &GridSpec) -> Result<()> {
        let c = self.circumference();
        if (c - grid.length()).abs() > 1e-9 * grid.length() {
            return Err(CoreError::InvalidRing(format!(
                "ring circumference {c} does not match internal domain length {}",
                grid.length()
            )));
        }
        Ok(())
    }
}

/// One cell: a complete internal pilot-wave system.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub phi: SpinorField,
    pub z: ParticleConfig,
}

impl CellState {
    pub fn new(phi: SpinorField, z: ParticleConfig) -> Self {
        let z = z.wrapped(phi.grid());
        Self { phi, z }
    }
}

/// The full lattice: ring geometry, one cell state per ring cell, and time.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    ring: RingSpec,
    cells: Vec<CellState>,
    t: f64,
}

impl LatticeState {
    pub fn new(ring: RingSpec, cells: Vec<CellState>, t: f64) -> Result<Self> {
        if cells.len() != ring.cells() {
            return Err(CoreError::InvalidRing(format!(
                "{} cell states for a ring of {} cells",
                cells.len(),
                ring.cells()
            )));
        }
        let grid = *cells[0].phi.grid();
        ring.matches_grid(&grid)?;
        for (i, cell) in cells.iter().enumerate() {
            if *cell.phi.grid() != grid {
                return Err(CoreError::InvalidRing(format!(
                    "cell {i} uses a different grid"
                )));
            }
            let norm = cell.phi.norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(CoreError::InvalidRing(format!(
                    "cell {i} norm {norm} not within 1e-10 of 1"
                )));
            }
        }
        Ok(Self { ring, cells, t })
    }

    pub fn ring(&self) -> &RingSpec {
        &self.ring
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellState] {
        &mut self.cells
    }

    pub fn grid(&self) -> &GridSpec {
        self.cells[0].phi.grid()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Re-origin the lattice clock, e.g. when a relaxed lattice enters a
    /// measurement whose schedule counts from zero.
    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub(crate) fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

/// Every cell an exact copy of the template.
pub fn init_homogeneous(template: &CellState, ring: RingSpec) -> Result<LatticeState> {
    LatticeState::new(ring, vec![template.clone(); ring.cells()], 0.0)
}

/// Independent random cell states: each cell gets a normalized random-phase
/// superposition of low Fourier modes and an internal configuration sampled
/// from its own `|phi|^2`.
pub fn init_generic<R: Rng + ?Sized>(
    ring: RingSpec,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<LatticeState> {
    ring.matches_grid(grid)?;
    let fft = Fft2::new(grid.points());
    let cells: Vec<CellState> = (0..ring.cells())
        .map(|_| {
            let phi = random_low_mode_field(grid, &fft, rng);
            let z = born_sample(&phi, rng);
            CellState { phi, z }
        })
        .collect();
    LatticeState::new(ring, cells, 0.0)
}

/// Template plus independent per-cell noise: the wave function is nudged by
/// a random field of relative amplitude `phi_amplitude` and renormalized, the
/// internal positions are shifted uniformly within `[-z_amplitude, z_amplitude]`.
pub fn init_perturbed<R: Rng + ?Sized>(
    template: &CellState,
    ring: RingSpec,
    phi_amplitude: f64,
    z_amplitude: f64,
    rng: &mut R,
) -> Result<LatticeState> {
    let grid = *template.phi.grid();
    ring.matches_grid(&grid)?;
    let fft = Fft2::new(grid.points());
    let cells: Vec<CellState> = (0..ring.cells())
        .map(|_| {
            let mut phi = template.phi.clone();
            if phi_amplitude != 0.0 {
                let noise = random_low_mode_field(&grid, &fft, rng);
                for (a, b) in phi.amplitudes_mut().iter_mut().zip(noise.amplitudes()) {
                    *a += phi_amplitude * b;
                }
                phi.normalize();
            }
            let dz1 = rng.random_range(-z_amplitude..=z_amplitude);
            let dz2 = rng.random_range(-z_amplitude..=z_amplitude);
            let z = ParticleConfig::new(template.z.x1 + dz1, template.z.x2 + dz2).wrapped(&grid);
            CellState { phi, z }
        })
        .collect();
    LatticeState::new(ring, cells, 0.0)
}

/// Template plus a single ring mode: cell `x` is perturbed by
/// `cos(2 pi mode x / M + phase)` times a run-specific noise field (wave
/// function) and position offset (configuration, opposite signs on the two
/// coordinates). The perturbation has zero mean across cells, so diffusive
/// relaxation drives the lattice back to the template exactly; its gradient
/// norms decay at the single discrete heat-kernel rate of that mode.
pub fn init_single_mode<R: Rng + ?Sized>(
    template: &CellState,
    ring: RingSpec,
    mode: usize,
    phi_amplitude: f64,
    z_amplitude: f64,
    rng: &mut R,
) -> Result<LatticeState> {
    let grid = *template.phi.grid();
    ring.matches_grid(&grid)?;
    let m = ring.cells();
    let fft = Fft2::new(grid.points());
    let chi = random_low_mode_field(&grid, &fft, rng);
    let phase_phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_z: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let cells: Vec<CellState> = (0..m)
        .map(|x| {
            let angle = std::f64::consts::TAU * (mode * x) as f64 / m as f64;
            let c = (angle + phase_phi).cos();
            let cz = (angle + phase_z).cos();
            let mut phi = template.phi.clone();
            if phi_amplitude != 0.0 {
                for (a, b) in phi.amplitudes_mut().iter_mut().zip(chi.amplitudes()) {
                    *a += phi_amplitude * c * b;
                }
                phi.normalize();
            }
            let z = ParticleConfig::new(
                template.z.x1 + z_amplitude * cz,
                template.z.x2 - z_amplitude * cz,
            )
            .wrapped(&grid);
            CellState { phi, z }
        })
        .collect();
    LatticeState::new(ring, cells, 0.0)
}

/// Normalized random superposition: complex Gaussian coefficients on Fourier
/// modes with frequencies up to 4 per axis, tapered by a Gaussian envelope.
fn random_low_mode_field<R: Rng + ?Sized>(grid: &GridSpec, fft: &Fft2, rng: &mut R) -> SpinorField {
    let n = grid.points();
    let max_freq: isize = 4;
    let mut field = SpinorField::zeros(*grid);
    let mut scratch = fft.scratch();
    for s in 0..4 {
        let plane = field.plane_mut(s / 2, s % 2);
        for i1 in 0..n {
            let f1 = signed_freq(i1, n);
            if f1.abs() > max_freq {
                continue;
            }
            for i2 in 0..n {
                let f2 = signed_freq(i2, n);
                if f2.abs() > max_freq {
                    continue;
                }
                let weight = (-((f1 * f1 + f2 * f2) as f64) / 8.0).exp();
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                plane[i1 * n + i2] = Complex64::new(re, im) * weight;
            }
        }
        fft.inverse(plane, &mut scratch);
    }
    field.normalize();
    field
}

fn signed_freq(i: usize, n: usize) -> isize {
    let i = i as isize;
    let n = n as isize;
    if i <= n / 2 {
        i
    } else {
        i - n
    }
}

/// Shared evolution machinery for one `(settings, schedule, dt)` choice.
pub struct EvolutionContext {
    constants: PhysicalConstants,
    propagator: Propagator,
}

impl EvolutionContext {
    pub fn new(
        grid: GridSpec,
        constants: PhysicalConstants,
        settings: SettingPair,
        schedule: MeasurementSchedule,
        dt: f64,
    ) -> Result<Self> {
        Ok(Self {
            constants,
            propagator: Propagator::new(grid, constants, settings, schedule, dt)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.propagator.dt()
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// One internal step of a single cell: field step plus trajectory advance
    /// through the step's guiding field.
    pub fn advance_cell(&self, cell: &mut CellState, t: f64) -> Result<()> {
        let vel_prev = self.cell_velocity(cell);
        self.advance_cell_cached(cell, &vel_prev, t)?;
        Ok(())
    }

    /// Velocity field of a cell's current wave function.
    pub fn cell_velocity(&self, cell: &CellState) -> VelocityField {
        VelocityField::build(&cell.phi, &self.constants, self.propagator.fft())
    }

    /// Like [`Self::advance_cell`] but reusing a previously computed velocity
    /// field for the step start; returns the post-step velocity so loops can
    /// chain it. Because the cached value equals a fresh rebuild bit for bit,
    /// chained and per-call evolution agree exactly.
    pub fn advance_cell_cached(
        &self,
        cell: &mut CellState,
        vel_prev: &VelocityField,
        t: f64,
    ) -> Result<VelocityField> {
        let grid = *cell.phi.grid();
        self.propagator.step(&mut cell.phi, t)?;
        let vel_next = self.cell_velocity(cell);
        cell.z = advance_trajectory(&cell.z, vel_prev, &vel_next, &grid, self.propagator.dt())?;
        Ok(vel_next)
    }
}

/// Stateful multi-step lattice evolution that carries each cell's velocity
/// field across steps, halving the spectral work of long faithful runs.
pub struct LatticeSweep<'a> {
    ctx: &'a EvolutionContext,
    velocities: Vec<VelocityField>,
}

impl<'a> LatticeSweep<'a> {
    pub fn new(ctx: &'a EvolutionContext, lattice: &LatticeState) -> Self {
        let velocities = exec::map_collect(lattice.cells(), |cell| ctx.cell_velocity(cell));
        Self { ctx, velocities }
    }

    /// One faithful step of every cell.
    pub fn step(&mut self, lattice: &mut LatticeState) -> Result<()> {
        let t = lattice.t();
        let ctx = self.ctx;
        let mut failures: Vec<Option<CoreError>> =
            (0..lattice.cells().len()).map(|_| None).collect();
        {
            let mut work: Vec<((&mut CellState, &mut VelocityField), &mut Option<CoreError>)> =
                lattice
                    .cells_mut()
                    .iter_mut()
                    .zip(self.velocities.iter_mut())
                    .zip(failures.iter_mut())
                    .collect();
            exec::for_each_mut(&mut work, |((cell, vel), failure)| {
                match ctx.advance_cell_cached(cell, vel, t) {
                    Ok(next) => **vel = next,
                    Err(e) => **failure = Some(e),
                }
            });
        }
        if let Some(e) = failures.into_iter().flatten().next() {
            return Err(e);
        }
        lattice.set_t(t + ctx.dt());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolveMode {
    /// Every cell evolves independently.
    Faithful,
    /// Evolve one cell and replicate; legal only on homogeneous lattices.
    Fast,
}

/// Advance the whole lattice by one step of the context's `dt`.
///
/// Faithful mode runs every cell independently (in parallel when enabled);
/// fast mode verifies homogeneity at 1e-12, evolves cell 0, and replicates.
/// The two agree bit-exactly on homogeneous input.
pub fn evolve_lattice(
    lattice: &mut LatticeState,
    ctx: &EvolutionContext,
    mode: EvolveMode,
) -> Result<()> {
    match mode {
        EvolveMode::Faithful => {
            LatticeSweep::new(ctx, lattice).step(lattice)?;
        }
        EvolveMode::Fast => {
            let t = lattice.t();
            let report = check_homogeneity(lattice, 1e-12);
            if !report.pass {
                return Err(CoreError::InhomogeneousFastMode(format!(
                    "grad_phi_max = {:e}, grad_z_max = {:e}",
                    report.grad_phi_max, report.grad_z_max
                )));
            }
            let mut head = lattice.cells()[0].clone();
            ctx.advance_cell(&mut head, t)?;
            for cell in lattice.cells_mut() {
                *cell = head.clone();
            }
            lattice.set_t(t + ctx.dt());
        }
    }
    Ok(())
}

/// Discrete homogeneity constraint check across all adjacent cell pairs,
/// wraparound included (M pairs on a ring of M cells).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneityReport {
    /// Max L2 difference of neighboring wave functions.
    pub grad_phi_max: f64,
    /// Max periodic distance of neighboring internal positions, per coordinate.
    pub grad_z_max: f64,
    pub pairs_evaluated: usize,
    pub epsilon: f64,
    pub pass: bool,
}

pub fn check_homogeneity(lattice: &LatticeState, epsilon: f64) -> HomogeneityReport {
    let m = lattice.ring().cells();
    let grid = lattice.grid();
    let mut grad_phi_max: f64 = 0.0;
    let mut grad_z_max: f64 = 0.0;
    for x in 0..m {
        let a = &lattice.cells()[x];
        let b = &lattice.cells()[(x + 1) % m];
        grad_phi_max = grad_phi_max.max(a.phi.l2_distance(&b.phi));
        grad_z_max = grad_z_max
            .max(grid.signed_arc(a.z.x1, b.z.x1).abs())
            .max(grid.signed_arc(a.z.x2, b.z.x2).abs());
    }
    HomogeneityReport {
        grad_phi_max,
        grad_z_max,
        pairs_evaluated: m,
        epsilon,
        pass: grad_phi_max <= epsilon && grad_z_max <= epsilon,
    }
}

/// Which internal particles materialize at which ring cells.
///
/// Particle `i` (1 or 2) occupies cell `x` iff cell `x`'s own internal
/// coordinate `W_x^i` falls inside cell `x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MassDensity {
    /// `(cell, particle)` pairs, sorted; each pair appears at most once.
    pub occupancy: Vec<(usize, usize)>,
}

impl MassDensity {
    /// Cells occupied by the given particle (1 or 2).
    pub fn support(&self, particle: usize) -> Vec<usize> {
        self.occupancy
            .iter()
            .filter(|(_, p)| *p == particle)
            .map(|(c, _)| *c)
            .collect()
    }
}

pub fn mass_density(lattice: &LatticeState) -> MassDensity {
    let ring = lattice.ring();
    let mut occupancy = Vec::new();
    for (x, cell) in lattice.cells().iter().enumerate() {
        if ring.cell_of(cell.z.x1) == x {
            occupancy.push((x, 1));
        }
        if ring.cell_of(cell.z.x2) == x {
            occupancy.push((x, 2));
        }
    }
    occupancy.sort_unstable();
    MassDensity { occupancy }
}

/// Bell outcome read from the mass density: requires a single occupied cell
/// per particle, with the sign of its center relative to the ring midpoint.
pub fn support_outcome(density: &MassDensity, ring: &RingSpec) -> Option<(Outcome, Outcome)> {
    let mid = 0.5 * ring.circumference();
    let read = |particle: usize| -> Option<Outcome> {
        let support = density.support(particle);
        if support.len() != 1 {
            return None;
        }
        let c = ring.center(support[0]);
        if c > mid {
            Some(Outcome::Plus)
        } else if c < mid {
            Some(Outcome::Minus)
        } else {
            None
        }
    };
    Some((read(1)?, read(2)?))
}

/// FNV-1a fingerprint of a wave function's raw amplitude bytes.
pub fn field_fingerprint(field: &SpinorField) -> u64 {
    let mut h = fnv1a_init();
    for a in field.amplitudes() {
        h = fnv1a_bytes(h, &a.re.to_le_bytes());
        h = fnv1a_bytes(h, &a.im.to_le_bytes());
    }
    h
}

/// Setting pair indices derived from a cell's content: the low bits of the
/// hash over the wave-function fingerprint and the internal configuration.
/// Bit-exact in the cell state, which is the point: on a homogeneous lattice
/// any single cell reconstructs the settings.
pub fn fingerprint_settings(phi_fingerprint: u64, z: &ParticleConfig) -> (u8, u8) {
    let mut h = fnv1a_init();
    h = fnv1a_bytes(h, &phi_fingerprint.to_le_bytes());
    h = fnv1a_bytes(h, &z.x1.to_le_bytes());
    h = fnv1a_bytes(h, &z.x2.to_le_bytes());
    ((h & 1) as u8, ((h >> 1) & 1) as u8)
}

/// Hash of one cell's complete content.
pub fn cell_fingerprint(cell: &CellState) -> u64 {
    let mut h = fnv1a_init();
    h = fnv1a_bytes(h, &field_fingerprint(&cell.phi).to_le_bytes());
    h = fnv1a_bytes(h, &cell.z.x1.to_le_bytes());
    h = fnv1a_bytes(h, &cell.z.x2.to_le_bytes());
    h
}

fn fnv1a_init() -> u64 {
    0xcbf2_9ce4_8422_2325
}

fn fnv1a_bytes(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Maximum over time of the ring-index distance between the lattice
/// mass-density support and the cell-mapped reference trajectory.
///
/// Zero means identical support at every recorded time. An empty support
/// counts as the worst case. Errors if the two traces disagree on timestamps.
pub fn compare_to_reference(
    lattice_trace: &[(f64, MassDensity)],
    reference: &TrajectoryTrace,
    ring: &RingSpec,
) -> Result<usize> {
    let samples = reference.samples();
    if samples.len() != lattice_trace.len() {
        return Err(CoreError::MismatchedTimestamps {
            index: samples.len().min(lattice_trace.len()),
            left: f64::NAN,
            right: f64::NAN,
        });
    }
    let worst = ring.cells().div_ceil(2);
    let mut max_dev = 0usize;
    for (i, ((t_l, density), (t_r, config))) in
        lattice_trace.iter().zip(samples.iter()).enumerate()
    {
        if (t_l - t_r).abs() > 1e-12 {
            return Err(CoreError::MismatchedTimestamps {
                index: i,
                left: *t_l,
                right: *t_r,
            });
        }
        for (particle, x) in [(1, config.x1), (2, config.x2)] {
            let reference_cell = ring.cell_of(x);
            let support = density.support(particle);
            let dev = if support.is_empty() {
                worst
            } else {
                support
                    .iter()
                    .map(|&c| ring.distance(c, reference_cell))
                    .max()
                    .unwrap()
            };
            max_dev = max_dev.max(dev);
        }
    }
    Ok(max_dev)
}
