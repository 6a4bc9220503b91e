//! Standard (non-local) pilot-wave engine: spinor wave-function evolution by
//! split-step Fourier integration, guiding-equation trajectories, and an
//! impulsive Stern-Gerlach readout that turns spin measurements into position
//! signs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft::{Fft2, Fft2Scratch};
use crate::field::{ParticleConfig, SpinorField, VelocityField};
use crate::grid::{GridSpec, PhysicalConstants};
use crate::oracle::{Outcome, SettingPair};
use crate::{exec, CoreError, Result};

/// Impulsive measurement protocol: a top-hat coupling `-g(t) x (n.sigma)` per
/// wing followed by free flight, with the outcome read off as the sign of the
/// particle position relative to the domain midpoint at `t_read`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    pub coupling_strength: f64,
    pub window1: (f64, f64),
    pub window2: (f64, f64),
    pub t_read: f64,
    pub sigma0: f64,
}

impl MeasurementSchedule {
    /// Validates window ordering, packet separation and wrap-around margins.
    ///
    /// Per wing the packet centers drift to `+-d` with
    /// `d = impulse * (t_read - window midpoint) / m`; construction requires
    /// `2d >= 5 sigma(t_read)` (resolvable readout) and
    /// `d + 4 sigma(t_read) <= L/2` (no leakage through the periodic seam).
    pub fn new(
        coupling_strength: f64,
        window1: (f64, f64),
        window2: (f64, f64),
        t_read: f64,
        sigma0: f64,
        grid: &GridSpec,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if !(coupling_strength >= 0.0) {
            return Err(CoreError::InvalidSchedule(format!(
                "coupling strength must be nonnegative, got {coupling_strength}"
            )));
        }
        if !(sigma0 > 0.0) || !(t_read > 0.0) {
            return Err(CoreError::InvalidSchedule(
                "sigma0 and t_read must be positive".into(),
            ));
        }
        let schedule = Self {
            coupling_strength,
            window1,
            window2,
            t_read,
            sigma0,
        };
        if coupling_strength > 0.0 {
            let sigma_read = schedule.packet_width_at(t_read, constants);
            for (wing, &(t_on, t_off)) in [window1, window2].iter().enumerate() {
                if !(t_on < t_off && t_off <= t_read) {
                    return Err(CoreError::InvalidSchedule(format!(
                        "wing {} window ({t_on}, {t_off}) must satisfy t_on < t_off <= t_read = {t_read}",
                        wing + 1
                    )));
                }
                let d = schedule.displacement(wing, constants);
                if 2.0 * d < 5.0 * sigma_read {
                    return Err(CoreError::InvalidSchedule(format!(
                        "wing {} packet separation {:.4} below 5 x packet width {:.4} at t_read",
                        wing + 1,
                        2.0 * d,
                        5.0 * sigma_read
                    )));
                }
                if d + 4.0 * sigma_read > 0.5 * grid.length() {
                    return Err(CoreError::InvalidSchedule(format!(
                        "wing {} packet drift {:.4} + 4 sigma {:.4} exceeds half domain {:.4}",
                        wing + 1,
                        d,
                        4.0 * sigma_read,
                        0.5 * grid.length()
                    )));
                }
            }
        }
        Ok(schedule)
    }

    /// Free flight only: no coupling, readout time and packet width retained.
    pub fn free_flight(t_read: f64, sigma0: f64) -> Self {
        Self {
            coupling_strength: 0.0,
            window1: (0.0, 0.0),
            window2: (0.0, 0.0),
            t_read,
            sigma0,
        }
    }

    fn window(&self, wing: usize) -> (f64, f64) {
        if wing == 0 {
            self.window1
        } else {
            self.window2
        }
    }

    /// Total momentum impulse delivered to one wing.
    pub fn impulse(&self, wing: usize) -> f64 {
        let (t_on, t_off) = self.window(wing);
        self.coupling_strength * (t_off - t_on)
    }

    /// Drift of the kicked packet centers away from the midpoint at `t_read`.
    pub fn displacement(&self, wing: usize, constants: &PhysicalConstants) -> f64 {
        let (t_on, t_off) = self.window(wing);
        self.impulse(wing) * (self.t_read - 0.5 * (t_on + t_off)) / constants.mass
    }

    /// Free-spreading packet width at time `t` for the initial width sigma0.
    pub fn packet_width_at(&self, t: f64, constants: &PhysicalConstants) -> f64 {
        let s0 = self.sigma0;
        let spread = constants.hbar * t / (2.0 * constants.mass * s0);
        (s0 * s0 + spread * spread).sqrt()
    }

    /// Coupling integral of one wing over `[t, t + dt]`.
    pub fn impulse_over(&self, wing: usize, t: f64, dt: f64) -> f64 {
        let (t_on, t_off) = self.window(wing);
        let lo = t.max(t_on);
        let hi = (t + dt).min(t_off);
        if hi > lo {
            self.coupling_strength * (hi - lo)
        } else {
            0.0
        }
    }
}

/// Prepare the two-particle singlet with identical periodic Gaussian packets
/// of width `sigma0` centered at the domain midpoint on both axes.
pub fn prepare_singlet_state(grid: &GridSpec, sigma0: f64) -> Result<SpinorField> {
    let h = grid.spacing();
    if sigma0 < 4.0 * h {
        return Err(CoreError::InvalidGrid(format!(
            "grid too coarse for sigma0 = {sigma0}: need sigma0 >= 4 x spacing = {}",
            4.0 * h
        )));
    }
    if sigma0 > grid.length() / 16.0 {
        return Err(CoreError::InvalidGrid(format!(
            "sigma0 = {sigma0} exceeds domain_length/16 = {}",
            grid.length() / 16.0
        )));
    }
    let n = grid.points();
    let x0 = grid.midpoint();
    let length = grid.length();
    // wrapped Gaussian amplitude; +-2 images are far below roundoff already
    let envelope: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid.node(i);
            (-2..=2)
                .map(|w| {
                    let d = x - x0 + w as f64 * length;
                    (-d * d / (4.0 * sigma0 * sigma0)).exp()
                })
                .sum()
        })
        .collect();

    let mut field = SpinorField::zeros(*grid);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i1 in 0..n {
        for i2 in 0..n {
            let g = envelope[i1] * envelope[i2] * inv_sqrt2;
            field.plane_mut(0, 1)[i1 * n + i2] = Complex64::new(g, 0.0);
            field.plane_mut(1, 0)[i1 * n + i2] = Complex64::new(-g, 0.0);
        }
    }
    field.normalize();
    Ok(field)
}

/// Split-step propagator for a fixed `(settings, schedule, dt)`.
///
/// Each step applies a half kinetic sweep in Fourier space, the exact spin
/// kick accumulated over the step's overlap with the coupling windows, and a
/// second half kinetic sweep. Shareable across threads; pass a per-thread
/// scratch.
pub struct Propagator {
    grid: GridSpec,
    constants: PhysicalConstants,
    settings: SettingPair,
    schedule: MeasurementSchedule,
    dt: f64,
    fft: Fft2,
    half_kinetic: Vec<Complex64>,
    full_kinetic: Vec<Complex64>,
}

impl Propagator {
    pub fn new(
        grid: GridSpec,
        constants: PhysicalConstants,
        settings: SettingPair,
        schedule: MeasurementSchedule,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(CoreError::InvalidSchedule(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let n = grid.points();
        let mut half_kinetic = vec![Complex64::default(); n * n];
        let mut full_kinetic = vec![Complex64::default(); n * n];
        let coeff = -constants.hbar * dt / (4.0 * constants.mass);
        for i1 in 0..n {
            let k1 = grid.wavenumber(i1);
            for i2 in 0..n {
                let k2 = grid.wavenumber(i2);
                let phase = coeff * (k1 * k1 + k2 * k2);
                half_kinetic[i1 * n + i2] = Complex64::new(phase.cos(), phase.sin());
                full_kinetic[i1 * n + i2] = Complex64::new((2.0 * phase).cos(), (2.0 * phase).sin());
            }
        }
        Ok(Self {
            grid,
            constants,
            settings,
            schedule,
            dt,
            fft: Fft2::new(n),
            half_kinetic,
            full_kinetic,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn scratch(&self) -> Fft2Scratch {
        self.fft.scratch()
    }

    /// Advance the field from `t` to `t + dt` in place.
    ///
    /// Steps whose window overlap vanishes collapse the two kinetic
    /// half-sweeps into a single full sweep (the same diagonal operator).
    pub fn step(&self, field: &mut SpinorField, t: f64) -> Result<()> {
        let k1 = self.schedule.impulse_over(0, t, self.dt) / self.constants.hbar;
        let k2 = self.schedule.impulse_over(1, t, self.dt) / self.constants.hbar;
        if k1 != 0.0 || k2 != 0.0 {
            self.kinetic(field, &self.half_kinetic);
            self.spin_kick(field, k1, k2);
            self.kinetic(field, &self.half_kinetic);
        } else {
            self.kinetic(field, &self.full_kinetic);
        }
        field.check_finite(t + self.dt)?;
        Ok(())
    }

    fn kinetic(&self, field: &mut SpinorField, phases: &[Complex64]) {
        let fft = &self.fft;
        let mut planes = field.planes_mut();
        exec::for_each_mut_with(
            &mut planes,
            || fft.scratch(),
            |scratch, plane| {
                fft.forward(plane, scratch);
                for (a, p) in plane.iter_mut().zip(phases) {
                    *a *= p;
                }
                fft.inverse(plane, scratch);
            },
        );
    }

    /// Apply `exp(i k1 x1' (a.sigma1)) exp(i k2 x2' (b.sigma2))` pointwise,
    /// with `x'` measured from the midpoint. The two factors commute.
    fn spin_kick(&self, field: &mut SpinorField, k1: f64, k2: f64) {
        let n = self.grid.points();
        let n2 = n * n;
        let mid = self.grid.midpoint();
        let (alpha, beta) = (
            self.settings.alpha.radians(),
            self.settings.beta.radians(),
        );
        let amps = field.amplitudes_mut();
        let (upper, lower) = amps.split_at_mut(2 * n2);
        let (p00, p01) = upper.split_at_mut(n2);
        let (p10, p11) = lower.split_at_mut(n2);

        if k1 != 0.0 {
            // mixes s1 for each s2 column; the rotation angle varies with x1 (rows)
            let (ca, sa) = (alpha.cos(), alpha.sin());
            for i1 in 0..n {
                let phi = k1 * (self.grid.node(i1) - mid);
                let (c, s) = (phi.cos(), phi.sin());
                let u00 = Complex64::new(c, s * ca);
                let u01 = Complex64::new(0.0, s * sa);
                let u11 = Complex64::new(c, -s * ca);
                for pair in [(&mut *p00, &mut *p10), (&mut *p01, &mut *p11)] {
                    let row = i1 * n..(i1 + 1) * n;
                    let (top, bottom) = (&mut pair.0[row.clone()], &mut pair.1[row]);
                    for (a, b) in top.iter_mut().zip(bottom.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = u00 * x + u01 * y;
                        *b = u01 * x + u11 * y;
                    }
                }
            }
        }
        if k2 != 0.0 {
            // mixes s2 for each s1 row; the rotation angle varies with x2 (columns)
            let (cb, sb) = (beta.cos(), beta.sin());
            let mut u00 = vec![Complex64::default(); n];
            let mut u01 = vec![Complex64::default(); n];
            let mut u11 = vec![Complex64::default(); n];
            for i2 in 0..n {
                let phi = k2 * (self.grid.node(i2) - mid);
                let (c, s) = (phi.cos(), phi.sin());
                u00[i2] = Complex64::new(c, s * cb);
                u01[i2] = Complex64::new(0.0, s * sb);
                u11[i2] = Complex64::new(c, -s * cb);
            }
            for pair in [(&mut *p00, &mut *p01), (&mut *p10, &mut *p11)] {
                for i1 in 0..n {
                    let row = i1 * n..(i1 + 1) * n;
                    let (top, bottom) = (&mut pair.0[row.clone()], &mut pair.1[row]);
                    for i2 in 0..n {
                        let (x, y) = (top[i2], bottom[i2]);
                        top[i2] = u00[i2] * x + u01[i2] * y;
                        bottom[i2] = u01[i2] * x + u11[i2] * y;
                    }
                }
            }
        }
    }
}

/// One split step of the field; `dt = 0` returns the input unchanged.
pub fn evolve_step(
    field: &SpinorField,
    settings: SettingPair,
    schedule: &MeasurementSchedule,
    constants: &PhysicalConstants,
    t: f64,
    dt: f64,
) -> Result<SpinorField> {
    if dt == 0.0 {
        return Ok(field.clone());
    }
    let prop = Propagator::new(*field.grid(), *constants, settings, *schedule, dt)?;
    let mut out = field.clone();
    prop.step(&mut out, t)?;
    Ok(out)
}

/// Guiding velocity of both particles at the given configuration.
pub fn guiding_velocity(
    field: &SpinorField,
    config: &ParticleConfig,
    constants: &PhysicalConstants,
) -> Result<(f64, f64)> {
    VelocityField::new(field, constants).velocity_at(config)
}

/// Fourth-order Runge-Kutta advance of one configuration across one field
/// step, with the velocity field interpolated linearly in time between the
/// step's endpoints.
pub fn advance_trajectory(
    config: &ParticleConfig,
    vel_start: &VelocityField,
    vel_end: &VelocityField,
    grid: &GridSpec,
    dt: f64,
) -> Result<ParticleConfig> {
    let eval = |c: &ParticleConfig, tau: f64| -> Result<(f64, f64)> {
        let (a1, a2) = vel_start.velocity_at(c)?;
        let (b1, b2) = vel_end.velocity_at(c)?;
        Ok(((1.0 - tau) * a1 + tau * b1, (1.0 - tau) * a2 + tau * b2))
    };
    let shift = |c: &ParticleConfig, v: (f64, f64), s: f64| {
        ParticleConfig::new(c.x1 + s * v.0, c.x2 + s * v.1).wrapped(grid)
    };
    let k1 = eval(config, 0.0)?;
    let k2 = eval(&shift(config, k1, 0.5 * dt), 0.5)?;
    let k3 = eval(&shift(config, k2, 0.5 * dt), 0.5)?;
    let k4 = eval(&shift(config, k3, dt), 1.0)?;
    let v = (
        (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0) / 6.0,
        (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1) / 6.0,
    );
    Ok(shift(config, v, dt))
}

/// Time-ordered positions of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryTrace {
    samples: Vec<(f64, ParticleConfig)>,
}

impl TrajectoryTrace {
    pub fn push(&mut self, t: f64, config: ParticleConfig) {
        if let Some(&(last, _)) = self.samples.last() {
            assert!(t > last, "trace times must be strictly increasing");
        }
        self.samples.push((t, config));
    }

    pub fn samples(&self) -> &[(f64, ParticleConfig)] {
        &self.samples
    }
}

/// Result of one trajectory in a measurement sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    /// `None` when the run was flagged (ambiguous readout).
    pub outcome: Option<(Outcome, Outcome)>,
    pub flagged: bool,
    pub final_config: ParticleConfig,
}

/// Outcome of a full measurement sweep over an ensemble of configurations.
pub struct MeasurementRun {
    pub records: Vec<MeasurementRecord>,
    pub traces: Option<Vec<TrajectoryTrace>>,
    pub final_field: SpinorField,
    pub flagged_count: usize,
}

impl MeasurementRun {
    /// Unflagged outcomes in run order.
    pub fn outcomes(&self) -> Vec<(Outcome, Outcome)> {
        self.records.iter().filter_map(|r| r.outcome).collect()
    }
}

/// Evolve the field once from `t = 0` to `t_read` while co-integrating all
/// ensemble trajectories through the time-dependent guiding field; read
/// outcomes as position signs relative to the midpoint.
///
/// Runs whose final position falls within one packet width of the midpoint on
/// either wing are flagged and carry no outcome. `trace_stride` of `Some(k)`
/// records every k-th step of every trajectory.
pub fn run_measurement(
    field0: &SpinorField,
    settings: SettingPair,
    schedule: &MeasurementSchedule,
    constants: &PhysicalConstants,
    configs: &[ParticleConfig],
    dt: f64,
    trace_stride: Option<usize>,
) -> Result<MeasurementRun> {
    if configs.is_empty() {
        return Err(CoreError::Ensemble("no configurations to measure".into()));
    }
    let grid = *field0.grid();
    let n_steps = (schedule.t_read / dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * dt - schedule.t_read).abs() > 1e-9 * schedule.t_read {
        return Err(CoreError::InvalidSchedule(format!(
            "t_read = {} is not an integer number of steps of dt = {}",
            schedule.t_read, dt
        )));
    }
    let prop = Propagator::new(grid, *constants, settings, *schedule, dt)?;

    let mut field = field0.clone();
    let mut positions: Vec<ParticleConfig> = configs.iter().map(|c| c.wrapped(&grid)).collect();
    let mut failures: Vec<Option<CoreError>> = (0..positions.len()).map(|_| None).collect();
    let mut traces: Option<Vec<TrajectoryTrace>> = trace_stride.map(|_| {
        positions
            .iter()
            .map(|c| {
                let mut tr = TrajectoryTrace::default();
                tr.push(0.0, *c);
                tr
            })
            .collect()
    });

    let mut vel_prev = VelocityField::build(&field, constants, prop.fft());
    // time accumulates by addition, matching the lattice clock bit for bit
    let mut t = 0.0;
    for step in 0..n_steps {
        prop.step(&mut field, t)?;
        let vel_next = VelocityField::build(&field, constants, prop.fft());

        let mut slots: Vec<(ParticleConfig, Option<CoreError>)> = positions
            .iter()
            .zip(failures.iter_mut())
            .map(|(c, f)| (*c, f.take()))
            .collect();
        exec::for_each_mut(&mut slots, |slot| {
            if slot.1.is_some() {
                return;
            }
            match advance_trajectory(&slot.0, &vel_prev, &vel_next, &grid, dt) {
                Ok(next) => slot.0 = next,
                Err(e) => slot.1 = Some(e),
            }
        });
        for (i, (c, f)) in slots.into_iter().enumerate() {
            positions[i] = c;
            failures[i] = f;
        }
        t += dt;
        if let (Some(traces), Some(stride)) = (traces.as_mut(), trace_stride) {
            if stride > 0 && (step + 1) % stride == 0 {
                for (tr, c) in traces.iter_mut().zip(&positions) {
                    tr.push(t, *c);
                }
            }
        }
        vel_prev = vel_next;
    }
    if let Some(e) = failures.into_iter().flatten().next() {
        return Err(e);
    }

    let mid = grid.midpoint();
    let guard = schedule.packet_width_at(schedule.t_read, constants);
    let mut flagged_count = 0;
    let records: Vec<MeasurementRecord> = positions
        .iter()
        .map(|c| {
            let flagged = (c.x1 - mid).abs() < guard || (c.x2 - mid).abs() < guard;
            let outcome = if flagged {
                flagged_count += 1;
                None
            } else {
                let a = if c.x1 > mid { Outcome::Plus } else { Outcome::Minus };
                let b = if c.x2 > mid { Outcome::Plus } else { Outcome::Minus };
                Some((a, b))
            };
            MeasurementRecord {
                outcome,
                flagged,
                final_config: *c,
            }
        })
        .collect();

    Ok(MeasurementRun {
        records,
        traces,
        final_field: field,
        flagged_count,
    })
}

/// Sample mean of the outcome products and its standard error
/// (population standard deviation over sqrt(N)).
pub fn estimate_correlator(outcomes: &[(Outcome, Outcome)]) -> Result<(f64, f64)> {
    if outcomes.is_empty() {
        return Err(CoreError::EmptyOutcomes);
    }
    let n = outcomes.len() as f64;
    let products: Vec<f64> = outcomes.iter().map(|(a, b)| a.value() * b.value()).collect();
    let mean = products.iter().sum::<f64>() / n;
    let var = products.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Outcome::{Minus, Plus};

    fn grid() -> GridSpec {
        GridSpec::new(128, 16.0).unwrap()
    }

    #[test]
    fn singlet_structure() {
        let g = grid();
        let f = prepare_singlet_state(&g, 0.5).unwrap();
        let n = g.points();
        for i in 0..n * n {
            assert_eq!(f.plane(0, 0)[i], Complex64::default());
            assert_eq!(f.plane(1, 1)[i], Complex64::default());
            assert_eq!(f.plane(0, 1)[i], -f.plane(1, 0)[i]);
        }
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singlet_rejects_bad_widths() {
        let g = grid();
        assert!(prepare_singlet_state(&g, 0.1).is_err()); // < 4h = 0.5
        assert!(prepare_singlet_state(&g, 2.0).is_err()); // > L/16 = 1
    }

    #[test]
    fn schedule_validation() {
        let g = GridSpec::new(256, 16.0).unwrap();
        let c = PhysicalConstants::natural();
        // the default-style schedule is fine
        assert!(MeasurementSchedule::new(
            152.0,
            (0.0, 0.05),
            (0.06, 0.11),
            0.5,
            std::f64::consts::FRAC_1_SQRT_2,
            &g,
            &c
        )
        .is_ok());
        // too weak a kick fails the separation condition
        assert!(MeasurementSchedule::new(
            5.0,
            (0.0, 0.05),
            (0.06, 0.11),
            0.5,
            std::f64::consts::FRAC_1_SQRT_2,
            &g,
            &c
        )
        .is_err());
        // inverted window
        assert!(MeasurementSchedule::new(
            152.0,
            (0.05, 0.0),
            (0.06, 0.11),
            0.5,
            std::f64::consts::FRAC_1_SQRT_2,
            &g,
            &c
        )
        .is_err());
    }

    #[test]
    fn zero_dt_returns_field_unchanged() {
        let g = grid();
        let c = PhysicalConstants::natural();
        let f = prepare_singlet_state(&g, 0.5).unwrap();
        let schedule = MeasurementSchedule::free_flight(1.0, 0.5);
        let out = evolve_step(&f, SettingPair::new(0.0, 0.0), &schedule, &c, 0.0, 0.0).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn correlator_examples() {
        let (e, se) = estimate_correlator(&[(Plus, Minus), (Plus, Minus)]).unwrap();
        assert_eq!((e, se), (-1.0, 0.0));
        let (e, se) = estimate_correlator(&[(Plus, Plus), (Plus, Minus)]).unwrap();
        assert_eq!(e, 0.0);
        assert!((se - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(estimate_correlator(&[]).is_err());
    }

    #[test]
    fn impulse_overlap_integral() {
        let g = GridSpec::new(256, 16.0).unwrap();
        let c = PhysicalConstants::natural();
        let s = MeasurementSchedule::new(
            152.0,
            (0.0, 0.05),
            (0.06, 0.11),
            0.5,
            std::f64::consts::FRAC_1_SQRT_2,
            &g,
            &c,
        )
        .unwrap();
        assert!((s.impulse_over(0, 0.0, 0.5) - s.impulse(0)).abs() < 1e-12);
        assert_eq!(s.impulse_over(0, 0.2, 0.1), 0.0);
        let partial = s.impulse_over(0, 0.04, 0.02);
        assert!((partial - 152.0 * 0.01).abs() < 1e-12);
    }
}
