//! Two-particle spinor wave function on the periodic grid, its probability
//! current, and Born sampling.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fft::Fft2;
use crate::grid::{GridSpec, PhysicalConstants};
use crate::{exec, CoreError, Result};

/// Interpolated density below this fraction of the grid maximum counts as a
/// node of the wave function.
const NODE_FLOOR_REL: f64 = 1e-12;

/// Actual positions of the two particles, each in `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub x1: f64,
    pub x2: f64,
}

impl ParticleConfig {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn wrapped(self, grid: &GridSpec) -> Self {
        Self {
            x1: grid.wrap(self.x1),
            x2: grid.wrap(self.x2),
        }
    }
}

/// The four-spin-component wave function `psi(x1, x2, s1, s2)`.
///
/// Components are stored as four contiguous row-major planes indexed by
/// `s = 2*s1 + s2` with spin index 0 = up, 1 = down. Node `(i1, i2)` carries
/// the amplitude at `(i1*h, i2*h)`; the L2 norm uses the cell measure `h^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    amps: Vec<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.points();
        Self {
            grid,
            amps: vec![Complex64::default(); 4 * n * n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn plane(&self, s1: usize, s2: usize) -> &[Complex64] {
        let n2 = self.grid.points() * self.grid.points();
        let s = 2 * s1 + s2;
        &self.amps[s * n2..(s + 1) * n2]
    }

    pub fn plane_mut(&mut self, s1: usize, s2: usize) -> &mut [Complex64] {
        let n2 = self.grid.points() * self.grid.points();
        let s = 2 * s1 + s2;
        &mut self.amps[s * n2..(s + 1) * n2]
    }

    /// Mutable views of the four spin planes at once.
    pub fn planes_mut(&mut self) -> Vec<&mut [Complex64]> {
        let n2 = self.grid.points() * self.grid.points();
        self.amps.chunks_exact_mut(n2).collect()
    }

    pub fn amp(&self, s1: usize, s2: usize, i1: usize, i2: usize) -> Complex64 {
        let n = self.grid.points();
        self.plane(s1, s2)[i1 * n + i2]
    }

    /// Squared L2 norm with the `h^2` cell measure. Sequential sum.
    pub fn norm_sq(&self) -> f64 {
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for a in &self.amps {
            acc += a.norm_sqr();
        }
        acc * h * h
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rescale to unit norm.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in &mut self.amps {
            *a *= c;
        }
    }

    /// Spin-summed density at each grid node.
    pub fn spin_summed_density(&self) -> Vec<f64> {
        let n2 = self.grid.points() * self.grid.points();
        let mut d = vec![0.0; n2];
        for plane in self.amps.chunks_exact(n2) {
            for (acc, a) in d.iter_mut().zip(plane) {
                *acc += a.norm_sqr();
            }
        }
        d
    }

    /// Marginal density of particle `k` (0 or 1), summed over spins and the
    /// other axis; integrates to the squared norm.
    pub fn marginal_density(&self, k: usize) -> Vec<f64> {
        let n = self.grid.points();
        let h = self.grid.spacing();
        let d = self.spin_summed_density();
        let mut out = vec![0.0; n];
        for i1 in 0..n {
            for i2 in 0..n {
                let idx = if k == 0 { i1 } else { i2 };
                out[idx] += d[i1 * n + i2] * h;
            }
        }
        out
    }

    /// L2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &SpinorField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let h = self.grid.spacing();
        let mut acc = 0.0;
        for (a, b) in self.amps.iter().zip(&other.amps) {
            acc += (a - b).norm_sqr();
        }
        (acc * h * h).sqrt()
    }

    /// Errors if any amplitude is non-finite; returns the squared norm.
    pub fn check_finite(&self, t: f64) -> Result<f64> {
        let n2 = self.norm_sq();
        if !n2.is_finite() {
            return Err(CoreError::NonFinite { t, norm_sq: n2 });
        }
        Ok(n2)
    }
}

/// Probability current `J = (J1, J2)` and density `D` of a spinor field,
/// tabulated on the grid for trajectory integration.
///
/// `J_k = Im(sum_s conj(psi_s) d_k psi_s)` with spectral derivatives; the
/// guiding velocity is `(hbar/m) J_k / D` evaluated by bilinear interpolation
/// of `J_k` and `D` separately, which keeps the velocity exactly invariant
/// under rescaling of the field.
pub struct VelocityField {
    grid: GridSpec,
    hbar_over_m: f64,
    j1: Vec<f64>,
    j2: Vec<f64>,
    density: Vec<f64>,
    density_max: f64,
}

impl VelocityField {
    pub fn new(field: &SpinorField, constants: &PhysicalConstants) -> Self {
        Self::build(field, constants, &Fft2::new(field.grid().points()))
    }

    /// Probability current along the first axis at each node.
    pub fn current_x1(&self) -> &[f64] {
        &self.j1
    }

    /// Probability current along the second axis at each node.
    pub fn current_x2(&self) -> &[f64] {
        &self.j2
    }

    /// Spin-summed density at each node.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub(crate) fn build(field: &SpinorField, constants: &PhysicalConstants, fft: &Fft2) -> Self {
        let grid = *field.grid();
        let n = grid.points();
        let n2 = n * n;

        // per-component contributions, reduced in component order
        let comps: Vec<usize> = (0..4).collect();
        let partials = exec::map_collect(&comps, |&s| {
            let mut scratch = fft.scratch();
            let plane = &field.amplitudes()[s * n2..(s + 1) * n2];
            let mut freq: Vec<Complex64> = plane.to_vec();
            fft.forward(&mut freq, &mut scratch);

            let mut deriv = vec![Complex64::default(); n2];
            let mut j1 = vec![0.0; n2];
            let mut j2 = vec![0.0; n2];
            let mut density = vec![0.0; n2];

            for axis in 0..2 {
                for i1 in 0..n {
                    for i2 in 0..n {
                        let k = if axis == 0 {
                            grid.wavenumber(i1)
                        } else {
                            grid.wavenumber(i2)
                        };
                        let nyquist = (if axis == 0 { i1 } else { i2 }) == n / 2;
                        let factor = if nyquist {
                            Complex64::default()
                        } else {
                            Complex64::new(0.0, k)
                        };
                        deriv[i1 * n + i2] = freq[i1 * n + i2] * factor;
                    }
                }
                fft.inverse(&mut deriv, &mut scratch);
                let j = if axis == 0 { &mut j1 } else { &mut j2 };
                for (jv, (psi, dpsi)) in j.iter_mut().zip(plane.iter().zip(&deriv)) {
                    *jv = (psi.conj() * dpsi).im;
                }
            }
            for (dv, psi) in density.iter_mut().zip(plane) {
                *dv = psi.norm_sqr();
            }
            (j1, j2, density)
        });

        let mut j1 = vec![0.0; n2];
        let mut j2 = vec![0.0; n2];
        let mut density = vec![0.0; n2];
        for (pj1, pj2, pd) in partials {
            for i in 0..n2 {
                j1[i] += pj1[i];
                j2[i] += pj2[i];
                density[i] += pd[i];
            }
        }
        let density_max = density.iter().copied().fold(0.0, f64::max);
        Self {
            grid,
            hbar_over_m: constants.hbar / constants.mass,
            j1,
            j2,
            density,
            density_max,
        }
    }

    /// Guiding velocity at a configuration.
    ///
    /// Errors when the interpolated density sits below the node floor.
    pub fn velocity_at(&self, config: &ParticleConfig) -> Result<(f64, f64)> {
        let c = config.wrapped(&self.grid);
        let d = bilinear(&self.grid, &self.density, c.x1, c.x2);
        let floor = NODE_FLOOR_REL * self.density_max;
        if !(d > floor) {
            return Err(CoreError::DensityNode {
                x1: c.x1,
                x2: c.x2,
                density: d,
                floor,
            });
        }
        let j1 = bilinear(&self.grid, &self.j1, c.x1, c.x2);
        let j2 = bilinear(&self.grid, &self.j2, c.x1, c.x2);
        Ok((self.hbar_over_m * j1 / d, self.hbar_over_m * j2 / d))
    }
}

/// Bilinear interpolation on a periodic node grid.
fn bilinear(grid: &GridSpec, data: &[f64], x1: f64, x2: f64) -> f64 {
    let n = grid.points();
    let h = grid.spacing();
    let u = x1 / h;
    let v = x2 / h;
    let i = (u.floor() as usize).min(n - 1);
    let j = (v.floor() as usize).min(n - 1);
    let fu = u - i as f64;
    let fv = v - j as f64;
    let ip = (i + 1) % n;
    let jp = (j + 1) % n;
    let g = |a: usize, b: usize| data[a * n + b];
    g(i, j) * (1.0 - fu) * (1.0 - fv)
        + g(ip, j) * fu * (1.0 - fv)
        + g(i, jp) * (1.0 - fu) * fv
        + g(ip, jp) * fu * fv
}

/// Categorical sampler over grid cells weighted by the spin-summed density,
/// with uniform jitter inside the selected cell.
pub struct BornSampler {
    grid: GridSpec,
    cumulative: Vec<f64>,
    total: f64,
}

impl BornSampler {
    pub fn new(field: &SpinorField) -> Self {
        let density = field.spin_summed_density();
        let mut cumulative = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        for d in density {
            acc += d;
            cumulative.push(acc);
        }
        Self {
            grid: *field.grid(),
            total: acc,
            cumulative,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleConfig {
        let n = self.grid.points();
        let h = self.grid.spacing();
        let target = rng.random::<f64>() * self.total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(n * n - 1);
        let (i1, i2) = (idx / n, idx % n);
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        // jitter within the node-centered cell so the sampled measure is
        // unbiased against the node densities
        ParticleConfig {
            x1: (i1 as f64 + u1 - 0.5) * h,
            x2: (i2 as f64 + u2 - 0.5) * h,
        }
        .wrapped(&self.grid)
    }
}

/// Convenience wrapper: sample one configuration from `|psi|^2`.
pub fn born_sample<R: Rng + ?Sized>(field: &SpinorField, rng: &mut R) -> ParticleConfig {
    BornSampler::new(field).sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_grid() -> GridSpec {
        GridSpec::new(64, 16.0).unwrap()
    }

    #[test]
    fn norm_and_normalize() {
        let grid = test_grid();
        let mut f = SpinorField::zeros(grid);
        f.plane_mut(0, 1)[10] = Complex64::new(3.0, 4.0);
        let h = grid.spacing();
        assert!((f.norm() - 5.0 * h).abs() < 1e-12);
        f.normalize();
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_sampling_hits_a_concentrated_cell() {
        let grid = test_grid();
        let mut f = SpinorField::zeros(grid);
        let n = grid.points();
        let (i1, i2) = (12, 40);
        f.plane_mut(1, 0)[i1 * n + i2] = Complex64::new(1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sampler = BornSampler::new(&f);
        for _ in 0..32 {
            let c = sampler.sample(&mut rng);
            let h = grid.spacing();
            assert!((c.x1 - i1 as f64 * h).abs() <= 0.5 * h);
            assert!((c.x2 - i2 as f64 * h).abs() <= 0.5 * h);
        }
    }

    #[test]
    fn bilinear_is_exact_on_linear_data() {
        let grid = test_grid();
        let n = grid.points();
        let h = grid.spacing();
        // f(x1, x2) = 2 x1 + 3 x2, well away from the periodic seam
        let data: Vec<f64> = (0..n * n)
            .map(|idx| 2.0 * ((idx / n) as f64 * h) + 3.0 * ((idx % n) as f64 * h))
            .collect();
        let v = bilinear(&grid, &data, 3.3, 5.7);
        assert!((v - (2.0 * 3.3 + 3.0 * 5.7)).abs() < 1e-10);
    }
}
