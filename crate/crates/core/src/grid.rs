//! Discretization of the two-particle configuration space: one periodic
//! 1-D axis per wing, identical for both.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Periodic position grid, one axis per particle.
///
/// Grid node `i` represents the cell `[i*h, (i+1)*h)` with `h = spacing()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    points: usize,
    length: f64,
}

impl GridSpec {
    /// `points` must be a power of two >= 32; `length` the domain size.
    pub fn new(points: usize, length: f64) -> Result<Self> {
        if points < 32 || !points.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "points_per_axis must be a power of two >= 32, got {points}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidGrid(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        Ok(Self { points, length })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * self.length
    }

    /// Position of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Wrap a coordinate into `[0, length)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.length);
        // rem_euclid can return `length` itself when x is a tiny negative number
        if w >= self.length {
            0.0
        } else {
            w
        }
    }

    /// Shortest signed displacement from `a` to `b` on the circle.
    pub fn signed_arc(&self, a: f64, b: f64) -> f64 {
        let mut d = (b - a).rem_euclid(self.length);
        if d > 0.5 * self.length {
            d -= self.length;
        }
        d
    }

    /// Angular wavenumber of Fourier mode `i` (standard FFT ordering).
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.points as isize;
        let m = i as isize;
        let freq = if m <= n / 2 { m } else { m - n };
        2.0 * std::f64::consts::PI * freq as f64 / self.length
    }
}

/// Physical constants of the (single-species) two-particle system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0) || !(mass > 0.0) {
            return Err(CoreError::InvalidGrid(format!(
                "hbar and mass must be positive, got hbar = {hbar}, mass = {mass}"
            )));
        }
        Ok(Self { hbar, mass })
    }

    /// Natural units: hbar = m = 1.
    pub fn natural() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}
