//! Thin 2-D FFT layer over rustfft for square complex planes.
//!
//! Planes are row-major `n x n`; the row pass transforms the second index,
//! the column pass goes through a transpose. Plans are shareable; scratch is
//! per thread.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

pub struct Fft2Scratch {
    transpose: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Self {
            n,
            forward,
            inverse,
        }
    }

    pub fn scratch(&self) -> Fft2Scratch {
        let work_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        Fft2Scratch {
            transpose: vec![Complex64::default(); self.n * self.n],
            work: vec![Complex64::default(); work_len],
        }
    }

    /// Unnormalized forward transform of one plane.
    pub fn forward(&self, plane: &mut [Complex64], scratch: &mut Fft2Scratch) {
        self.pass(&*self.forward, plane, scratch);
    }

    /// Inverse transform of one plane, scaled by `1/n^2` so that
    /// `inverse(forward(x)) == x` up to roundoff.
    pub fn inverse(&self, plane: &mut [Complex64], scratch: &mut Fft2Scratch) {
        self.pass(&*self.inverse, plane, scratch);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in plane.iter_mut() {
            *v *= scale;
        }
    }

    fn pass(&self, fft: &dyn Fft<f64>, plane: &mut [Complex64], scratch: &mut Fft2Scratch) {
        let n = self.n;
        debug_assert_eq!(plane.len(), n * n);
        fft.process_with_scratch(plane, &mut scratch.work);
        transpose(plane, &mut scratch.transpose, n);
        fft.process_with_scratch(&mut scratch.transpose, &mut scratch.work);
        transpose(&scratch.transpose, plane, n);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}
