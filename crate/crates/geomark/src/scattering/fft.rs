//! Cached 2D FFT plans for square complex grids.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward/inverse 2D FFT of an `n x n` grid, row-column decomposition.
/// Plans are built once and shared; transforms allocate their own scratch so
/// the planner can be used from multiple threads.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut Array2<Complex64>, plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        debug_assert_eq!(data.dim(), (n, n));
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        {
            let slice = data.as_slice_mut().expect("contiguous grid");
            for row in slice.chunks_exact_mut(n) {
                plan.process_with_scratch(row, &mut scratch);
            }
            // Transpose, transform the other axis, transpose back.
            let mut tr = vec![Complex64::default(); n * n];
            for r in 0..n {
                for c in 0..n {
                    tr[c * n + r] = slice[r * n + c];
                }
            }
            for row in tr.chunks_exact_mut(n) {
                plan.process_with_scratch(row, &mut scratch);
            }
            for r in 0..n {
                for c in 0..n {
                    slice[r * n + c] = tr[c * n + r];
                }
            }
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.forward.clone());
    }

    /// Inverse transform scaled by `1/n^2`, so `inverse(forward(x)) == x`.
    pub fn inverse_normalized(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.inverse.clone());
        let scale = 1.0 / (self.n * self.n) as f64;
        data.mapv_inplace(|z| z * scale);
    }
}
