//! Multi-dimensional FFTs over row-major complex buffers.
//!
//! Transforms are unnormalised in both directions, matching `rustfft`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Planner {
    inner: FftPlanner<f64>,
}

impl Default for Planner {
    fn default() -> Self {
        Self { inner: FftPlanner::new() }
    }
}

impl Planner {
    pub fn plan(&mut self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        if inverse {
            self.inner.plan_fft_inverse(len)
        } else {
            self.inner.plan_fft_forward(len)
        }
    }

    /// Transforms every line of `data` along `axis`.
    pub fn transform_axis(&mut self, data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
        let n = shape[axis];
        let fft = self.plan(n, inverse);
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        if inner == 1 {
            fft.process(data);
            return;
        }
        let mut line = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..inner {
                for k in 0..n {
                    line[k] = data[base + k * inner + i];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for k in 0..n {
                    data[base + k * inner + i] = line[k];
                }
            }
        }
    }

    pub fn transform(&mut self, data: &mut [Complex64], shape: &[usize], inverse: bool) {
        for axis in 0..shape.len() {
            self.transform_axis(data, shape, axis, inverse);
        }
    }
}

/// Signed frequency index of bin `k` in a length-`n` transform.
pub fn signed_bin(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}
