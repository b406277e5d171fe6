//! Minimal 3D FFT on flat cubic buffers, plus Gauss-Legendre nodes used by the
//! kernel cell averages and mollified ramps.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans for an `m^3` cube, applied axis by axis.
pub struct Fft3D {
    pub m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3D {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        Fft3D { m, fwd, inv }
    }

    fn pass(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        debug_assert_eq!(data.len(), m * m * m);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // x lines are contiguous.
        for line in data.chunks_exact_mut(m) {
            plan.process_with_scratch(line, &mut scratch);
        }
        // y and z lines via gather/scatter.
        let mut buf = vec![Complex64::default(); m];
        for iz in 0..m {
            for ix in 0..m {
                let base = ix + m * m * iz;
                for iy in 0..m {
                    buf[iy] = data[base + m * iy];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iy in 0..m {
                    data[base + m * iy] = buf[iy];
                }
            }
        }
        for iy in 0..m {
            for ix in 0..m {
                let base = ix + m * iy;
                for iz in 0..m {
                    buf[iz] = data[base + m * m * iz];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iz in 0..m {
                    data[base + m * m * iz] = buf[iz];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.pass(data, &self.fwd);
    }

    /// Inverse transform including the `1/m^3` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.pass(data, &self.inv);
        let s = 1.0 / (self.m * self.m * self.m) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Accurate to machine precision for n <= a few hundred.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
