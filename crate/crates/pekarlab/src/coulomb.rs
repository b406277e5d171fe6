//! Free-space Coulomb convolutions on the grid.
//!
//! The kernel 1/|x| is sampled at cell-center displacements on a zero-padded
//! (doubled) grid, so the circular convolution reproduces the open-boundary sum
//! exactly for all displacements that fit in the original box. The singular
//! cell uses the analytic average of 1/|x| over the cell, and the Hardy
//! diagnostic kernel 1/|x|^2 uses the analytic cell average as well; both
//! averages reduce to 2D integrals over a cube face and are evaluated once by
//! Gauss-Legendre quadrature.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::fft::{gauss_legendre, Fft3D};
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::Grid3D;
use crate::{Error, Result};

/// J = int_0^1 int_0^1 du dv / sqrt(1 + u^2 + v^2).
/// The cell average of 1/|x| over a cube of side h centered at 0 is 3J/h:
/// each octant integral, written in polar form about the corner and
/// parametrized by the exit face, is (3/2)(h/2)^2 J.
fn face_integral_inv_r() -> f64 {
    static VAL: OnceLock<f64> = OnceLock::new();
    *VAL.get_or_init(|| face_quad(|s| 1.0 / s.sqrt()))
}

/// I2 = int_0^1 int_0^1 du dv / (1 + u^2 + v^2); cell average of 1/|x|^2 is
/// 12 I2 / h^2 by the same face parametrization.
fn face_integral_inv_r2() -> f64 {
    static VAL: OnceLock<f64> = OnceLock::new();
    *VAL.get_or_init(|| face_quad(|s| 1.0 / s))
}

/// Integrate f(1 + u^2 + v^2) over the unit square by tensor Gauss-Legendre.
fn face_quad(f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(48);
    let mut acc = 0.0;
    for (u, wu) in x.iter().zip(&w) {
        let uu = 0.5 * (u + 1.0);
        for (v, wv) in x.iter().zip(&w) {
            let vv = 0.5 * (v + 1.0);
            acc += 0.25 * wu * wv * f(1.0 + uu * uu + vv * vv);
        }
    }
    acc
}

/// Average of 1/|x| over a cube cell of side `h` centered at the origin.
pub fn coulomb_cell_average(h: f64) -> f64 {
    3.0 * face_integral_inv_r() / h
}

/// Average of 1/|x|^2 over a cube cell of side `h` centered at the origin.
pub fn hardy_cell_average(h: f64) -> f64 {
    12.0 * face_integral_inv_r2() / (h * h)
}

/// Map padded index to signed displacement in cells.
#[inline]
fn wrap(t: usize, m: usize) -> i64 {
    if t <= m / 2 {
        t as i64
    } else {
        t as i64 - m as i64
    }
}

/// FFT machinery on the zero-padded (2n)^3 grid, shared by the Coulomb solver
/// and by ansatz-specific correlation kernels.
pub struct Convolver {
    pub grid: Grid3D,
    pub m: usize,
    pub fft: Fft3D,
}

impl Convolver {
    pub fn new(grid: Grid3D) -> Self {
        let m = 2 * grid.n;
        Convolver {
            grid,
            m,
            fft: Fft3D::new(m),
        }
    }

    /// FFT of a kernel sampled at displacement vectors (in physical units).
    /// `f` receives the displacement `d = delta * h` with delta wrapped into
    /// [-n, n]^3 and must be even under d -> -d up to the Nyquist ambiguity.
    pub fn kernel_hat(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<Complex64> {
        let m = self.m;
        let h = self.grid.spacing;
        let mut k = vec![Complex64::default(); m * m * m];
        for tz in 0..m {
            let dz = wrap(tz, m) as f64 * h;
            for ty in 0..m {
                let dy = wrap(ty, m) as f64 * h;
                for tx in 0..m {
                    let dx = wrap(tx, m) as f64 * h;
                    k[tx + m * (ty + m * tz)] = Complex64::new(f([dx, dy, dz]), 0.0);
                }
            }
        }
        self.fft.forward(&mut k);
        k
    }

    /// Zero-pad an n^3 real field into the (2n)^3 buffer and FFT it.
    pub fn padded_hat_real(&self, a: &ScalarField3D) -> Vec<Complex64> {
        let n = self.grid.n;
        let m = self.m;
        let mut buf = vec![Complex64::default(); m * m * m];
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    buf[ix + m * (iy + m * iz)] =
                        Complex64::new(a.values[self.grid.idx(ix, iy, iz)], 0.0);
                }
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    /// Zero-pad a complex field and FFT it.
    pub fn padded_hat(&self, a: &ComplexField3D) -> Vec<Complex64> {
        let n = self.grid.n;
        let m = self.m;
        let mut buf = vec![Complex64::default(); m * m * m];
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    buf[ix + m * (iy + m * iz)] = a.values[self.grid.idx(ix, iy, iz)];
                }
            }
        }
        self.fft.forward(&mut buf);
        buf
    }

    /// Inverse FFT of `prod` and extraction of the n^3 corner, scaled by h^3
    /// so the result is the linear convolution (k * a)(x) = h^3 sum k(x-y)a(y).
    pub fn finish_real(&self, mut prod: Vec<Complex64>) -> ScalarField3D {
        self.fft.inverse(&mut prod);
        let n = self.grid.n;
        let m = self.m;
        let h3 = self.grid.cell_volume();
        let mut out = ScalarField3D::zeros(self.grid);
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    out.values[self.grid.idx(ix, iy, iz)] = h3 * prod[ix + m * (iy + m * iz)].re;
                }
            }
        }
        out
    }

    pub fn finish_complex(&self, mut prod: Vec<Complex64>) -> ComplexField3D {
        self.fft.inverse(&mut prod);
        let n = self.grid.n;
        let m = self.m;
        let h3 = self.grid.cell_volume();
        let mut out = ComplexField3D::zeros(self.grid);
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    out.values[self.grid.idx(ix, iy, iz)] = h3 * prod[ix + m * (iy + m * iz)];
                }
            }
        }
        out
    }

    /// Convolve a real field with a cached kernel transform.
    pub fn convolve_real(&self, khat: &[Complex64], a: &ScalarField3D) -> ScalarField3D {
        let mut ahat = self.padded_hat_real(a);
        for (v, k) in ahat.iter_mut().zip(khat) {
            *v *= k;
        }
        self.finish_real(ahat)
    }

    /// Convolve a complex field with a cached kernel transform.
    pub fn convolve_complex(&self, khat: &[Complex64], a: &ComplexField3D) -> ComplexField3D {
        let mut ahat = self.padded_hat(a);
        for (v, k) in ahat.iter_mut().zip(khat) {
            *v *= k;
        }
        self.finish_complex(ahat)
    }
}

/// Coulomb convolutions for one grid, with cached kernel transforms.
pub struct CoulombSolver {
    pub conv: Convolver,
    khat: Vec<Complex64>,
    khat_hardy: RefCell<Option<Vec<Complex64>>>,
}

impl CoulombSolver {
    pub fn new(grid: Grid3D) -> Self {
        let conv = Convolver::new(grid);
        let h = grid.spacing;
        let center = coulomb_cell_average(h);
        let khat = conv.kernel_hat(|d| {
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r == 0.0 {
                center
            } else {
                1.0 / r
            }
        });
        CoulombSolver {
            conv,
            khat,
            khat_hardy: RefCell::new(None),
        }
    }

    /// Shared per-thread instance; kernel transforms are expensive to build.
    pub fn shared(grid: Grid3D) -> Rc<CoulombSolver> {
        thread_local! {
            static CACHE: RefCell<HashMap<(usize, u64), Rc<CoulombSolver>>> =
                RefCell::new(HashMap::new());
        }
        CACHE.with(|c| {
            let key = (grid.n, grid.spacing.to_bits());
            c.borrow_mut()
                .entry(key)
                .or_insert_with(|| Rc::new(CoulombSolver::new(grid)))
                .clone()
        })
    }

    /// V_rho(x) = h^3 sum_y rho(y) k(x-y) with the open-boundary kernel.
    pub fn potential(&self, rho: &ScalarField3D) -> ScalarField3D {
        self.conv.convolve_real(&self.khat, rho)
    }

    /// Convolution of a complex field with the Coulomb kernel (for exchange).
    pub fn potential_complex(&self, p: &ComplexField3D) -> ComplexField3D {
        self.conv.convolve_complex(&self.khat, p)
    }

    /// D(a,b) = (1/2) iint a(x) b(y)/|x-y|, evaluated in Fourier space with a
    /// form that is bitwise symmetric under a <-> b.
    pub fn pair_energy(&self, a: &ScalarField3D, b: &ScalarField3D) -> f64 {
        let ahat = self.conv.padded_hat_real(a);
        let bhat = self.conv.padded_hat_real(b);
        let mut s = 0.0;
        for ((ka, va), vb) in self.khat.iter().zip(&ahat).zip(&bhat) {
            s += ka.re * (va.re * vb.re + va.im * vb.im);
        }
        let m3 = (self.conv.m * self.conv.m * self.conv.m) as f64;
        let h3 = self.conv.grid.cell_volume();
        0.5 * h3 * h3 * s / m3
    }

    /// sup_x h^3 sum_y rho(y)/|x-y|^2, the Hardy-type diagnostic on a density.
    pub fn hardy_diagnostic(&self, rho: &ScalarField3D) -> f64 {
        if self.khat_hardy.borrow().is_none() {
            let h = self.conv.grid.spacing;
            let center = hardy_cell_average(h);
            let khat = self.conv.kernel_hat(|d| {
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if r2 == 0.0 {
                    center
                } else {
                    1.0 / r2
                }
            });
            *self.khat_hardy.borrow_mut() = Some(khat);
        }
        let borrowed = self.khat_hardy.borrow();
        let khat = borrowed.as_ref().unwrap();
        let field = self.conv.convolve_real(khat, rho);
        field.values.iter().fold(0.0_f64, |m, &v| m.max(v))
    }
}

/// V_rho evaluated by direct summation at an arbitrary point (which need not
/// lie on the grid); same kernel samples as the convolution path.
pub fn coulomb_potential_at(rho: &ScalarField3D, point: [f64; 3]) -> f64 {
    let g = rho.grid;
    let n = g.n;
    let h3 = g.cell_volume();
    let center = coulomb_cell_average(g.spacing);
    let mut acc = 0.0;
    for iz in 0..n {
        let z = g.coord(iz);
        for iy in 0..n {
            let y = g.coord(iy);
            for ix in 0..n {
                let x = g.coord(ix);
                let d = [point[0] - x, point[1] - y, point[2] - z];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let k = if r < 0.5 * g.spacing { center } else { 1.0 / r };
                acc += rho.values[g.idx(ix, iy, iz)] * k;
            }
        }
    }
    h3 * acc
}

/// Convenience wrappers over a shared solver.
pub fn coulomb_potential(rho: &ScalarField3D) -> ScalarField3D {
    CoulombSolver::shared(rho.grid).potential(rho)
}

pub fn pair_energy(a: &ScalarField3D, b: &ScalarField3D) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Config(
            "pair_energy requires both densities on the same grid".into(),
        ));
    }
    Ok(CoulombSolver::shared(a.grid).pair_energy(a, b))
}

pub fn hardy_diagnostic(rho: &ScalarField3D) -> f64 {
    CoulombSolver::shared(rho.grid).hardy_diagnostic(rho)
}
