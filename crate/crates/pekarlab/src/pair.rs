//! Correlated pair ansatz Psi(x,y) = phi(x) phi(y) g(x-y) / sqrt(S).
//!
//! Every expectation reduces to convolutions of a = |phi|^2 with kernels built
//! from g. With (p * q)(x) = h^3 sum_y p(y) q(x-y):
//!
//!   S            = h^3 sum_x a (a * g^2)
//!   <U_12>  * S  = h^3 sum_x a (a * g^2 k)           (k = Coulomb kernel)
//!   <L_1>   * S  = h^3 sum_x sum_o conj(phi) c_o phi(.+o) (a * kappa_o)
//!
//! with kappa_o(z) = g(z) g(z+o) and c_o the offset coefficients of the
//! kinetic decomposition (the o = 0 term uses the diagonal coefficient and
//! kappa_0 = g^2). The same decomposition drives the Hartree/Slater kinetic
//! term, so setting g = 1 collapses every kappa to 1 and the family reduces
//! exactly (to rounding) to the two-orbital product.
//!
//! The phi-gradient of <H_sigma> needs one extra convolution family:
//! correlating F_o = conj(phi) c_o phi(.+o) against kappa_o is a convolution
//! against the reflected kernel kappa_o(-z) = kappa_{-o}(z), and the twelve
//! offsets already come in +/- pairs, so the cached transforms cover both.

use std::rc::Rc;

use num_complex::Complex64;

use crate::coulomb::{coulomb_cell_average, CoulombSolver};
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::{Grid3D, MagneticGauge};
use crate::kinetic::{KineticOperator, OffsetTerm};
use crate::ansatz::PairFactor;
use crate::Result;

#[derive(Clone, Copy, Debug)]
pub struct PairParts {
    pub kinetic: f64,
    pub repulsion: f64,
    /// The quadratic form norm S = <Psi, Psi> before normalization.
    pub s_norm: f64,
}

pub struct PairMachine {
    pub grid: Grid3D,
    pub factor: PairFactor,
    solver: Rc<CoulombSolver>,
    op: KineticOperator,
    /// Index of the term with the opposite step, per term.
    opposite: Vec<usize>,
    g2_hat: Vec<Complex64>,
    g2k_hat: Vec<Complex64>,
    kappa_hat: Vec<Vec<Complex64>>,
}

impl PairMachine {
    pub fn new(grid: Grid3D, gauge: MagneticGauge, factor: PairFactor) -> Result<Self> {
        factor.validate()?;
        let solver = CoulombSolver::shared(grid);
        let op = KineticOperator::new(grid, gauge);
        let h = grid.spacing;
        let g = |z: [f64; 3]| factor.eval(z);
        let g2_hat = solver.conv.kernel_hat(|z| g(z) * g(z));
        let center = coulomb_cell_average(h);
        let g2k_hat = solver.conv.kernel_hat(|z| {
            let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
            let k = if r == 0.0 { center } else { 1.0 / r };
            g(z) * g(z) * k
        });
        let terms = op.terms().to_vec();
        let mut kappa_hat = Vec::with_capacity(terms.len());
        for t in &terms {
            let off = [
                t.cells[0] as f64 * h,
                t.cells[1] as f64 * h,
                t.cells[2] as f64 * h,
            ];
            kappa_hat.push(
                solver
                    .conv
                    .kernel_hat(|z| g(z) * g([z[0] + off[0], z[1] + off[1], z[2] + off[2]])),
            );
        }
        let opposite: Vec<usize> = terms
            .iter()
            .map(|t| {
                terms
                    .iter()
                    .position(|u| u.axis == t.axis && u.step == -t.step)
                    .unwrap()
            })
            .collect();
        Ok(PairMachine {
            grid,
            factor,
            solver,
            op,
            opposite,
            g2_hat,
            g2k_hat,
            kappa_hat,
        })
    }

    pub fn terms(&self) -> &[OffsetTerm] {
        self.op.terms()
    }

    fn real_conv(&self, ahat: &[Complex64], khat: &[Complex64]) -> ScalarField3D {
        let mut prod: Vec<Complex64> = ahat.iter().zip(khat).map(|(a, k)| a * k).collect();
        self.solver.conv.fft.inverse(&mut prod);
        // extract corner, h^3-scaled
        let n = self.grid.n;
        let m = self.solver.conv.m;
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

    /// S and u_0 = a * g^2 for a given orbital.
    fn s_and_u0(&self, a: &ScalarField3D, ahat: &[Complex64]) -> (f64, ScalarField3D) {
        let u0 = self.real_conv(ahat, &self.g2_hat);
        let s = a.dot(&u0);
        (s, u0)
    }

    /// Kinetic numerator: <Psi, (L1 + L2) Psi> * S (real part taken at the end).
    fn kinetic_numerator(
        &self,
        phi: &ComplexField3D,
        a: &ScalarField3D,
        ahat: &[Complex64],
        u0: &ScalarField3D,
    ) -> (f64, Vec<ScalarField3D>) {
        let g = self.grid;
        let n = g.n as i64;
        let us: Vec<ScalarField3D> = self
            .kappa_hat
            .iter()
            .map(|kh| self.real_conv(ahat, kh))
            .collect();
        let mut acc = Complex64::default();
        for (i, &av) in a.values.iter().enumerate() {
            acc += av * self.op.center_coeff(i) * u0.values[i];
        }
        for (ti, t) in self.op.terms().iter().enumerate() {
            let u = &us[ti];
            for iz in 0..g.n {
                let jz = iz as i64 + t.cells[2];
                if jz < 0 || jz >= n {
                    continue;
                }
                for iy in 0..g.n {
                    let jy = iy as i64 + t.cells[1];
                    if jy < 0 || jy >= n {
                        continue;
                    }
                    for ix in 0..g.n {
                        let jx = ix as i64 + t.cells[0];
                        if jx < 0 || jx >= n {
                            continue;
                        }
                        let i = g.idx(ix, iy, iz);
                        let j = g.idx(jx as usize, jy as usize, jz as usize);
                        acc += phi.values[i].conj()
                            * self.op.coeff(i, j, t)
                            * phi.values[j]
                            * u.values[i];
                    }
                }
            }
        }
        (2.0 * g.cell_volume() * acc.re, us)
    }

    /// True functional pieces (kinetic, repulsion, S).
    pub fn parts(&self, phi: &ComplexField3D) -> PairParts {
        let a = phi.abs_sq();
        let ahat = self.solver.conv.padded_hat_real(&a);
        let (s, u0) = self.s_and_u0(&a, &ahat);
        let (t_num, _) = self.kinetic_numerator(phi, &a, &ahat, &u0);
        let ug2k = self.real_conv(&ahat, &self.g2k_hat);
        let r_num = a.dot(&ug2k);
        PairParts {
            kinetic: t_num / s,
            repulsion: r_num / s,
            s_norm: s,
        }
    }

    /// One-particle density 2 a (a * g^2) / S.
    pub fn density(&self, phi: &ComplexField3D) -> ScalarField3D {
        let a = phi.abs_sq();
        let ahat = self.solver.conv.padded_hat_real(&a);
        let (s, u0) = self.s_and_u0(&a, &ahat);
        let mut rho = ScalarField3D::zeros(self.grid);
        for i in 0..self.grid.len() {
            rho.values[i] = 2.0 * a.values[i] * u0.values[i] / s;
        }
        rho
    }

    /// <Psi, H_sigma Psi> / S for the linearized operator described by
    /// (v_sigma, alpha, offset).
    pub fn h_expectation(
        &self,
        phi: &ComplexField3D,
        v_sigma: &ScalarField3D,
        alpha: f64,
        offset: f64,
    ) -> f64 {
        let a = phi.abs_sq();
        let ahat = self.solver.conv.padded_hat_real(&a);
        let (s, u0) = self.s_and_u0(&a, &ahat);
        let (t_num, _) = self.kinetic_numerator(phi, &a, &ahat, &u0);
        let ug2k = self.real_conv(&ahat, &self.g2k_hat);
        let h3 = self.grid.cell_volume();
        let r_num = a.dot(&ug2k);
        let mut v_num = 0.0;
        for i in 0..self.grid.len() {
            v_num += v_sigma.values[i] * a.values[i] * u0.values[i];
        }
        v_num *= -2.0 * alpha * h3;
        (t_num + r_num + v_num) / s + alpha * offset
    }

    /// Expectation and functional gradient delta<H>/delta phi* (x).
    pub fn h_gradient(
        &self,
        phi: &ComplexField3D,
        v_sigma: &ScalarField3D,
        alpha: f64,
        offset: f64,
    ) -> (f64, ComplexField3D) {
        let g = self.grid;
        let n = g.n as i64;
        let h3 = g.cell_volume();
        let a = phi.abs_sq();
        let ahat = self.solver.conv.padded_hat_real(&a);
        let (s, u0) = self.s_and_u0(&a, &ahat);
        let (t_num, us) = self.kinetic_numerator(phi, &a, &ahat, &u0);
        let ug2k = self.real_conv(&ahat, &self.g2k_hat);
        let r_num = a.dot(&ug2k);
        let mut v_num = 0.0;
        for i in 0..g.len() {
            v_num += v_sigma.values[i] * a.values[i] * u0.values[i];
        }
        v_num *= -2.0 * alpha * h3;
        let exp_h = (t_num + r_num + v_num) / s + alpha * offset;
        let exp_no_off = (t_num + r_num + v_num) / s;

        // Fourier-side accumulation of the "slot 2" kinetic piece:
        // w_T = sum_t (F_t * kappa_{-t}) + (a c0 * g^2)
        let m = self.solver.conv.m;
        let mut acc_hat = vec![Complex64::default(); m * m * m];
        {
            // center term: F_0 = a * c0 (real), kernel g^2
            let mut f0 = ScalarField3D::zeros(g);
            for i in 0..g.len() {
                f0.values[i] = a.values[i] * self.op.center_coeff(i);
            }
            let f0hat = self.solver.conv.padded_hat_real(&f0);
            for (acc, (fh, kh)) in acc_hat.iter_mut().zip(f0hat.iter().zip(&self.g2_hat)) {
                *acc += fh * kh;
            }
        }
        for (ti, t) in self.op.terms().iter().enumerate() {
            let mut f = ComplexField3D::zeros(g);
            for iz in 0..g.n {
                let jz = iz as i64 + t.cells[2];
                if jz < 0 || jz >= n {
                    continue;
                }
                for iy in 0..g.n {
                    let jy = iy as i64 + t.cells[1];
                    if jy < 0 || jy >= n {
                        continue;
                    }
                    for ix in 0..g.n {
                        let jx = ix as i64 + t.cells[0];
                        if jx < 0 || jx >= n {
                            continue;
                        }
                        let i = g.idx(ix, iy, iz);
                        let j = g.idx(jx as usize, jy as usize, jz as usize);
                        f.values[i] =
                            phi.values[i].conj() * self.op.coeff(i, j, t) * phi.values[j];
                    }
                }
            }
            let fhat = self.solver.conv.padded_hat(&f);
            let kref = &self.kappa_hat[self.opposite[ti]];
            for (acc, (fh, kh)) in acc_hat.iter_mut().zip(fhat.iter().zip(kref)) {
                *acc += fh * kh;
            }
        }
        let w_t = self.solver.conv.finish_complex(acc_hat);

        // ((v_sigma a) * g^2) for the second attraction slot
        let mut va = ScalarField3D::zeros(g);
        for i in 0..g.len() {
            va.values[i] = v_sigma.values[i] * a.values[i];
        }
        let vahat = self.solver.conv.padded_hat_real(&va);
        let va_g2 = self.real_conv(&vahat, &self.g2_hat);

        let mut grad = ComplexField3D::zeros(g);
        // slot-1 kinetic terms: c0 phi u0 + sum_t c_t phi(.+o) u_t
        for iz in 0..g.n {
            for iy in 0..g.n {
                for ix in 0..g.n {
                    let i = g.idx(ix, iy, iz);
                    let mut acc = phi.values[i] * (self.op.center_coeff(i) * u0.values[i]);
                    for (ti, t) in self.op.terms().iter().enumerate() {
                        let jx = ix as i64 + t.cells[0];
                        let jy = iy as i64 + t.cells[1];
                        let jz = iz as i64 + t.cells[2];
                        if jx < 0 || jx >= n || jy < 0 || jy >= n || jz < 0 || jz >= n {
                            continue;
                        }
                        let j = g.idx(jx as usize, jy as usize, jz as usize);
                        acc += self.op.coeff(i, j, t) * phi.values[j] * us[ti].values[i];
                    }
                    // assemble full gradient at i
                    let phi_i = phi.values[i];
                    let mut total = 2.0 * (acc + phi_i * w_t.values[i]);
                    total += 2.0 * phi_i * ug2k.values[i];
                    total += -2.0
                        * alpha
                        * phi_i
                        * (v_sigma.values[i] * u0.values[i] + va_g2.values[i]);
                    total -= exp_no_off * 2.0 * phi_i * u0.values[i];
                    grad.values[i] = total / s;
                }
            }
        }
        (exp_h, grad)
    }
}

/// One-particle density of the normalized pair state.
pub fn pair_density(orbital: &ComplexField3D, factor: &PairFactor) -> ScalarField3D {
    let machine = PairMachine::new(orbital.grid, MagneticGauge::zero(), factor.clone())
        .expect("validated factor");
    machine.density(orbital)
}

/// True (kinetic, repulsion) parts of the pair state under the given gauge.
pub fn pair_energy_parts(
    orbital: &ComplexField3D,
    factor: &PairFactor,
    gauge: &MagneticGauge,
) -> Result<PairParts> {
    let machine = PairMachine::new(orbital.grid, *gauge, factor.clone())?;
    Ok(machine.parts(orbital))
}
