//! Full two-body field Psi(x1, x2) on coarse grids.
//!
//! The state is stored as an n^6 array (x1 fastest). Energies are evaluated by
//! direct summation: the kinetic stencil is applied slot by slot, and the
//! interparticle repulsion is a displacement-table lookup with the same kernel
//! samples (including the singular-cell average) as the convolution path. On
//! a common grid this family evaluates the identical discrete functional as
//! the factorized ansatz families, just without any factorization, so it
//! serves as their oracle and as the unconstrained N = 2 variational floor.

use num_complex::Complex64;

use crate::coulomb::coulomb_cell_average;
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::{Grid3D, MagneticGauge};
use crate::kinetic::KineticOperator;
use crate::ansatz::PairFactor;
use crate::{Error, Result};

pub const MAX_TWO_BODY_N: usize = 14;

#[derive(Clone)]
pub struct TwoBodyState {
    pub grid: Grid3D,
    /// Length n^6; index i1 + n^3 * i2.
    pub values: Vec<Complex64>,
}

impl TwoBodyState {
    pub fn new(grid: Grid3D, values: Vec<Complex64>) -> Result<Self> {
        if grid.n > MAX_TWO_BODY_N {
            return Err(Error::Config(format!(
                "two-body fields are limited to n <= {MAX_TWO_BODY_N} per axis (n^6 storage), got {}",
                grid.n
            )));
        }
        let n3 = grid.len();
        if values.len() != n3 * n3 {
            return Err(Error::Config(format!(
                "two-body field needs {} values, got {}",
                n3 * n3,
                values.len()
            )));
        }
        Ok(TwoBodyState { grid, values })
    }

    /// Psi(x,y) = phi(x) phi(y) g(x-y), normalized.
    pub fn from_pair(orbital: &ComplexField3D, factor: &PairFactor) -> Result<Self> {
        factor.validate()?;
        let g = orbital.grid;
        let n = g.n;
        let n3 = g.len();
        let mut values = vec![Complex64::default(); n3 * n3];
        for i2z in 0..n {
            for i2y in 0..n {
                for i2x in 0..n {
                    let i2 = g.idx(i2x, i2y, i2z);
                    let p2 = g.pos(i2x, i2y, i2z);
                    let f2 = orbital.values[i2];
                    for i1z in 0..n {
                        for i1y in 0..n {
                            for i1x in 0..n {
                                let i1 = g.idx(i1x, i1y, i1z);
                                let p1 = g.pos(i1x, i1y, i1z);
                                let gfac = factor.eval([
                                    p1[0] - p2[0],
                                    p1[1] - p2[1],
                                    p1[2] - p2[2],
                                ]);
                                values[i1 + n3 * i2] = orbital.values[i1] * f2 * gfac;
                            }
                        }
                    }
                }
            }
        }
        let mut st = TwoBodyState::new(g, values)?;
        st.normalize()?;
        Ok(st)
    }

    /// Symmetrized product (a(x) b(y) + b(x) a(y)), normalized.
    pub fn from_orbitals(a: &ComplexField3D, b: &ComplexField3D) -> Result<Self> {
        if a.grid != b.grid {
            return Err(Error::Config("orbitals live on different grids".into()));
        }
        let g = a.grid;
        let n3 = g.len();
        let mut values = vec![Complex64::default(); n3 * n3];
        for i2 in 0..n3 {
            for i1 in 0..n3 {
                values[i1 + n3 * i2] =
                    a.values[i1] * b.values[i2] + b.values[i1] * a.values[i2];
            }
        }
        let mut st = TwoBodyState::new(g, values)?;
        st.normalize()?;
        Ok(st)
    }

    pub fn norm_sq(&self) -> f64 {
        let h3 = self.grid.cell_volume();
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * h3 * h3
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sq().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Usage(format!(
                "cannot normalize two-body field with norm {n}"
            )));
        }
        let s = 1.0 / n;
        for v in &mut self.values {
            *v *= s;
        }
        Ok(())
    }

    /// One-particle density: rho(x) = h^3 sum_y (|Psi(x,y)|^2 + |Psi(y,x)|^2).
    pub fn density(&self) -> ScalarField3D {
        let g = self.grid;
        let n3 = g.len();
        let h3 = g.cell_volume();
        let mut rho = ScalarField3D::zeros(g);
        for i2 in 0..n3 {
            let base = n3 * i2;
            for i1 in 0..n3 {
                let m = self.values[i1 + base].norm_sqr();
                rho.values[i1] += m;
                rho.values[i2] += m;
            }
        }
        // one slot integrated out (h^3), and the overall h^3-per-slot weight
        // of the 6D normalization leaves a density in 1/volume units
        for v in &mut rho.values {
            *v *= h3;
        }
        rho
    }

    /// (kinetic, repulsion) under the gauge, by direct summation.
    pub fn energy_parts(&self, gauge: &MagneticGauge) -> (f64, f64) {
        let machine = TwoBodyMachine::new(self.grid, *gauge);
        machine.energy_parts(self)
    }
}

pub struct TwoBodyMachine {
    pub grid: Grid3D,
    pub op: KineticOperator,
    /// Coulomb kernel lookup over displacement triples, side 2n-1.
    k_table: Vec<f64>,
}

impl TwoBodyMachine {
    pub fn new(grid: Grid3D, gauge: MagneticGauge) -> Self {
        let op = KineticOperator::new(grid, gauge);
        let n = grid.n;
        let side = 2 * n - 1;
        let h = grid.spacing;
        let center = coulomb_cell_average(h);
        let mut k_table = vec![0.0; side * side * side];
        for dz in 0..side {
            let fz = (dz as i64 - (n as i64 - 1)) as f64 * h;
            for dy in 0..side {
                let fy = (dy as i64 - (n as i64 - 1)) as f64 * h;
                for dx in 0..side {
                    let fx = (dx as i64 - (n as i64 - 1)) as f64 * h;
                    let r = (fx * fx + fy * fy + fz * fz).sqrt();
                    k_table[dx + side * (dy + side * dz)] =
                        if r == 0.0 { center } else { 1.0 / r };
                }
            }
        }
        TwoBodyMachine { grid, op, k_table }
    }

    #[inline]
    fn k_at(&self, d1: (usize, usize, usize), d2: (usize, usize, usize)) -> f64 {
        let n = self.grid.n;
        let side = 2 * n - 1;
        let ix = d1.0 + (n - 1) - d2.0;
        let iy = d1.1 + (n - 1) - d2.1;
        let iz = d1.2 + (n - 1) - d2.2;
        self.k_table[ix + side * (iy + side * iz)]
    }

    fn transpose(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n3 = self.grid.len();
        let mut out = vec![Complex64::default(); n3 * n3];
        for i2 in 0..n3 {
            for i1 in 0..n3 {
                out[i2 + n3 * i1] = psi[i1 + n3 * i2];
            }
        }
        out
    }

    /// (L1 + L2) Psi.
    pub fn apply_kinetic(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let g = self.grid;
        let n3 = g.len();
        let mut out = vec![Complex64::default(); n3 * n3];
        // slot 1: contiguous slices
        let mut slice = ComplexField3D::zeros(g);
        for i2 in 0..n3 {
            slice.values.copy_from_slice(&psi[n3 * i2..n3 * (i2 + 1)]);
            let applied = self.op.apply(&slice);
            out[n3 * i2..n3 * (i2 + 1)].copy_from_slice(&applied.values);
        }
        // slot 2 via transpose
        let t = self.transpose(psi);
        let mut out_t = vec![Complex64::default(); n3 * n3];
        for i1 in 0..n3 {
            slice.values.copy_from_slice(&t[n3 * i1..n3 * (i1 + 1)]);
            let applied = self.op.apply(&slice);
            out_t[n3 * i1..n3 * (i1 + 1)].copy_from_slice(&applied.values);
        }
        for i2 in 0..n3 {
            for i1 in 0..n3 {
                out[i1 + n3 * i2] += out_t[i2 + n3 * i1];
            }
        }
        out
    }

    /// Diagonal of the interaction + linearized attraction:
    /// k(x1 - x2) - alpha (V(x1) + V(x2)).
    fn diagonal(&self, v_sigma: Option<&ScalarField3D>, alpha: f64) -> Vec<f64> {
        let g = self.grid;
        let n = g.n;
        let n3 = g.len();
        let mut diag = vec![0.0; n3 * n3];
        for i2z in 0..n {
            for i2y in 0..n {
                for i2x in 0..n {
                    let i2 = g.idx(i2x, i2y, i2z);
                    let v2 = v_sigma.map_or(0.0, |v| v.values[i2]);
                    for i1z in 0..n {
                        for i1y in 0..n {
                            for i1x in 0..n {
                                let i1 = g.idx(i1x, i1y, i1z);
                                let mut d =
                                    self.k_at((i1x, i1y, i1z), (i2x, i2y, i2z));
                                if let Some(v) = v_sigma {
                                    d -= alpha * (v.values[i1] + v2);
                                }
                                diag[i1 + n3 * i2] = d;
                            }
                        }
                    }
                }
            }
        }
        diag
    }

    pub fn energy_parts(&self, st: &TwoBodyState) -> (f64, f64) {
        let h6 = self.grid.cell_volume().powi(2);
        let kin_applied = self.apply_kinetic(&st.values);
        let mut kin = Complex64::default();
        for (a, b) in st.values.iter().zip(&kin_applied) {
            kin += a.conj() * b;
        }
        let g = self.grid;
        let n = g.n;
        let n3 = g.len();
        let mut rep = 0.0;
        for i2z in 0..n {
            for i2y in 0..n {
                for i2x in 0..n {
                    let i2 = g.idx(i2x, i2y, i2z);
                    for i1z in 0..n {
                        for i1y in 0..n {
                            for i1x in 0..n {
                                let i1 = g.idx(i1x, i1y, i1z);
                                rep += self.k_at((i1x, i1y, i1z), (i2x, i2y, i2z))
                                    * st.values[i1 + n3 * i2].norm_sqr();
                            }
                        }
                    }
                }
            }
        }
        ((kin * h6).re, rep * h6)
    }

    /// <Psi, H_sigma Psi> / <Psi, Psi> and its functional gradient
    /// (H Psi - exp Psi) / ||Psi||^2.
    pub fn h_gradient(
        &self,
        st: &TwoBodyState,
        v_sigma: &ScalarField3D,
        alpha: f64,
        offset: f64,
    ) -> (f64, Vec<Complex64>) {
        let h6 = self.grid.cell_volume().powi(2);
        let mut hpsi = self.apply_kinetic(&st.values);
        let diag = self.diagonal(Some(v_sigma), alpha);
        for (h, (d, v)) in hpsi.iter_mut().zip(diag.iter().zip(&st.values)) {
            *h += d * v;
        }
        let mut num = Complex64::default();
        let mut den = 0.0;
        for (a, b) in st.values.iter().zip(&hpsi) {
            num += a.conj() * b;
            den += a.norm_sqr();
        }
        let norm_sq = den * h6;
        let exp = (num * h6).re / norm_sq + alpha * offset;
        let exp_no_off = (num * h6).re / norm_sq;
        let mut grad = hpsi;
        for (gv, v) in grad.iter_mut().zip(&st.values) {
            *gv = (*gv - exp_no_off * v) / norm_sq;
        }
        (exp, grad)
    }

    pub fn h_expectation(
        &self,
        st: &TwoBodyState,
        v_sigma: &ScalarField3D,
        alpha: f64,
        offset: f64,
    ) -> f64 {
        let h6 = self.grid.cell_volume().powi(2);
        let mut hpsi = self.apply_kinetic(&st.values);
        let diag = self.diagonal(Some(v_sigma), alpha);
        for (h, (d, v)) in hpsi.iter_mut().zip(diag.iter().zip(&st.values)) {
            *h += d * v;
        }
        let mut num = Complex64::default();
        let mut den = 0.0;
        for (a, b) in st.values.iter().zip(&hpsi) {
            num += a.conj() * b;
            den += a.norm_sqr();
        }
        (num * h6).re / (den * h6) + alpha * offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{energy, AnsatzState};

    fn gaussian(grid: Grid3D, s: f64) -> ComplexField3D {
        let mut f = ComplexField3D::from_fn(grid, |p| {
            Complex64::new(
                (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * s * s)).exp(),
                0.0,
            )
        });
        f.normalize().unwrap();
        f
    }

    #[test]
    fn density_integrates_to_two() {
        let grid = Grid3D::new(10, 1.2).unwrap();
        let phi = gaussian(grid, 1.6);
        let st = TwoBodyState::from_pair(&phi, &PairFactor::Gaussian { c: 0.5, w: 1.0 }).unwrap();
        assert!((st.density().integral() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn full_field_energy_matches_pair_family_on_same_grid() {
        let grid = Grid3D::new(10, 1.2).unwrap();
        let gauge = MagneticGauge { b: [0.0, 0.0, 0.5] };
        let phi = gaussian(grid, 1.5);
        let factor = PairFactor::Gaussian { c: 0.45, w: 1.1 };
        let alpha = 0.8;
        let pair_state = AnsatzState::pair_correlated(phi.clone(), factor.clone()).unwrap();
        let full_state =
            AnsatzState::two_body(TwoBodyState::from_pair(&phi, &factor).unwrap());
        let ep = energy(&pair_state, &gauge, alpha).unwrap();
        let ef = energy(&full_state, &gauge, alpha).unwrap();
        // same discrete functional through two very different summation
        // orders (FFT convolutions vs direct n^6 kernel sums)
        let scale = 1.0 + ep.total.abs();
        assert!(
            (ep.total - ef.total).abs() < 1e-10 * scale,
            "pair {} vs full {}",
            ep.total,
            ef.total
        );
        assert!((ep.kinetic - ef.kinetic).abs() < 1e-10 * (1.0 + ep.kinetic.abs()));
        assert!((ep.repulsion - ef.repulsion).abs() < 1e-10 * (1.0 + ep.repulsion.abs()));
    }

    #[test]
    fn symmetrized_product_matches_hartree_for_disjoint_orbitals() {
        let grid = Grid3D::new(12, 1.1).unwrap();
        let gauge = MagneticGauge::zero();
        let mut a = ComplexField3D::from_fn(grid, |p| {
            Complex64::new(
                (-((p[0] + 2.6) * (p[0] + 2.6) + p[1] * p[1] + p[2] * p[2])).exp(),
                0.0,
            )
        });
        a.normalize().unwrap();
        let mut b = ComplexField3D::from_fn(grid, |p| {
            Complex64::new(
                (-((p[0] - 2.6) * (p[0] - 2.6) + p[1] * p[1] + p[2] * p[2])).exp(),
                0.0,
            )
        });
        b.normalize().unwrap();
        let full = AnsatzState::two_body(TwoBodyState::from_orbitals(&a, &b).unwrap());
        let hart = AnsatzState::hartree(vec![a, b]).unwrap();
        let ef = energy(&full, &gauge, 0.6).unwrap();
        let eh = energy(&hart, &gauge, 0.6).unwrap();
        // the symmetrized product of nearly-disjoint orbitals carries a tiny
        // overlap correction; agreement is to the overlap scale, not exact
        assert!(
            (ef.total - eh.total).abs() < 1e-6 * (1.0 + eh.total.abs()),
            "full {} vs hartree {}",
            ef.total,
            eh.total
        );
    }

    #[test]
    fn oversized_grids_are_rejected() {
        let grid = Grid3D::new(16, 1.0).unwrap();
        let n3 = grid.len();
        assert!(TwoBodyState::new(grid, vec![Complex64::default(); n3 * n3]).is_err());
    }
}
