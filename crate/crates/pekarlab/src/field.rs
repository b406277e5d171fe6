//! Complex and real scalar fields sampled on a [`Grid3D`], with midpoint-rule
//! inner products.

use num_complex::Complex64;

use crate::grid::Grid3D;
use crate::{Error, Result};

/// One-particle complex field. `values[idx]` with x fastest.
#[derive(Debug, Clone)]
pub struct ComplexField3D {
    pub grid: Grid3D,
    pub values: Vec<Complex64>,
}

/// Real scalar field on the same layout (densities, potentials, localizers).
#[derive(Debug, Clone)]
pub struct ScalarField3D {
    pub grid: Grid3D,
    pub values: Vec<f64>,
}

impl ComplexField3D {
    pub fn zeros(grid: Grid3D) -> Self {
        ComplexField3D { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Sample a function of position.
    pub fn from_fn(grid: Grid3D, mut f: impl FnMut([f64; 3]) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iz in 0..grid.n {
            for iy in 0..grid.n {
                for ix in 0..grid.n {
                    values.push(f(grid.pos(ix, iy, iz)));
                }
            }
        }
        ComplexField3D { grid, values }
    }

    /// `<self, other> = h^3 sum conj(self) * other`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.grid, other.grid);
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a.conj() * b;
        }
        acc * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for v in &self.values {
            acc += v.norm_sqr();
        }
        acc * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Normalize in place to unit L2 norm. Errors on the zero field.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Usage(format!("cannot normalize field with norm {n}")));
        }
        let s = 1.0 / n;
        for v in &mut self.values {
            *v *= s;
        }
        Ok(())
    }

    /// |psi|^2 as a scalar field (no quadrature weight).
    pub fn abs_sq(&self) -> ScalarField3D {
        ScalarField3D {
            grid: self.grid,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: Complex64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// Fraction of |psi|^2 mass in the outermost `shell` cells of the box.
    pub fn boundary_mass_fraction(&self, shell: usize) -> f64 {
        let n = self.grid.n;
        let mut total = 0.0;
        let mut edge = 0.0;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let m = self.values[self.grid.idx(ix, iy, iz)].norm_sqr();
                    total += m;
                    let on_edge = ix < shell
                        || iy < shell
                        || iz < shell
                        || ix >= n - shell
                        || iy >= n - shell
                        || iz >= n - shell;
                    if on_edge {
                        edge += m;
                    }
                }
            }
        }
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }
}

impl ScalarField3D {
    pub fn zeros(grid: Grid3D) -> Self {
        ScalarField3D { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid3D, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iz in 0..grid.n {
            for iy in 0..grid.n {
                for ix in 0..grid.n {
                    values.push(f(grid.pos(ix, iy, iz)));
                }
            }
        }
        ScalarField3D { grid, values }
    }

    /// `h^3 sum` of the samples.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `h^3 sum self * other`.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += a * b;
        }
        acc * self.grid.cell_volume()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// L1 norm `h^3 sum |v|`.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
