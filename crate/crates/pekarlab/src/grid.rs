//! Uniform cubic grids centered at the origin, and the symmetric magnetic gauge.

use crate::{Error, Result};

/// Uniform cubic grid: `n` points per dimension at spacing `h`, centered so the
/// sample coordinates are `(i - (n-1)/2) h`. Box side `L = n h`; all quadrature
/// is the midpoint rule with weight `h^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    pub n: usize,
    pub spacing: f64,
}

impl Grid3D {
    pub fn new(n: usize, spacing: f64) -> Result<Self> {
        if n < 8 {
            return Err(Error::Config(format!("grid needs n >= 8 points per dim, got {n}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(Grid3D { n, spacing })
    }

    /// Box side length `n * spacing`.
    pub fn box_side(&self) -> f64 {
        self.n as f64 * self.spacing
    }

    /// Number of sample points.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Flat index, x fastest.
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }

    /// Coordinate of the i-th sample along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n as f64 - 1.0)) * self.spacing
    }

    /// Position of a sample point.
    #[inline]
    pub fn pos(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [self.coord(ix), self.coord(iy), self.coord(iz)]
    }

    /// Largest coordinate magnitude reachable inside the box (half side).
    pub fn half_side(&self) -> f64 {
        0.5 * self.box_side()
    }

    /// Snap a displacement to the nearest whole-cell lattice vector, returned
    /// in integer cells.
    pub fn snap(&self, h: [f64; 3]) -> [i64; 3] {
        [
            (h[0] / self.spacing).round() as i64,
            (h[1] / self.spacing).round() as i64,
            (h[2] / self.spacing).round() as i64,
        ]
    }
}

/// Symmetric-gauge vector potential `A(x) = B x x / 2` for a constant field.
/// `div A = 0` holds identically, which keeps the discrete kinetic operator
/// Hermitian without gauge-fixing corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagneticGauge {
    pub b: [f64; 3],
}

impl MagneticGauge {
    pub fn new(b: [f64; 3]) -> Self {
        MagneticGauge { b }
    }

    pub fn zero() -> Self {
        MagneticGauge { b: [0.0; 3] }
    }

    pub fn is_zero(&self) -> bool {
        self.b == [0.0; 3]
    }

    pub fn b_norm(&self) -> f64 {
        (self.b[0] * self.b[0] + self.b[1] * self.b[1] + self.b[2] * self.b[2]).sqrt()
    }

    /// `A(x) = (B x x) / 2`.
    #[inline]
    pub fn a(&self, x: [f64; 3]) -> [f64; 3] {
        [
            0.5 * (self.b[1] * x[2] - self.b[2] * x[1]),
            0.5 * (self.b[2] * x[0] - self.b[0] * x[2]),
            0.5 * (self.b[0] * x[1] - self.b[1] * x[0]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid3D::new(4, 0.5).is_err());
        assert!(Grid3D::new(16, 0.0).is_err());
        assert!(Grid3D::new(16, -1.0).is_err());
        assert!(Grid3D::new(16, f64::NAN).is_err());
    }

    #[test]
    fn grid_is_centered() {
        let g = Grid3D::new(16, 0.5).unwrap();
        assert_eq!(g.coord(0), -g.coord(15));
        assert!((g.coord(7) + g.coord(8)).abs() < 1e-15);
        assert_eq!(g.box_side(), 8.0);
    }

    #[test]
    fn gauge_is_divergence_free_and_orthogonal_to_b() {
        // A(x) . B = 0 and A(h) . h = 0 for the symmetric gauge.
        let gauge = MagneticGauge::new([0.3, -1.2, 0.7]);
        for x in [[1.0, 2.0, 3.0], [-0.5, 0.0, 4.0], [2.0, -2.0, 1.0]] {
            let a = gauge.a(x);
            let dot_b = a[0] * gauge.b[0] + a[1] * gauge.b[1] + a[2] * gauge.b[2];
            let dot_x = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
            assert!(dot_b.abs() < 1e-14);
            assert!(dot_x.abs() < 1e-14);
        }
    }
}
