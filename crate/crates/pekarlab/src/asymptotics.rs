//! Far-field machinery: smooth radial cutoffs, dipole recentering, the
//! Coulomb-kernel Taylor expansion with a calibrated remainder constant,
//! far-field potentials including the quadrupole term, the dipole functional
//! L(y_hat, D), and the ||I_R|| ~ R^-3 interaction-norm scaling law.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::OnceLock;

use crate::ansatz::AnsatzState;
use crate::coulomb::coulomb_potential_at;
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::MagneticGauge;
use crate::ims::smooth_step;
use crate::kinetic::magnetic_translate;
use crate::{Error, Result};

/// Radial cutoff profile chi(s) with s = |x| - R: exactly 1 for s <= -1,
/// exactly 0 for s >= 0, smooth monotone in between (the same mollified ramp
/// that builds the partition of unity, composed with cosine so that chi^2
/// also transitions smoothly).
fn cutoff_profile(s: f64) -> f64 {
    let t = smooth_step(s + 1.0);
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        (std::f64::consts::FRAC_PI_2 * t).cos()
    }
}

/// Measured sup |chi'| of the 1D profile (recorded, not assumed <= 1).
fn profile_derivative_sup() -> f64 {
    static SUP: OnceLock<f64> = OnceLock::new();
    *SUP.get_or_init(|| {
        let n = 4000;
        let mut sup: f64 = 0.0;
        let dh = 1.0 / n as f64;
        for k in 0..n {
            let s = -1.0 + (k as f64 + 0.5) * dh;
            let d = (cutoff_profile(s + 0.5 * dh) - cutoff_profile(s - 0.5 * dh)) / dh;
            sup = sup.max(d.abs());
        }
        sup
    })
}

/// A cutoff block: one normalized orbital phi with exact support in B(0, R),
/// representing an m-particle product block of density m |phi|^2.
#[derive(Clone)]
pub struct CutoffState {
    pub phi: ComplexField3D,
    pub r: f64,
    pub m: usize,
    /// Relative m-body mass removed by the cutoff.
    pub discarded_mass: f64,
    /// sup |chi'| of the radial profile actually used.
    pub ramp_derivative_sup: f64,
}

impl CutoffState {
    /// Block density, integrating to m.
    pub fn density(&self) -> ScalarField3D {
        let mut rho = self.phi.abs_sq();
        rho.scale(self.m as f64);
        rho
    }

    /// Smallest radius whose ball holds `frac` of the block mass.
    pub fn mass_radius(&self, frac: f64) -> f64 {
        mass_radius_of(&self.density(), frac)
    }
}

fn mass_radius_of(rho: &ScalarField3D, frac: f64) -> f64 {
    let g = rho.grid;
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(g.len());
    for iz in 0..g.n {
        for iy in 0..g.n {
            for ix in 0..g.n {
                let w = rho.values[g.idx(ix, iy, iz)];
                if w > 0.0 {
                    let p = g.pos(ix, iy, iz);
                    cells.push(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt(), w));
                }
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let target = frac * total;
    let mut acc = 0.0;
    for (r, w) in cells {
        acc += w;
        if acc >= target {
            return r;
        }
    }
    g.half_side()
}

/// Cut an ansatz state with the radial profile chi(|x| - R) per particle and
/// renormalize. Supported blocks: any single-particle state, or a hartree
/// product whose orbitals coincide (a condensate block), so that one orbital
/// carries the whole block.
pub fn smooth_cutoff(state: &AnsatzState, r: f64) -> Result<CutoffState> {
    let orbital: ComplexField3D = match state {
        AnsatzState::Hartree { orbitals } => {
            if orbitals.len() > 1 {
                let base = &orbitals[0];
                for o in &orbitals[1..] {
                    let mut diff = o.clone();
                    diff.axpy(Complex64::new(-1.0, 0.0), base);
                    if diff.norm() > 1e-8 * base.norm() {
                        return Err(Error::Config(
                            "cutoff blocks need identical hartree orbitals (a condensate block) \
                             or a single particle"
                                .into(),
                        ));
                    }
                }
            }
            orbitals[0].clone()
        }
        _ => {
            return Err(Error::Config(
                "cutoff blocks are built from hartree states".into(),
            ));
        }
    };
    let m = state.n_particles();
    let grid = orbital.grid;
    let rho = state.density();
    let half_mass = mass_radius_of(&rho, 0.5);
    if r < 4.0 * half_mass {
        return Err(Error::Usage(format!(
            "cutoff radius {} is below 4x the half-mass radius {:.3}",
            r, half_mass
        )));
    }
    let before = orbital.norm_sq();
    let mut phi = ComplexField3D::zeros(grid);
    for iz in 0..grid.n {
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let p = grid.pos(ix, iy, iz);
                let s = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - r;
                let chi = cutoff_profile(s);
                if chi != 0.0 {
                    let i = grid.idx(ix, iy, iz);
                    phi.values[i] = orbital.values[i] * chi;
                }
            }
        }
    }
    let after = phi.norm_sq();
    let kept = after / before;
    let discarded = 1.0 - kept.powi(m as i32);
    if discarded > 1e-2 {
        return Err(Error::Usage(format!(
            "cutoff at R = {} discards {:.3e} of the block mass; increase R",
            r, discarded
        )));
    }
    if after != before {
        // renormalize only when the cutoff actually bit, so that a state
        // already supported in B(R-1) passes through bitwise
        phi.normalize()?;
    }
    Ok(CutoffState {
        phi,
        r,
        m,
        discarded_mass: discarded,
        ramp_derivative_sup: profile_derivative_sup(),
    })
}

/// Dipole of the block density (integrates u rho(u), total mass m).
pub fn dipole_of(rho: &ScalarField3D) -> [f64; 3] {
    let g = rho.grid;
    let mut p = [0.0; 3];
    for iz in 0..g.n {
        for iy in 0..g.n {
            for ix in 0..g.n {
                let w = rho.values[g.idx(ix, iy, iz)];
                if w != 0.0 {
                    let x = g.pos(ix, iy, iz);
                    p[0] += w * x[0];
                    p[1] += w * x[1];
                    p[2] += w * x[2];
                }
            }
        }
    }
    let v = g.cell_volume();
    [p[0] * v, p[1] * v, p[2] * v]
}

/// Translate the block (with the gauge phase when B != 0) so that the
/// density dipole drops to half a cell per component (per unit of block
/// mass). The cutoff support must leave room for the shift.
pub fn recenter(c: &CutoffState, gauge: &MagneticGauge) -> Result<CutoffState> {
    let grid = c.phi.grid;
    let h = grid.spacing;
    let mf = c.m as f64;
    let mut out = c.clone();
    for _ in 0..3 {
        let p = dipole_of(&out.density());
        if p.iter().all(|&pc| pc.abs() <= 0.5 * h * mf) {
            return Ok(out);
        }
        let shift = [-p[0] / mf, -p[1] / mf, -p[2] / mf];
        let slen = (shift[0] * shift[0] + shift[1] * shift[1] + shift[2] * shift[2]).sqrt();
        if out.r + slen + h >= grid.half_side() {
            return Err(Error::Usage(format!(
                "recentering by {:.3} would push the R = {} support against the box edge; \
                 use a larger box",
                slen, out.r
            )));
        }
        let (moved, _) = magnetic_translate(&out.phi, gauge, shift)?;
        out.phi = moved;
        out.phi.normalize()?;
    }
    let p = dipole_of(&out.density());
    if p.iter().all(|&pc| pc.abs() <= 0.5 * h * mf) {
        Ok(out)
    } else {
        Err(Error::NonConvergence(format!(
            "recentering did not reach half-cell dipole: {:?}",
            p
        )))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelExpansion {
    /// Orders 0..2 of 1/|w - y| in powers of |w|/|y|.
    pub terms: [f64; 3],
    pub sum: f64,
    pub remainder: f64,
    /// C |w|^3 / |y|^4 with C calibrated once at |w|/|y| = 1/2.
    pub bound: f64,
    /// Whether the bound was asserted (only claimed for |w| <= |y|/2).
    pub checked: bool,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn expansion_raw(w: [f64; 3], y: [f64; 3]) -> ([f64; 3], f64) {
    let ya = norm3(y);
    let yh = [y[0] / ya, y[1] / ya, y[2] / ya];
    let wy = dot3(yh, w);
    let w2 = dot3(w, w);
    let t0 = 1.0 / ya;
    let t1 = wy / (ya * ya);
    let t2 = (3.0 * wy * wy - w2) / (2.0 * ya * ya * ya);
    let exact = 1.0 / norm3([w[0] - y[0], w[1] - y[1], w[2] - y[2]]);
    ([t0, t1, t2], exact - (t0 + t1 + t2))
}

/// Remainder constant calibrated once at ratio |w|/|y| = 1/2 over a direction
/// sweep (the collinear direction is the worst case, giving C = 2).
fn remainder_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let y = [0.0, 0.0, 4.0];
        let mut c: f64 = 0.0;
        // polar sweep of w directions relative to y (azimuth is degenerate)
        for k in 0..=180 {
            let th = std::f64::consts::PI * k as f64 / 180.0;
            let w = [2.0 * th.sin(), 0.0, 2.0 * th.cos()];
            let (_, rem) = expansion_raw(w, y);
            let ratio = rem.abs() * norm3(y).powi(4) / norm3(w).powi(3);
            c = c.max(ratio);
        }
        c
    })
}

/// Taylor expansion of 1/|w - y| to second order with the remainder and the
/// calibrated remainder bound. The bound is asserted for |w| <= |y|/2, where
/// the calibration point dominates.
pub fn kernel_expansion(w: [f64; 3], y: [f64; 3]) -> Result<KernelExpansion> {
    let wa = norm3(w);
    let ya = norm3(y);
    if !(wa < ya) {
        return Err(Error::Usage(format!(
            "kernel expansion needs |w| < |y| (got |w| = {wa}, |y| = {ya})"
        )));
    }
    let (terms, remainder) = expansion_raw(w, y);
    let bound = remainder_constant() * wa.powi(3) / ya.powi(4);
    let checked = wa <= 0.5 * ya;
    if checked && remainder.abs() > bound * (1.0 + 1e-9) + 1e-300 {
        return Err(Error::Config(format!(
            "kernel remainder {remainder:.3e} exceeds the calibrated bound {bound:.3e}"
        )));
    }
    Ok(KernelExpansion {
        terms,
        sum: terms[0] + terms[1] + terms[2],
        remainder,
        bound,
        checked,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MultipoleReport {
    pub monopole: f64,
    pub dipole: [f64; 3],
    /// Traceless second-moment form Q with f(y_hat) = y_hat . Q y_hat.
    pub quadrupole: [[f64; 3]; 3],
    /// (w, y, |remainder|, bound) spot checks of the kernel expansion.
    pub remainder_bound_checks: Vec<([f64; 3], [f64; 3], f64, f64)>,
}

impl MultipoleReport {
    /// f(y_hat) = int rho(u) (3 (y_hat.u)^2 - |u|^2)/2 du.
    pub fn f(&self, y_hat: [f64; 3]) -> f64 {
        let q = &self.quadrupole;
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += y_hat[a] * q[a][b] * y_hat[b];
            }
        }
        s
    }
}

fn moments_of(rho: &ScalarField3D) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let g = rho.grid;
    let mut m0 = 0.0;
    let mut p = [0.0; 3];
    let mut s = [[0.0; 3]; 3]; // plain second moments int u u^T rho
    for iz in 0..g.n {
        for iy in 0..g.n {
            for ix in 0..g.n {
                let w = rho.values[g.idx(ix, iy, iz)];
                if w == 0.0 {
                    continue;
                }
                let u = g.pos(ix, iy, iz);
                m0 += w;
                for a in 0..3 {
                    p[a] += w * u[a];
                    for b in 0..3 {
                        s[a][b] += w * u[a] * u[b];
                    }
                }
            }
        }
    }
    let v = g.cell_volume();
    m0 *= v;
    for a in 0..3 {
        p[a] *= v;
        for b in 0..3 {
            s[a][b] *= v;
        }
    }
    (m0, p, s)
}

/// Monopole, dipole and the traceless quadrupole form of the block density,
/// with kernel-remainder spot checks at ratio |w|/|y| = 1/3.
pub fn multipole_report(c: &CutoffState) -> Result<MultipoleReport> {
    let rho = c.density();
    let (m0, p, s) = moments_of(&rho);
    let tr = s[0][0] + s[1][1] + s[2][2];
    let mut q = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            q[a][b] = 1.5 * s[a][b];
        }
        q[a][a] -= 0.5 * tr;
    }
    let mut checks = Vec::new();
    let ya = 6.0 * c.r.max(1.0);
    for dir in [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.577350269189626, 0.577350269189626, 0.577350269189626],
    ] {
        let w = [dir[0] * ya / 3.0, dir[1] * ya / 3.0, dir[2] * ya / 3.0];
        let y = [0.0, 0.0, ya];
        let e = kernel_expansion(w, y)?;
        checks.push((w, y, e.remainder.abs(), e.bound));
    }
    Ok(MultipoleReport {
        monopole: m0,
        dipole: p,
        quadrupole: q,
        remainder_bound_checks: checks,
    })
}

/// Truncated far-field potential of the block at the point z - y (z near the
/// block, y the far offset): monopole, residual dipole, and the full
/// second-order term including f(y_hat)/|y|^3.
pub fn far_field(c: &CutoffState, y: [f64; 3], z: [f64; 3]) -> Result<f64> {
    let d = c.mass_radius(0.75);
    let za = norm3(z);
    if za > d {
        return Err(Error::Usage(format!(
            "far-field sample |z| = {za:.3} outside the inner ball d = {d:.3}"
        )));
    }
    let ya = norm3(y);
    if ya <= c.r {
        return Err(Error::Usage(format!(
            "far-field offset |y| = {ya:.3} must exceed the cutoff radius {}",
            c.r
        )));
    }
    let rep = multipole_report(c)?;
    let yh = [y[0] / ya, y[1] / ya, y[2] / ya];
    let m = rep.monopole;
    let p = rep.dipole;
    let zy = dot3(yh, z);
    let py = dot3(yh, p);
    let order0 = m / ya;
    let order1 = (m * zy - py) / (ya * ya);
    let order2 = (0.5 * m * (3.0 * zy * zy - dot3(z, z)) - 3.0 * zy * py
        + dot3(z, p)
        + rep.f(yh))
        / (ya * ya * ya);
    Ok(order0 + order1 + order2)
}

/// Exact potential of the block density at an arbitrary (off-grid) point.
pub fn exact_potential(c: &CutoffState, x: [f64; 3]) -> f64 {
    coulomb_potential_at(&c.density(), x)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DipoleFunctionalResult {
    pub y_hat: [f64; 3],
    pub d_opt: f64,
    pub l_min: f64,
    pub l_at_zero: f64,
}

/// Moments of the block density restricted to the ball B_d, plus the
/// restricted cell list for quadrature reuse.
struct RestrictedBlock {
    mass: f64,
    mu: [f64; 3],
    q: [[f64; 3]; 3],
    cells: Vec<([f64; 3], f64)>,
}

fn restrict_block(c: &CutoffState, d: f64) -> Result<RestrictedBlock> {
    let rho = c.density();
    let g = rho.grid;
    let v = g.cell_volume();
    let mut cells = Vec::new();
    let mut mass = 0.0;
    let mut mu = [0.0; 3];
    let mut q = [[0.0; 3]; 3];
    for iz in 0..g.n {
        for iy in 0..g.n {
            for ix in 0..g.n {
                let w = rho.values[g.idx(ix, iy, iz)] * v;
                if w == 0.0 {
                    continue;
                }
                let z = g.pos(ix, iy, iz);
                if dot3(z, z).sqrt() > d {
                    continue;
                }
                cells.push((z, w));
                mass += w;
                for a in 0..3 {
                    mu[a] += w * z[a];
                    for b in 0..3 {
                        q[a][b] += w * z[a] * z[b];
                    }
                }
            }
        }
    }
    let total = c.m as f64;
    if mass < 0.5 * total {
        return Err(Error::Usage(format!(
            "inner ball d = {d:.3} holds {mass:.3} of the block mass {total}; need at least half"
        )));
    }
    Ok(RestrictedBlock { mass, mu, q, cells })
}

fn m_matrix(y_hat: [f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            m[a][b] = -3.0 * y_hat[a] * y_hat[b];
        }
        m[a][a] += 1.0;
    }
    m
}

/// Quadratic coefficients of D -> L(y_hat, D) = c + 2 b D + a D^2 over the
/// restricted blocks: a = m1 m2, b = mu1 . M mu2, c = tr(M Q2 M Q1).
fn l_coefficients(b1: &RestrictedBlock, b2: &RestrictedBlock, y_hat: [f64; 3]) -> (f64, f64, f64) {
    let m = m_matrix(y_hat);
    let a = b1.mass * b2.mass;
    let mut b = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            b += b1.mu[i] * m[i][j] * b2.mu[j];
        }
    }
    let mut c = 0.0;
    // c = sum_{i,j,k,l} M_ij Q2_jk M_kl Q1_li
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    c += m[i][j] * b2.q[j][k] * m[k][l] * b1.q[l][i];
                }
            }
        }
    }
    (a, b, c)
}

/// L(y_hat, D) at a given D (for quadratic-identity checks).
pub fn dipole_l_value(
    c1: &CutoffState,
    c2: &CutoffState,
    y_hat: [f64; 3],
    d: f64,
    dval: f64,
) -> Result<f64> {
    let b1 = restrict_block(c1, d)?;
    let b2 = restrict_block(c2, d)?;
    let (a, b, c) = l_coefficients(&b1, &b2, y_hat);
    Ok(c + 2.0 * b * dval + a * dval * dval)
}

/// The dipole functional minimized exactly over D (closed form of the
/// quadratic): D_opt = -b/a, L_min = c - b^2/a.
pub fn dipole_l(
    c1: &CutoffState,
    c2: &CutoffState,
    y_hat: [f64; 3],
    d: f64,
) -> Result<DipoleFunctionalResult> {
    let b1 = restrict_block(c1, d)?;
    let b2 = restrict_block(c2, d)?;
    let (a, b, c) = l_coefficients(&b1, &b2, y_hat);
    if a <= 0.0 {
        return Err(Error::Config("empty restricted block".into()));
    }
    let d_opt = -b / a;
    let l_min = (c - b * b / a).max(0.0);
    Ok(DipoleFunctionalResult {
        y_hat,
        d_opt,
        l_min,
        l_at_zero: c,
    })
}

/// Monte Carlo estimate of L(y_hat, D) over the same restricted cell measure:
/// returns (mean, standard error) from `samples` pairs.
pub fn dipole_l_monte_carlo(
    c1: &CutoffState,
    c2: &CutoffState,
    y_hat: [f64; 3],
    d: f64,
    dval: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let b1 = restrict_block(c1, d)?;
    let b2 = restrict_block(c2, d)?;
    let m = m_matrix(y_hat);
    let cum = |cells: &[([f64; 3], f64)]| -> Vec<f64> {
        let mut acc = 0.0;
        cells
            .iter()
            .map(|c| {
                acc += c.1;
                acc
            })
            .collect()
    };
    let cum1 = cum(&b1.cells);
    let cum2 = cum(&b2.cells);
    let draw = |cells: &[([f64; 3], f64)], cumsum: &[f64], u: f64| -> [f64; 3] {
        let target = u * cumsum[cumsum.len() - 1];
        let k = cumsum.partition_point(|&c| c < target);
        cells[k.min(cells.len() - 1)].0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let z1 = draw(&b1.cells, &cum1, rng.gen::<f64>());
        let z2 = draw(&b2.cells, &cum2, rng.gen::<f64>());
        let mut k = dval;
        for a in 0..3 {
            for b in 0..3 {
                k += z1[a] * m[a][b] * z2[b];
            }
        }
        let v = k * k;
        sum += v;
        sumsq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let scale = b1.mass * b2.mass;
    Ok((mean * scale, (var / n).sqrt() * scale))
}

/// The 26 lattice directions (faces, edges, corners), normalized.
pub fn direction_sample() -> Vec<[f64; 3]> {
    let mut dirs = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if i == 0 && j == 0 && k == 0 {
                    continue;
                }
                let v = [i as f64, j as f64, k as f64];
                let n = norm3(v);
                dirs.push([v[0] / n, v[1] / n, v[2] / n]);
            }
        }
    }
    dirs
}

/// inf over the 26-direction sample of L_min — the strictly positive floor
/// recorded once per block pair.
pub fn l_direction_floor(c1: &CutoffState, c2: &CutoffState, d: f64) -> Result<f64> {
    let mut floor = f64::INFINITY;
    for yh in direction_sample() {
        let r = dipole_l(c1, c2, yh, d)?;
        floor = floor.min(r.l_min);
    }
    Ok(floor)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub enum MPolicy {
    Fixed(f64),
    PerROptimal,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormScanRow {
    pub r: f64,
    pub y_abs: f64,
    pub norm: f64,
    pub l_min: f64,
    pub ratio: f64,
    pub slope_running: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormScanReport {
    pub rows: Vec<NormScanRow>,
    /// Least-squares log-log slope of norm vs R.
    pub slope: f64,
    pub ratio_at_largest: f64,
    pub d: f64,
    pub y_hat: [f64; 3],
    pub l_floor: f64,
}

/// Scan ||(J~ + M) phi_1 (x) phi_2 restricted to B_d x B_d|| over separations
/// |y| = 3R along z, where J~(z1, z2) = 1/|z1 - z2 - y| - W2(z1 - y)
/// - W1(z2 + y) subtracts the blocks' mean far fields. With per-R optimal M
/// the norm follows sqrt(L_min)/|y|^3; the report records the log-log slope
/// and the ratio norm |y|^3 / sqrt(L_min). Restricted to one-particle blocks,
/// where the product norm is exactly the density-weighted quadrature.
pub fn interaction_norm_scan(
    c1: &CutoffState,
    c2: &CutoffState,
    r_values: &[f64],
    policy: MPolicy,
) -> Result<NormScanReport> {
    if c1.m != 1 || c2.m != 1 {
        return Err(Error::Config(
            "interaction norm scan supports one-particle blocks".into(),
        ));
    }
    if r_values.len() < 3 {
        return Err(Error::Usage("need at least 3 cutoff radii".into()));
    }
    if r_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("cutoff radii must be strictly increasing".into()));
    }
    let y_hat = [0.0, 0.0, 1.0];
    let d = mass_radius_of(&c1.density(), 0.75).max(mass_radius_of(&c2.density(), 0.75));
    let b1 = restrict_block(c1, d)?;
    let b2 = restrict_block(c2, d)?;
    if 3.0 * r_values[0] <= 2.0 * d + c1.phi.grid.spacing {
        return Err(Error::Usage(format!(
            "smallest separation 3R = {} does not clear the inner balls (d = {d:.3})",
            3.0 * r_values[0]
        )));
    }
    let lref = dipole_l(c1, c2, y_hat, d)?;
    let l_floor = l_direction_floor(c1, c2, d)?;
    let rho1 = c1.density();
    let rho2 = c2.density();
    let mut rows: Vec<NormScanRow> = Vec::with_capacity(r_values.len());
    for &rv in r_values {
        let ya = 3.0 * rv;
        let y = [0.0, 0.0, ya];
        // far potentials at the sample points
        let w2: Vec<f64> = b1
            .cells
            .iter()
            .map(|(z1, _)| coulomb_potential_at(&rho2, [z1[0] - y[0], z1[1] - y[1], z1[2] - y[2]]))
            .collect();
        let w1: Vec<f64> = b2
            .cells
            .iter()
            .map(|(z2, _)| coulomb_potential_at(&rho1, [z2[0] + y[0], z2[1] + y[1], z2[2] + y[2]]))
            .collect();
        let (mut q0, mut q1, mut q2) = (0.0, 0.0, 0.0);
        for (i1, (z1, wt1)) in b1.cells.iter().enumerate() {
            for (i2, (z2, wt2)) in b2.cells.iter().enumerate() {
                let dx = [z1[0] - z2[0] - y[0], z1[1] - z2[1] - y[1], z1[2] - z2[2] - y[2]];
                let j = 1.0 / norm3(dx) - w2[i1] - w1[i2];
                let w = wt1 * wt2;
                q0 += w * j * j;
                q1 += w * j;
                q2 += w;
            }
        }
        let m = match policy {
            MPolicy::Fixed(v) => v,
            MPolicy::PerROptimal => -q1 / q2,
        };
        let norm = (q0 + 2.0 * m * q1 + m * m * q2).max(0.0).sqrt();
        let ratio = norm * ya.powi(3) / lref.l_min.sqrt();
        let slope_running = rows.last().map(|prev: &NormScanRow| {
            (norm / prev.norm).ln() / (rv / prev.r).ln()
        });
        rows.push(NormScanRow {
            r: rv,
            y_abs: ya,
            norm,
            l_min: lref.l_min,
            ratio,
            slope_running,
        });
    }
    // least-squares slope of ln norm vs ln R
    let n = rows.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for row in &rows {
        let x = row.r.ln();
        let yv = row.norm.ln();
        sx += x;
        sy += yv;
        sxx += x * x;
        sxy += x * yv;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let ratio_at_largest = rows.last().unwrap().ratio;
    Ok(NormScanReport {
        rows,
        slope,
        ratio_at_largest,
        d,
        y_hat,
        l_floor,
    })
}
