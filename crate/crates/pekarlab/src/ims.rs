//! Partition of unity and the IMS localization identity on the grid.
//!
//! The pair (j1, j2) is built from a mollified ramp s: s = 0 on (-inf, 1],
//! s = 1 on [3, inf), |s'| <= 1/(2(1-2 delta)) = 0.625 with delta = 0.1, and
//! j1 = cos((pi/2) s((|x|-R_eps) eps)), j2 = sin(...), so j1^2 + j2^2 = 1
//! pointwise and sup|grad j_l| <= (pi/2) 0.625 eps < eps.
//!
//! The N-body partition J_a(x_1..x_N) = prod_j j_{a_j}(x_j) over labels
//! a in {1,2}^N is kept factorized. For the discrete kinetic operator the
//! localization identity is exact in the following form: for a hop between
//! configurations X, Y differing in slot j only,
//!
//!   sum_a J_a(X) J_a(Y) = 1 - (1/2) sum_l (j_l(x_j) - j_l(y_j))^2,
//!
//! because sum_l j_l^2 = 1 on every other slot. Multiplication operators
//! commute with J_a exactly, so
//!
//!   <Psi, H Psi> = sum_a ( <J_a Psi, H J_a Psi> - loc_a ),
//!
//! where loc_a is the hop sum weighted by (1/2) prod_{m != j} j_{a_m}^2(x_m)
//! (j_{a_j}(x_j) - j_{a_j}(y_j))^2 — the stencil-consistent realization of
//! <Psi, |grad J_a|^2 Psi>, to which it converges as h -> 0.

use num_complex::Complex64;
use std::sync::OnceLock;

use crate::ansatz::AnsatzState;
use crate::coulomb::CoulombSolver;
use crate::fft::gauss_legendre;
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::Grid3D;
use crate::kinetic::KineticOperator;
use crate::scf::EffectiveHamiltonian;
use crate::{Error, Result};

const DELTA: f64 = 0.1;

fn bump_rule() -> &'static (Vec<f64>, Vec<f64>, f64) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>, f64)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(48);
        let norm: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&u, &w)| w * (-1.0 / (1.0 - u * u)).exp())
            .sum();
        (nodes, weights, norm)
    })
}

/// Mollified ramp: exactly 0 for t <= 0, exactly 1 for t >= 1, smooth in
/// between, |s'| <= 1/(1 - 2 delta) = 1.25.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let (nodes, weights, norm) = bump_rule();
    let ramp = |x: f64| ((x - DELTA) / (1.0 - 2.0 * DELTA)).clamp(0.0, 1.0);
    let mut s = 0.0;
    for (&u, &w) in nodes.iter().zip(weights) {
        s += w * (-1.0 / (1.0 - u * u)).exp() * ramp(t - DELTA * u);
    }
    s / norm
}

/// Derivative of `smooth_step` through the same quadrature (test oracle for
/// the continuum |grad j|^2 limit).
fn smooth_step_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (nodes, weights, norm) = bump_rule();
    let mut s = 0.0;
    for (&u, &w) in nodes.iter().zip(weights) {
        let x = t - DELTA * u;
        if x > DELTA && x < 1.0 - DELTA {
            s += w * (-1.0 / (1.0 - u * u)).exp();
        }
    }
    s / (norm * (1.0 - 2.0 * DELTA))
}

/// Radial profile pair at ramp argument t (the ramp runs over [1, 3]):
/// f1 = cos((pi/2) s), f2 = sin((pi/2) s), f1^2 + f2^2 = 1.
pub fn partition_profiles(t: f64) -> (f64, f64) {
    let s = smooth_step((t - 1.0) / 2.0);
    if s <= 0.0 {
        (1.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 1.0)
    } else {
        let a = std::f64::consts::FRAC_PI_2 * s;
        (a.cos(), a.sin())
    }
}

/// Slope of the scaled ramp s((t-1)/2) in t (continuum oracle).
fn partition_ramp_prime(t: f64) -> f64 {
    0.5 * smooth_step_prime((t - 1.0) / 2.0)
}

/// Analytic localization weight of the radial pair at radius r:
/// |grad j_1|^2 + |grad j_2|^2 = (pi/2 * eps * d/dt[s((t-1)/2)])^2 at
/// t = eps (r - r_eps). This is the continuum limit of the discrete
/// hop-weight localization term.
pub fn analytic_gradient_weight(epsilon: f64, r_eps: f64, r: f64) -> f64 {
    let t = epsilon * (r - r_eps);
    let d = std::f64::consts::FRAC_PI_2 * epsilon * partition_ramp_prime(t);
    d * d
}

/// Continuum localization integral `int rho(x) w(|x|) dx` against the
/// analytic weight; `rho` is the total one-body density (mass N), so this is
/// the continuum limit of the summed discrete localization corrections.
pub fn continuum_localization(rho: &ScalarField3D, epsilon: f64, r_eps: f64) -> f64 {
    let grid = rho.grid;
    let mut acc = 0.0;
    for iz in 0..grid.n {
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let p = grid.pos(ix, iy, iz);
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let w = analytic_gradient_weight(epsilon, r_eps, r);
                if w > 0.0 {
                    acc += w * rho.values[grid.idx(ix, iy, iz)];
                }
            }
        }
    }
    acc * grid.cell_volume()
}

#[derive(Clone)]
pub struct PartitionPair {
    pub j1: ScalarField3D,
    pub j2: ScalarField3D,
    pub epsilon: f64,
    pub r_eps: f64,
    /// Measured sup of the fourth-order finite-difference gradient.
    pub derivative_sup: f64,
}

/// Build the radial partition pair j_l(x) = f_l((|x| - R_eps) eps).
/// j1 = 1 exactly on B(0, R_eps + 1/eps); supp j1 inside B(0, R_eps + 3/eps).
pub fn build_pair(epsilon: f64, r_eps: f64, grid: Grid3D) -> Result<PartitionPair> {
    if epsilon <= 0.0 || r_eps < 0.0 {
        return Err(Error::Config(
            "partition needs epsilon > 0 and R_eps >= 0".into(),
        ));
    }
    if r_eps + 3.0 / epsilon >= grid.half_side() {
        return Err(Error::Usage(format!(
            "partition geometry does not fit: R_eps + 3/eps = {} must stay below the box half-width {}",
            r_eps + 3.0 / epsilon,
            grid.half_side()
        )));
    }
    let prof = |p: [f64; 3]| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        partition_profiles((r - r_eps) * epsilon)
    };
    let j1 = ScalarField3D::from_fn(grid, |p| prof(p).0);
    let j2 = ScalarField3D::from_fn(grid, |p| prof(p).1);
    let derivative_sup = grad_sup(&j1).max(grad_sup(&j2));
    Ok(PartitionPair {
        j1,
        j2,
        epsilon,
        r_eps,
        derivative_sup,
    })
}

/// Max |grad| by fourth-order central differences on interior points.
fn grad_sup(f: &ScalarField3D) -> f64 {
    let g = f.grid;
    let n = g.n;
    let h = g.spacing;
    let mut sup: f64 = 0.0;
    let v = |ix: usize, iy: usize, iz: usize| f.values[g.idx(ix, iy, iz)];
    for iz in 2..n - 2 {
        for iy in 2..n - 2 {
            for ix in 2..n - 2 {
                let dx = (8.0 * (v(ix + 1, iy, iz) - v(ix - 1, iy, iz))
                    - (v(ix + 2, iy, iz) - v(ix - 2, iy, iz)))
                    / (12.0 * h);
                let dy = (8.0 * (v(ix, iy + 1, iz) - v(ix, iy - 1, iz))
                    - (v(ix, iy + 2, iz) - v(ix, iy - 2, iz)))
                    / (12.0 * h);
                let dz = (8.0 * (v(ix, iy, iz + 1) - v(ix, iy, iz - 1))
                    - (v(ix, iy, iz + 2) - v(ix, iy, iz - 2)))
                    / (12.0 * h);
                sup = sup.max((dx * dx + dy * dy + dz * dz).sqrt());
            }
        }
    }
    sup
}

/// The factorized N-body partition over labels {1,2}^N.
pub struct ProductPartition {
    pub pair: PartitionPair,
    pub n: usize,
}

impl ProductPartition {
    pub fn new(pair: PartitionPair, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("partition needs N >= 1".into()));
        }
        Ok(ProductPartition { pair, n })
    }

    /// All 2^N labels; bit j of the mask selects region 2 for slot j.
    pub fn labels(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0u32..(1u32 << self.n)).map(move |mask| {
            (0..self.n)
                .map(|j| if mask >> j & 1 == 0 { 1 } else { 2 })
                .collect()
        })
    }
}

pub struct ImsReport {
    /// <Psi, H Psi> computed through the same table machinery (uncut).
    pub expectation: f64,
    /// sum_a <J_a Psi, H J_a Psi>.
    pub localized_sum: f64,
    /// sum_a of the localization (gradient) terms.
    pub grad_sum: f64,
    /// |expectation - (localized_sum - grad_sum)|.
    pub residual: f64,
    /// (label, <J_a Psi, H J_a Psi>, loc_a) per label.
    pub per_label: Vec<(Vec<usize>, f64, f64)>,
}

fn perms_with_sign(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    fn rec(k: usize, items: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        let n = items.len();
        if k == n {
            let mut inv = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if items[i] > items[j] {
                        inv += 1;
                    }
                }
            }
            out.push((items.clone(), if inv % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for i in k..n {
            items.swap(k, i);
            rec(k + 1, items, out);
            items.swap(k, i);
        }
    }
    rec(0, &mut items, &mut out);
    out
}

/// Precomputed one-body matrices per region (0 = uncut, 1, 2) and the cut
/// pair-potential fields.
struct Tables {
    /// o[r][p][q] = <j_r phi_p, j_r phi_q> = <phi_p, j_r^2 phi_q>.
    o: Vec<Vec<Vec<Complex64>>>,
    /// t[r][p][q] = <j_r phi_p, K (j_r phi_q)>.
    t: Vec<Vec<Vec<Complex64>>>,
    /// vs[r][p][q] = <j_r phi_p, V_sigma j_r phi_q>.
    vs: Vec<Vec<Vec<Complex64>>>,
    /// g[r][p][q]: hop sum over UNCUT orbitals with the region-r weight
    /// (1/2)(j_r(i) - j_r(i+o))^2 — the localization matrix.
    g: Vec<Vec<Vec<Complex64>>>,
    /// vpot[r][p][q] = Coulomb potential of conj(j_r phi_p) (j_r phi_q).
    vpot: Vec<Vec<Vec<ComplexField3D>>>,
    cut: Vec<Vec<ComplexField3D>>,
    spins: Option<Vec<usize>>,
    grid: Grid3D,
}

impl Tables {
    fn spin_ok(&self, p: usize, q: usize) -> bool {
        match &self.spins {
            Some(s) => s[p] == s[q],
            None => true,
        }
    }

    fn build(
        h: &EffectiveHamiltonian,
        orbitals: &[ComplexField3D],
        spins: Option<&[usize]>,
        pair: &PartitionPair,
    ) -> Tables {
        let grid = orbitals[0].grid;
        let norb = orbitals.len();
        let op = KineticOperator::new(grid, h.gauge);
        let solver = CoulombSolver::shared(grid);
        let ones = ScalarField3D::from_fn(grid, |_| 1.0);
        let regions = [&ones, &pair.j1, &pair.j2];
        let len = grid.len();

        let mut cut: Vec<Vec<ComplexField3D>> = Vec::with_capacity(3);
        for jr in regions {
            let mut row = Vec::with_capacity(norb);
            for phi in orbitals {
                let mut f = phi.clone();
                for (v, j) in f.values.iter_mut().zip(&jr.values) {
                    *v *= *j;
                }
                row.push(f);
            }
            cut.push(row);
        }

        let spin_ok = |p: usize, q: usize| spins.map_or(true, |s| s[p] == s[q]);
        let zero3 = || vec![vec![vec![Complex64::default(); norb]; norb]; 3];
        let (mut o, mut t, mut vs, mut g) = (zero3(), zero3(), zero3(), zero3());
        for r in 0..3 {
            let kcut: Vec<ComplexField3D> = cut[r].iter().map(|f| op.apply(f)).collect();
            for p in 0..norb {
                for q in 0..norb {
                    if !spin_ok(p, q) {
                        continue;
                    }
                    o[r][p][q] = cut[r][p].inner(&cut[r][q]);
                    t[r][p][q] = cut[r][p].inner(&kcut[q]);
                    let mut acc = Complex64::default();
                    for k in 0..len {
                        acc += cut[r][p].values[k].conj()
                            * h.v_sigma.values[k]
                            * cut[r][q].values[k];
                    }
                    vs[r][p][q] = acc * grid.cell_volume();
                }
            }
        }
        // localization matrices on the uncut orbitals
        let n = grid.n as i64;
        for r in 1..3 {
            let jr = regions[r];
            for iz in 0..grid.n {
                for iy in 0..grid.n {
                    for ix in 0..grid.n {
                        let i = grid.idx(ix, iy, iz);
                        for term in op.terms() {
                            let jx = ix as i64 + term.cells[0];
                            let jy = iy as i64 + term.cells[1];
                            let jz = iz as i64 + term.cells[2];
                            if jx < 0 || jx >= n || jy < 0 || jy >= n || jz < 0 || jz >= n {
                                continue;
                            }
                            let jj = grid.idx(jx as usize, jy as usize, jz as usize);
                            let dj = jr.values[i] - jr.values[jj];
                            if dj == 0.0 {
                                continue;
                            }
                            let w = 0.5 * dj * dj;
                            let c = op.coeff(i, jj, term) * w;
                            for p in 0..norb {
                                for q in 0..norb {
                                    if !spin_ok(p, q) {
                                        continue;
                                    }
                                    g[r][p][q] += c
                                        * orbitals[p].values[i].conj()
                                        * orbitals[q].values[jj];
                                }
                            }
                        }
                    }
                }
            }
            for p in 0..norb {
                for q in 0..norb {
                    g[r][p][q] *= grid.cell_volume();
                }
            }
        }

        let mut vpot: Vec<Vec<Vec<ComplexField3D>>> = Vec::with_capacity(3);
        for r in 0..3 {
            let mut rowp = Vec::with_capacity(norb);
            for p in 0..norb {
                let mut rowq = Vec::with_capacity(norb);
                for q in 0..norb {
                    if !spin_ok(p, q) {
                        rowq.push(ComplexField3D::zeros(grid));
                        continue;
                    }
                    let mut prod = ComplexField3D::zeros(grid);
                    for k in 0..len {
                        prod.values[k] = cut[r][p].values[k].conj() * cut[r][q].values[k];
                    }
                    rowq.push(solver.potential_complex(&prod));
                }
                rowp.push(rowq);
            }
            vpot.push(rowp);
        }
        Tables {
            o,
            t,
            vs,
            g,
            vpot,
            cut,
            spins: spins.map(|s| s.to_vec()),
            grid,
        }
    }

    /// <(j_rj phi_p tensor j_rk phi_r), 1/|x-y| (j_rj phi_q tensor j_rk phi_s)>.
    fn upair(&self, rj: usize, p: usize, q: usize, rk: usize, r: usize, s: usize) -> Complex64 {
        if !self.spin_ok(p, q) || !self.spin_ok(r, s) {
            return Complex64::default();
        }
        let v = &self.vpot[rj][p][q];
        let a = &self.cut[rk][r];
        let b = &self.cut[rk][s];
        let mut acc = Complex64::default();
        for k in 0..self.grid.len() {
            acc += a.values[k].conj() * b.values[k] * v.values[k];
        }
        acc * self.grid.cell_volume()
    }
}

/// The sandwich <J_a Psi, H_sigma J_a Psi> and localization term loc_a for one
/// label, assembled over permutation pairs (Hartree: the identity pair only).
fn sandwich(
    tables: &Tables,
    h: &EffectiveHamiltonian,
    label: &[usize],
    perms: &[(Vec<usize>, f64)],
    scale: f64,
) -> (f64, f64) {
    let nslots = label.len();
    let mut value = Complex64::default();
    let mut loc = Complex64::default();
    for (pi, spi) in perms {
        for (tau, stau) in perms {
            let w = spi * stau * scale;
            let ov: Vec<Complex64> = (0..nslots)
                .map(|m| tables.o[label[m]][pi[m]][tau[m]])
                .collect();
            let prod_except = |skip: &[usize]| -> Complex64 {
                let mut p = Complex64::new(1.0, 0.0);
                for m in 0..nslots {
                    if !skip.contains(&m) {
                        p *= ov[m];
                    }
                }
                p
            };
            let mut acc = Complex64::default();
            let mut lacc = Complex64::default();
            for j in 0..nslots {
                let one = tables.t[label[j]][pi[j]][tau[j]]
                    - h.alpha * tables.vs[label[j]][pi[j]][tau[j]];
                acc += one * prod_except(&[j]);
                lacc += tables.g[label[j]][pi[j]][tau[j]] * prod_except(&[j]);
            }
            for j in 0..nslots {
                for k in (j + 1)..nslots {
                    let u = tables.upair(label[j], pi[j], tau[j], label[k], pi[k], tau[k]);
                    acc += u * prod_except(&[j, k]);
                }
            }
            acc += h.alpha * h.offset * prod_except(&[]);
            value += w * acc;
            loc += w * lacc;
        }
    }
    // Hermitian assembly: imaginary parts cancel to roundoff.
    (value.re, -loc.re)
}

/// Verify the localization identity for a factorized state. Returns the
/// report with per-label sandwich values; the residual is the defect of
/// <Psi,H Psi> = sum_a (<J_a Psi, H J_a Psi> - loc_a).
pub fn ims_identity_check(
    h: &EffectiveHamiltonian,
    state: &AnsatzState,
    partition: &ProductPartition,
) -> Result<ImsReport> {
    let (orbitals, spins): (&[ComplexField3D], Option<&[usize]>) = match state {
        AnsatzState::Hartree { orbitals } => (orbitals, None),
        AnsatzState::Slater { orbitals, spins, .. } => {
            if orbitals.len() > 3 {
                return Err(Error::Config(
                    "IMS check for Slater states supports N <= 3 (N!^2 assembly)".into(),
                ));
            }
            (orbitals, Some(spins))
        }
        _ => {
            return Err(Error::Usage(
                "IMS identity check needs a factorized (hartree or slater) state".into(),
            ));
        }
    };
    let nslots = orbitals.len();
    if partition.n != nslots {
        return Err(Error::Config(format!(
            "partition is for N = {} but the state has {} particles",
            partition.n, nslots
        )));
    }
    let tables = Tables::build(h, orbitals, spins, &partition.pair);
    let (perms, scale) = match state {
        AnsatzState::Slater { .. } => {
            let p = perms_with_sign(nslots);
            let s = 1.0
                / (1..=nslots).map(|k| k as f64).product::<f64>();
            (p, s)
        }
        _ => (vec![((0..nslots).collect::<Vec<usize>>(), 1.0)], 1.0),
    };
    let reference_label = vec![0usize; nslots];
    let (expectation, _) = sandwich(&tables, h, &reference_label, &perms, scale);
    let mut localized_sum = 0.0;
    let mut grad_sum = 0.0;
    let mut per_label = Vec::new();
    for label in partition.labels() {
        let (v, l) = sandwich(&tables, h, &label, &perms, scale);
        localized_sum += v;
        grad_sum += l;
        per_label.push((label, v, l));
    }
    let residual = (expectation - (localized_sum - grad_sum)).abs();
    Ok(ImsReport {
        expectation,
        localized_sum,
        grad_sum,
        residual,
        per_label,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SupportCheck {
    pub dist_rho1_j2: f64,
    pub dist_rho2_j1: f64,
    pub ok1: bool,
    pub ok2: bool,
}

/// Distance conditions dist(supp rho_1, supp j_2) >= 1/eps and
/// dist(supp rho_2, supp j_1) >= 1/eps, with supports thresholded at 1e-14.
/// The j supports are exact radial sets by construction: supp j_2 is
/// {|x| >= R_eps + 1/eps} and supp j_1 is {|x| <= R_eps + 3/eps}.
pub fn support_distance_check(
    pair: &PartitionPair,
    rho1: &ScalarField3D,
    rho2: &ScalarField3D,
    epsilon: f64,
) -> SupportCheck {
    let thresh = 1e-14;
    let radius_of = |rho: &ScalarField3D, maxmode: bool| -> f64 {
        let g = rho.grid;
        let mut best = if maxmode { 0.0f64 } else { f64::INFINITY };
        for iz in 0..g.n {
            for iy in 0..g.n {
                for ix in 0..g.n {
                    if rho.values[g.idx(ix, iy, iz)] > thresh {
                        let p = g.pos(ix, iy, iz);
                        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                        best = if maxmode { best.max(r) } else { best.min(r) };
                    }
                }
            }
        }
        best
    };
    let r1_max = radius_of(rho1, true);
    let r2_min = radius_of(rho2, false);
    let j2_inner = pair.r_eps + 1.0 / pair.epsilon;
    let j1_outer = pair.r_eps + 3.0 / pair.epsilon;
    let dist_rho1_j2 = (j2_inner - r1_max).max(0.0);
    let dist_rho2_j1 = (r2_min - j1_outer).max(0.0);
    SupportCheck {
        dist_rho1_j2,
        dist_rho2_j1,
        ok1: dist_rho1_j2 >= 1.0 / epsilon,
        ok2: dist_rho2_j1 >= 1.0 / epsilon,
    }
}
