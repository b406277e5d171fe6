//! Trial-state families and their energies.
//!
//! Four families share one discrete functional: Hartree products, Slater
//! determinants with spin multiplicity q, a correlated pair ansatz
//! phi(x)phi(y)g(x-y), and (on small grids) a full two-body field. Energies of
//! all families are evaluated with the same kinetic stencil and the same
//! Coulomb kernel, so cross-family comparisons are variational statements
//! about one discrete problem rather than about two discretizations.

use num_complex::Complex64;

use crate::coulomb::CoulombSolver;
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::{Grid3D, MagneticGauge};
use crate::kinetic::KineticOperator;
use crate::pair;
use crate::twobody::TwoBodyState;
use crate::{Error, Result};

/// Correlation factor g(|z|) for the pair family.
#[derive(Clone, Debug)]
pub enum PairFactor {
    /// g(r) = 1 - c exp(-r^2 / (2 w^2)), 0 <= c < 1.
    Gaussian { c: f64, w: f64 },
    /// Piecewise-linear radial table; constant extrapolation past the ends.
    Table { rs: Vec<f64>, gs: Vec<f64> },
}

impl PairFactor {
    pub fn validate(&self) -> Result<()> {
        match self {
            PairFactor::Gaussian { c, w } => {
                if !(*c >= 0.0 && *c < 1.0) || !c.is_finite() {
                    return Err(Error::Config(format!(
                        "pair factor depth must satisfy 0 <= c < 1, got {c}"
                    )));
                }
                if !(*w > 0.0) || !w.is_finite() {
                    return Err(Error::Config(format!(
                        "pair factor width must be positive, got {w}"
                    )));
                }
                Ok(())
            }
            PairFactor::Table { rs, gs } => {
                if rs.len() != gs.len() || rs.len() < 2 {
                    return Err(Error::Config(
                        "pair factor table needs matching rs/gs with at least 2 entries".into(),
                    ));
                }
                for w in rs.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(Error::Config("pair factor radii must increase".into()));
                    }
                }
                if rs[0] < 0.0 {
                    return Err(Error::Config("pair factor radii must be nonnegative".into()));
                }
                if gs.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
                    return Err(Error::Config("pair factor values must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval_r(&self, r: f64) -> f64 {
        match self {
            PairFactor::Gaussian { c, w } => 1.0 - c * (-r * r / (2.0 * w * w)).exp(),
            PairFactor::Table { rs, gs } => {
                if r <= rs[0] {
                    return gs[0];
                }
                if r >= *rs.last().unwrap() {
                    return *gs.last().unwrap();
                }
                let k = rs.partition_point(|&t| t < r).max(1);
                let (r0, r1) = (rs[k - 1], rs[k]);
                let (g0, g1) = (gs[k - 1], gs[k]);
                g0 + (g1 - g0) * (r - r0) / (r1 - r0)
            }
        }
    }

    pub fn eval(&self, z: [f64; 3]) -> f64 {
        self.eval_r((z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt())
    }

    /// True when the factor is identically one (reduces the pair family to a
    /// two-orbital Hartree product with equal orbitals).
    pub fn is_trivial(&self) -> bool {
        match self {
            PairFactor::Gaussian { c, .. } => *c == 0.0,
            PairFactor::Table { gs, .. } => gs.iter().all(|&g| g == 1.0),
        }
    }
}

#[derive(Clone)]
pub enum AnsatzState {
    Hartree {
        orbitals: Vec<ComplexField3D>,
    },
    Slater {
        orbitals: Vec<ComplexField3D>,
        spins: Vec<usize>,
        q: usize,
    },
    Pair {
        orbital: ComplexField3D,
        factor: PairFactor,
    },
    TwoBody(TwoBodyState),
}

impl AnsatzState {
    pub fn hartree(mut orbitals: Vec<ComplexField3D>) -> Result<Self> {
        if orbitals.is_empty() || orbitals.len() > 8 {
            return Err(Error::Config(
                "Hartree product needs between 1 and 8 orbitals".into(),
            ));
        }
        let g = orbitals[0].grid;
        for o in orbitals.iter_mut() {
            if o.grid != g {
                return Err(Error::Config("orbitals live on different grids".into()));
            }
            o.normalize()?;
        }
        Ok(AnsatzState::Hartree { orbitals })
    }

    pub fn slater(orbitals: Vec<ComplexField3D>, q: usize) -> Result<Self> {
        let n = orbitals.len();
        if n == 0 || n > 4 {
            return Err(Error::Config(
                "Slater determinant supports 1 to 4 orbitals".into(),
            ));
        }
        if q == 0 {
            return Err(Error::Config("spin multiplicity q must be >= 1".into()));
        }
        let g = orbitals[0].grid;
        if orbitals.iter().any(|o| o.grid != g) {
            return Err(Error::Config("orbitals live on different grids".into()));
        }
        let spins: Vec<usize> = (0..n).map(|i| i % q).collect();
        let orbitals = lowdin_blocks(orbitals, &spins, q)?;
        Ok(AnsatzState::Slater { orbitals, spins, q })
    }

    pub fn pair_correlated(mut orbital: ComplexField3D, factor: PairFactor) -> Result<Self> {
        factor.validate()?;
        orbital.normalize()?;
        Ok(AnsatzState::Pair { orbital, factor })
    }

    pub fn two_body(state: TwoBodyState) -> Self {
        AnsatzState::TwoBody(state)
    }

    pub fn n_particles(&self) -> usize {
        match self {
            AnsatzState::Hartree { orbitals } => orbitals.len(),
            AnsatzState::Slater { orbitals, .. } => orbitals.len(),
            AnsatzState::Pair { .. } => 2,
            AnsatzState::TwoBody(_) => 2,
        }
    }

    pub fn grid(&self) -> Grid3D {
        match self {
            AnsatzState::Hartree { orbitals } => orbitals[0].grid,
            AnsatzState::Slater { orbitals, .. } => orbitals[0].grid,
            AnsatzState::Pair { orbital, .. } => orbital.grid,
            AnsatzState::TwoBody(t) => t.grid,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            AnsatzState::Hartree { .. } => "hartree",
            AnsatzState::Slater { .. } => "slater",
            AnsatzState::Pair { .. } => "pair",
            AnsatzState::TwoBody(_) => "twobody",
        }
    }

    pub fn orbitals(&self) -> Option<&[ComplexField3D]> {
        match self {
            AnsatzState::Hartree { orbitals } => Some(orbitals),
            AnsatzState::Slater { orbitals, .. } => Some(orbitals),
            AnsatzState::Pair { .. } | AnsatzState::TwoBody(_) => None,
        }
    }

    /// One-particle density; integrates to the particle number.
    pub fn density(&self) -> ScalarField3D {
        match self {
            AnsatzState::Hartree { orbitals } | AnsatzState::Slater { orbitals, .. } => {
                let mut rho = ScalarField3D::zeros(orbitals[0].grid);
                for o in orbitals {
                    rho.axpy(1.0, &o.abs_sq());
                }
                rho
            }
            AnsatzState::Pair { orbital, factor } => pair::pair_density(orbital, factor),
            AnsatzState::TwoBody(t) => t.density(),
        }
    }
}

/// Energy of a state under the full functional at coupling `alpha`.
#[derive(Clone, Debug)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub repulsion: f64,
    /// alpha * D(rho, rho); enters the total with a minus sign.
    pub attraction: f64,
    pub total: f64,
    /// ||Psi||^2 + <Psi, sum_j D_A^2 Psi> = 1 + kinetic for normalized states.
    pub form_norm_sq: f64,
    pub warnings: Vec<String>,
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha <= 1.0) || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "coupling must satisfy 0 <= alpha <= 1 (U = 1 units), got {alpha}"
        )));
    }
    Ok(())
}

pub fn energy(state: &AnsatzState, gauge: &MagneticGauge, alpha: f64) -> Result<EnergyBreakdown> {
    validate_alpha(alpha)?;
    let grid = state.grid();
    let mut warnings = Vec::new();
    let (kinetic, repulsion) = match state {
        AnsatzState::Hartree { orbitals } => {
            let op = KineticOperator::new(grid, *gauge);
            let solver = CoulombSolver::shared(grid);
            let mut kin = 0.0;
            for o in orbitals {
                kin += op.quadratic_form(o);
                if let Some(w) = op.boundary_warning(o) {
                    warnings.push(w);
                }
            }
            let dens: Vec<ScalarField3D> = orbitals.iter().map(|o| o.abs_sq()).collect();
            let mut rep = 0.0;
            for i in 0..dens.len() {
                for j in (i + 1)..dens.len() {
                    rep += 2.0 * solver.pair_energy(&dens[i], &dens[j]);
                }
            }
            (kin, rep)
        }
        AnsatzState::Slater { orbitals, spins, .. } => {
            let op = KineticOperator::new(grid, *gauge);
            let solver = CoulombSolver::shared(grid);
            let mut kin = 0.0;
            for o in orbitals {
                kin += op.quadratic_form(o);
                if let Some(w) = op.boundary_warning(o) {
                    warnings.push(w);
                }
            }
            let dens: Vec<ScalarField3D> = orbitals.iter().map(|o| o.abs_sq()).collect();
            let mut rep = 0.0;
            for i in 0..orbitals.len() {
                for j in (i + 1)..orbitals.len() {
                    rep += 2.0 * solver.pair_energy(&dens[i], &dens[j]);
                    if spins[i] == spins[j] {
                        rep -= exchange_energy(&solver, &orbitals[i], &orbitals[j]);
                    }
                }
            }
            (kin, rep)
        }
        AnsatzState::Pair { orbital, factor } => {
            let parts = pair::pair_energy_parts(orbital, factor, gauge)?;
            let op = KineticOperator::new(grid, *gauge);
            if let Some(w) = op.boundary_warning(orbital) {
                warnings.push(w);
            }
            (parts.kinetic, parts.repulsion)
        }
        AnsatzState::TwoBody(t) => {
            let parts = t.energy_parts(gauge);
            (parts.0, parts.1)
        }
    };
    let rho = state.density();
    let solver = CoulombSolver::shared(grid);
    let attraction = alpha * solver.pair_energy(&rho, &rho);
    let total = kinetic + repulsion - attraction;
    Ok(EnergyBreakdown {
        kinetic,
        repulsion,
        attraction,
        total,
        form_norm_sq: 1.0 + kinetic,
        warnings,
    })
}

/// Exchange integral Ex(i,j) = iint p(x) conj(p(y)) / |x-y| with
/// p = conj(phi_i) phi_j; real and nonnegative.
pub fn exchange_energy(
    solver: &CoulombSolver,
    phi_i: &ComplexField3D,
    phi_j: &ComplexField3D,
) -> f64 {
    let g = phi_i.grid;
    let mut p = ComplexField3D::zeros(g);
    for i in 0..g.len() {
        p.values[i] = phi_i.values[i].conj() * phi_j.values[i];
    }
    let vp = solver.potential_complex(&p);
    let mut acc = Complex64::default();
    for i in 0..g.len() {
        acc += p.values[i].conj() * vp.values[i];
    }
    (acc * g.cell_volume()).re
}

/// Eigen-decomposition of a small complex Hermitian matrix by cyclic Jacobi.
/// Returns (eigenvalues ascending, columns of V with A = V diag V^dagger).
pub fn hermitian_eigen(a_in: &[Vec<Complex64>]) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let n = a_in.len();
    let mut a: Vec<Vec<Complex64>> = a_in.to_vec();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::default()
                    }
                })
                .collect()
        })
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q].norm_sqr();
            }
        }
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let f = a[p][q];
                let m = f.norm();
                if m < 1e-300 {
                    continue;
                }
                let theta = f.arg();
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let phi = 0.5 * (2.0 * m).atan2(aqq - app);
                let (s, c) = phi.sin_cos();
                let e_pos = Complex64::from_polar(1.0, theta);
                // column rotation: col_p' = c col_p - s e^{-i theta} col_q,
                //                  col_q' = s e^{i theta} col_p + c col_q
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * e_pos.conj() * akq;
                    a[k][q] = s * e_pos * akp + c * akq;
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * e_pos.conj() * vkq;
                    v[k][q] = s * e_pos * vkp + c * vkq;
                }
                // matching row rotation (conjugate transpose)
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * e_pos * aqk;
                    a[q][k] = s * e_pos.conj() * apk + c * aqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].re.partial_cmp(&a[j][j].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[i][i].re).collect();
    let vecs: Vec<Vec<Complex64>> = (0..n)
        .map(|k| order.iter().map(|&i| v[k][i]).collect())
        .collect();
    (vals, vecs)
}

/// Loewdin-orthonormalize orbitals within each spin block.
fn lowdin_blocks(
    orbitals: Vec<ComplexField3D>,
    spins: &[usize],
    q: usize,
) -> Result<Vec<ComplexField3D>> {
    let mut out = orbitals;
    for spin in 0..q {
        let idx: Vec<usize> = (0..out.len()).filter(|&i| spins[i] == spin).collect();
        if idx.len() <= 1 {
            if let Some(&i) = idx.first() {
                out[i].normalize()?;
            }
            continue;
        }
        let m = idx.len();
        let mut gram = vec![vec![Complex64::default(); m]; m];
        for a in 0..m {
            for b in 0..m {
                gram[a][b] = out[idx[a]].inner(&out[idx[b]]);
            }
        }
        let (vals, vecs) = hermitian_eigen(&gram);
        if vals[0] < 1e-10 * vals[m - 1].max(1e-300) {
            return Err(Error::Config(
                "orbitals within a spin block are (numerically) linearly dependent".into(),
            ));
        }
        // X = V diag(1/sqrt(s)) V^dagger; phi'_b = sum_a X_{ab} phi_a
        let mut x = vec![vec![Complex64::default(); m]; m];
        for a in 0..m {
            for b in 0..m {
                let mut acc = Complex64::default();
                for k in 0..m {
                    acc += vecs[a][k] * vecs[b][k].conj() / vals[k].sqrt();
                }
                x[a][b] = acc;
            }
        }
        let olds: Vec<ComplexField3D> = idx.iter().map(|&i| out[i].clone()).collect();
        for (bi, &i) in idx.iter().enumerate() {
            let mut f = ComplexField3D::zeros(olds[0].grid);
            for (ai, old) in olds.iter().enumerate() {
                f.axpy(x[ai][bi], old);
            }
            out[i] = f;
        }
    }
    Ok(out)
}

/// Fermionic combination of two determinant blocks with (numerically)
/// disjoint supports: the concatenated determinant. Errors if any cross
/// overlap exceeds 1e-8 in magnitude.
pub fn antisymmetrize_product(a: &AnsatzState, b: &AnsatzState) -> Result<AnsatzState> {
    let (oa, qa) = block_orbitals(a)?;
    let (ob, qb) = block_orbitals(b)?;
    if a.grid() != b.grid() {
        return Err(Error::Config("blocks live on different grids".into()));
    }
    for (i, fa) in oa.iter().enumerate() {
        for (j, fb) in ob.iter().enumerate() {
            let ov = fa.inner(fb).norm();
            if ov > 1e-8 {
                return Err(Error::Config(format!(
                    "cross overlap |<a_{i}, b_{j}>| = {ov:.3e} exceeds 1e-8; blocks are not disjoint"
                )));
            }
        }
    }
    let mut orbitals: Vec<ComplexField3D> = Vec::with_capacity(oa.len() + ob.len());
    orbitals.extend(oa.iter().cloned());
    orbitals.extend(ob.iter().cloned());
    AnsatzState::slater(orbitals, qa.max(qb).max(1))
}

fn block_orbitals(s: &AnsatzState) -> Result<(&[ComplexField3D], usize)> {
    match s {
        AnsatzState::Hartree { orbitals } => Ok((orbitals, 1)),
        AnsatzState::Slater { orbitals, q, .. } => Ok((orbitals, *q)),
        _ => Err(Error::Config(
            "antisymmetrized combinations require orbital-based blocks".into(),
        )),
    }
}
