//! Self-consistent minimization: linearize the attraction at a frozen density
//! sigma, minimize the resulting N-body operator within the ansatz family,
//! refresh sigma from the minimizer's density, repeat.
//!
//! The linearized operator is
//!
//!   H_sigma = sum_j (D_A^2 - alpha V_sigma)(x_j) + sum_{i<j} 1/|x_i - x_j|
//!             + alpha D(sigma, sigma),
//!
//! and the elementary gap identity
//!
//!   <Psi, H_sigma Psi> - E(Psi) = alpha D(sigma - rho_Psi, sigma - rho_Psi) >= 0
//!
//! makes the outer loop monotone at mixing 1: the inner stage is warm-started
//! from the previous iterate and only accepts non-increasing expectation
//! values, so E(Psi_{n+1}) <= <Psi_{n+1}, H_{rho_n} Psi_{n+1}> <=
//! <Psi_n, H_{rho_n} Psi_n> = E(Psi_n).

use num_complex::Complex64;

use crate::ansatz::{energy, validate_alpha, AnsatzState, PairFactor};
use crate::coulomb::CoulombSolver;
use crate::fft::Fft3D;
use crate::field::{ComplexField3D, ScalarField3D};
use crate::grid::{Grid3D, MagneticGauge};
use crate::kinetic::KineticOperator;
use crate::pair::PairMachine;
use crate::twobody::{TwoBodyMachine, TwoBodyState};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ScfConfig {
    pub alpha: f64,
    /// Density mixing weight in (0, 1]; 1 gives the monotone chain.
    pub mixing: f64,
    /// Outer stop: L1 norm of rho - sigma.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Inner stop: projected gradient norm relative to max(1, |E|).
    pub grad_tol: f64,
    pub max_inner: usize,
    /// Re-optimize pair factor parameters every this many accepted steps
    /// (0 freezes the factor).
    pub param_every: usize,
    pub seed: u64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            alpha: 0.5,
            mixing: 0.7,
            outer_tol: 1e-7,
            max_outer: 60,
            grad_tol: 1e-6,
            max_inner: 300,
            param_every: 40,
            seed: 1,
        }
    }
}

/// Frozen-density linearization of the functional.
pub struct EffectiveHamiltonian {
    pub gauge: MagneticGauge,
    pub sigma: ScalarField3D,
    pub v_sigma: ScalarField3D,
    /// D(sigma, sigma); the operator carries + alpha * offset.
    pub offset: f64,
    pub alpha: f64,
}

pub fn build_linearized(
    sigma: &ScalarField3D,
    alpha: f64,
    gauge: &MagneticGauge,
) -> Result<EffectiveHamiltonian> {
    validate_alpha(alpha)?;
    let mut sigma = sigma.clone();
    for v in sigma.values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::Config("sigma contains non-finite entries".into()));
        }
        if *v < 0.0 {
            if *v < -1e-10 {
                return Err(Error::Config(format!(
                    "sigma must be nonnegative; found {v}"
                )));
            }
            *v = 0.0;
        }
    }
    let solver = CoulombSolver::shared(sigma.grid);
    let v_sigma = solver.potential(&sigma);
    let offset = solver.pair_energy(&sigma, &sigma);
    Ok(EffectiveHamiltonian {
        gauge: *gauge,
        sigma,
        v_sigma,
        offset,
        alpha,
    })
}

/// <Psi, H_sigma Psi> for a normalized state.
pub fn expectation(h: &EffectiveHamiltonian, state: &AnsatzState) -> Result<f64> {
    match state {
        AnsatzState::Hartree { orbitals } => {
            Ok(orbital_expectation(h, orbitals, None))
        }
        AnsatzState::Slater { orbitals, spins, .. } => {
            Ok(orbital_expectation(h, orbitals, Some(spins)))
        }
        AnsatzState::Pair { orbital, factor } => {
            let machine = PairMachine::new(orbital.grid, h.gauge, factor.clone())?;
            Ok(machine.h_expectation(orbital, &h.v_sigma, h.alpha, h.offset))
        }
        AnsatzState::TwoBody(t) => {
            let machine = TwoBodyMachine::new(t.grid, h.gauge);
            Ok(machine.h_expectation(t, &h.v_sigma, h.alpha, h.offset))
        }
    }
}

fn orbital_expectation(
    h: &EffectiveHamiltonian,
    orbitals: &[ComplexField3D],
    spins: Option<&[usize]>,
) -> f64 {
    let grid = orbitals[0].grid;
    let op = KineticOperator::new(grid, h.gauge);
    let solver = CoulombSolver::shared(grid);
    let mut kin = 0.0;
    let mut vterm = 0.0;
    let dens: Vec<ScalarField3D> = orbitals.iter().map(|o| o.abs_sq()).collect();
    for (o, d) in orbitals.iter().zip(&dens) {
        kin += op.quadratic_form(o);
        vterm += d.dot(&h.v_sigma);
    }
    let mut rep = 0.0;
    for i in 0..orbitals.len() {
        for j in (i + 1)..orbitals.len() {
            rep += 2.0 * solver.pair_energy(&dens[i], &dens[j]);
            if let Some(sp) = spins {
                if sp[i] == sp[j] {
                    rep -= crate::ansatz::exchange_energy(&solver, &orbitals[i], &orbitals[j]);
                }
            }
        }
    }
    kin + rep - h.alpha * vterm + h.alpha * h.offset
}

/// Fourier-diagonal preconditioner: inverse of the fourth-order Laplacian
/// symbol plus a constant shift, applied on the (periodic) n-grid. Purely a
/// convergence accelerator; correctness rests on the monotone accept rule.
struct Preconditioner {
    fft: Fft3D,
    inv_symbol: Vec<f64>,
    grid: Grid3D,
}

impl Preconditioner {
    fn new(grid: Grid3D, shift: f64) -> Self {
        let n = grid.n;
        let h = grid.spacing;
        let t4 = |k: usize| -> f64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (30.0 - 32.0 * th.cos() + 2.0 * (2.0 * th).cos()) / (12.0 * h * h)
        };
        let tx: Vec<f64> = (0..n).map(t4).collect();
        let mut inv_symbol = vec![0.0; grid.len()];
        for kz in 0..n {
            for ky in 0..n {
                for kx in 0..n {
                    inv_symbol[kx + n * (ky + n * kz)] = 1.0 / (tx[kx] + tx[ky] + tx[kz] + shift);
                }
            }
        }
        Preconditioner {
            fft: Fft3D::new(n),
            inv_symbol,
            grid,
        }
    }

    fn apply(&self, r: &ComplexField3D) -> ComplexField3D {
        let mut buf = r.values.clone();
        self.fft.forward(&mut buf);
        for (v, s) in buf.iter_mut().zip(&self.inv_symbol) {
            *v *= *s;
        }
        self.fft.inverse(&mut buf);
        ComplexField3D {
            grid: self.grid,
            values: buf,
        }
    }
}

pub struct InnerReport {
    pub steps: usize,
    pub initial: f64,
    pub r#final: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Minimize <H_sigma> within the state's family, warm-starting from `state`.
/// The returned expectation never exceeds the starting one (up to 1e-12).
pub fn inner_minimize(
    h: &EffectiveHamiltonian,
    state: AnsatzState,
    cfg: &ScfConfig,
) -> Result<(AnsatzState, InnerReport)> {
    match state {
        AnsatzState::Hartree { orbitals } => {
            let (orbitals, rep) = inner_orbitals(h, orbitals, None, cfg)?;
            Ok((AnsatzState::Hartree { orbitals }, rep))
        }
        AnsatzState::Slater { orbitals, spins, q } => {
            let (orbitals, rep) = inner_orbitals(h, orbitals, Some((&spins, q)), cfg)?;
            Ok((AnsatzState::Slater { orbitals, spins, q }, rep))
        }
        AnsatzState::Pair { orbital, factor } => inner_pair(h, orbital, factor, cfg),
        AnsatzState::TwoBody(t) => inner_twobody(h, t, cfg),
    }
}

fn project_out(r: &mut ComplexField3D, basis: &[&ComplexField3D]) {
    for b in basis {
        let c = b.inner(r);
        r.axpy(-c, b);
    }
}

fn inner_orbitals(
    h: &EffectiveHamiltonian,
    mut orbitals: Vec<ComplexField3D>,
    spins: Option<(&[usize], usize)>,
    cfg: &ScfConfig,
) -> Result<(Vec<ComplexField3D>, InnerReport)> {
    let grid = orbitals[0].grid;
    let op = KineticOperator::new(grid, h.gauge);
    let solver = CoulombSolver::shared(grid);
    let precond = Preconditioner::new(grid, 1.0 + h.gauge.b_norm());
    let norb = orbitals.len();
    let mut e = orbital_expectation(h, &orbitals, spins.map(|s| s.0));
    let initial = e;
    let mut tau = 0.2;
    let mut steps = 0;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_inner {
        steps += 1;
        // gradients
        let dens: Vec<ScalarField3D> = orbitals.iter().map(|o| o.abs_sq()).collect();
        let mut rho_tot = ScalarField3D::zeros(grid);
        for d in &dens {
            rho_tot.axpy(1.0, d);
        }
        let v_tot = solver.potential(&rho_tot);
        let mut grads: Vec<ComplexField3D> = Vec::with_capacity(norb);
        for i in 0..norb {
            let mut g = op.apply(&orbitals[i]);
            let v_i = solver.potential(&dens[i]);
            for (gi, (o, ((vt, vi), vs))) in g.values.iter_mut().zip(
                orbitals[i]
                    .values
                    .iter()
                    .zip(v_tot.values.iter().zip(&v_i.values).zip(&h.v_sigma.values)),
            ) {
                *gi += o * (vt - vi - h.alpha * vs);
            }
            if let Some((sp, _)) = spins {
                for j in 0..norb {
                    if j != i && sp[j] == sp[i] {
                        let mut p = ComplexField3D::zeros(grid);
                        for k in 0..grid.len() {
                            p.values[k] = orbitals[j].values[k].conj() * orbitals[i].values[k];
                        }
                        let vp = solver.potential_complex(&p);
                        for k in 0..grid.len() {
                            g.values[k] -= orbitals[j].values[k] * vp.values[k];
                        }
                    }
                }
            }
            grads.push(g);
        }
        // project onto the tangent space (occupied block for same-spin
        // Slater orbitals, own direction for independent product orbitals)
        let mut gsq = 0.0;
        for i in 0..norb {
            let basis: Vec<&ComplexField3D> = match spins {
                Some((sp, _)) => (0..norb)
                    .filter(|&j| sp[j] == sp[i])
                    .map(|j| &orbitals[j])
                    .collect(),
                None => vec![&orbitals[i]],
            };
            project_out(&mut grads[i], &basis);
            gsq += grads[i].norm_sq();
        }
        grad_norm = gsq.sqrt();
        if grad_norm <= cfg.grad_tol * e.abs().max(1.0) {
            converged = true;
            break;
        }
        // preconditioned backtracking; fall back to the raw direction once
        let mut accepted = false;
        'dirs: for use_precond in [true, false] {
            let dirs: Vec<ComplexField3D> = if use_precond {
                grads.iter().map(|g| precond.apply(g)).collect()
            } else {
                grads.clone()
            };
            let mut t = tau;
            for _ in 0..30 {
                let mut cand: Vec<ComplexField3D> = orbitals.clone();
                for i in 0..norb {
                    cand[i].axpy(Complex64::new(-t, 0.0), &dirs[i]);
                }
                let cand = match spins {
                    Some((sp, q)) => match relabel_slater(cand, sp, q) {
                        Ok(c) => c,
                        Err(_) => {
                            t *= 0.5;
                            continue;
                        }
                    },
                    None => {
                        let mut c = cand;
                        let mut ok = true;
                        for f in c.iter_mut() {
                            if f.normalize().is_err() {
                                ok = false;
                                break;
                            }
                        }
                        if !ok {
                            t *= 0.5;
                            continue;
                        }
                        c
                    }
                };
                let e_new = orbital_expectation(h, &cand, spins.map(|s| s.0));
                if e_new <= e - 1e-14 * e.abs().max(1.0) {
                    orbitals = cand;
                    e = e_new;
                    tau = (t * 1.5).min(4.0);
                    accepted = true;
                    break 'dirs;
                }
                t *= 0.5;
                if t < 1e-14 {
                    break;
                }
            }
        }
        if !accepted {
            // stationary to line-search resolution
            converged = grad_norm <= 100.0 * cfg.grad_tol * e.abs().max(1.0);
            break;
        }
    }
    Ok((
        orbitals,
        InnerReport {
            steps,
            initial,
            r#final: e,
            grad_norm,
            converged,
        },
    ))
}

/// Rebuild a Slater orbital set (Loewdin within spin blocks) from raw fields.
fn relabel_slater(
    orbitals: Vec<ComplexField3D>,
    spins: &[usize],
    q: usize,
) -> Result<Vec<ComplexField3D>> {
    // round-trip through the constructor to reuse its orthonormalization
    let st = AnsatzState::slater(orbitals, q)?;
    match st {
        AnsatzState::Slater { orbitals, spins: sp2, .. } => {
            debug_assert_eq!(spins, sp2.as_slice());
            Ok(orbitals)
        }
        _ => unreachable!(),
    }
}

fn inner_pair(
    h: &EffectiveHamiltonian,
    mut phi: ComplexField3D,
    mut factor: PairFactor,
    cfg: &ScfConfig,
) -> Result<(AnsatzState, InnerReport)> {
    let grid = phi.grid;
    let precond = Preconditioner::new(grid, 1.0 + h.gauge.b_norm());
    let mut machine = PairMachine::new(grid, h.gauge, factor.clone())?;
    let mut e = machine.h_expectation(&phi, &h.v_sigma, h.alpha, h.offset);
    let initial = e;
    let mut tau = 0.2;
    let mut steps = 0;
    let mut accepted_steps = 0usize;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_inner {
        steps += 1;
        // periodic factor parameter refresh (Gaussian factors only)
        if cfg.param_every > 0 && accepted_steps % cfg.param_every == 0 {
            if let PairFactor::Gaussian { c, w } = factor {
                let (c2, w2, e2) = refine_factor(h, &phi, c, w, e)?;
                if e2 < e {
                    factor = PairFactor::Gaussian { c: c2, w: w2 };
                    machine = PairMachine::new(grid, h.gauge, factor.clone())?;
                    e = e2;
                }
            }
            accepted_steps += 1; // avoid re-running until the cadence wraps
        }
        let (_, mut grad) = machine.h_gradient(&phi, &h.v_sigma, h.alpha, h.offset);
        let basis = [&phi];
        project_out(&mut grad, &basis);
        grad_norm = grad.norm();
        if grad_norm <= cfg.grad_tol * e.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut accepted = false;
        'dirs: for use_precond in [true, false] {
            let dir = if use_precond {
                precond.apply(&grad)
            } else {
                grad.clone()
            };
            let mut t = tau;
            for _ in 0..30 {
                let mut cand = phi.clone();
                cand.axpy(Complex64::new(-t, 0.0), &dir);
                if cand.normalize().is_err() {
                    t *= 0.5;
                    continue;
                }
                let e_new = machine.h_expectation(&cand, &h.v_sigma, h.alpha, h.offset);
                if e_new <= e - 1e-14 * e.abs().max(1.0) {
                    phi = cand;
                    e = e_new;
                    tau = (t * 1.5).min(4.0);
                    accepted = true;
                    accepted_steps += 1;
                    break 'dirs;
                }
                t *= 0.5;
                if t < 1e-14 {
                    break;
                }
            }
        }
        if !accepted {
            converged = grad_norm <= 100.0 * cfg.grad_tol * e.abs().max(1.0);
            break;
        }
    }
    Ok((
        AnsatzState::Pair { orbital: phi, factor },
        InnerReport {
            steps,
            initial,
            r#final: e,
            grad_norm,
            converged,
        },
    ))
}

/// Coordinate refinement of the Gaussian factor parameters by golden-section
/// line searches on the linearized expectation.
fn refine_factor(
    h: &EffectiveHamiltonian,
    phi: &ComplexField3D,
    c0: f64,
    w0: f64,
    e0: f64,
) -> Result<(f64, f64, f64)> {
    let grid = phi.grid;
    let eval = |c: f64, w: f64| -> Result<f64> {
        let m = PairMachine::new(grid, h.gauge, PairFactor::Gaussian { c, w })?;
        Ok(m.h_expectation(phi, &h.v_sigma, h.alpha, h.offset))
    };
    let golden = |lo: f64,
                  hi: f64,
                  f: &dyn Fn(f64) -> Result<f64>|
     -> Result<(f64, f64)> {
        let phi_ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - phi_ratio * (b - a);
        let mut x2 = a + phi_ratio * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        for _ in 0..10 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi_ratio * (b - a);
                f1 = f(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi_ratio * (b - a);
                f2 = f(x2)?;
            }
        }
        if f1 <= f2 {
            Ok((x1, f1))
        } else {
            Ok((x2, f2))
        }
    };
    let w_lo = (0.75 * grid.spacing).max(w0 / 3.0);
    let w_hi = (grid.box_side() / 3.0).min(w0 * 3.0).max(w_lo * 1.01);
    let fc = |c: f64| eval(c, w0);
    let (c1, ec) = golden((c0 - 0.3).max(0.0), (c0 + 0.3).min(0.95), &fc)?;
    let (cbest, ebest_c) = if ec < e0 { (c1, ec) } else { (c0, e0) };
    let fw = |w: f64| eval(cbest, w);
    let (w1, ew) = golden(w_lo, w_hi, &fw)?;
    if ew < ebest_c {
        Ok((cbest, w1, ew))
    } else {
        Ok((cbest, w0, ebest_c))
    }
}

fn inner_twobody(
    h: &EffectiveHamiltonian,
    mut st: TwoBodyState,
    cfg: &ScfConfig,
) -> Result<(AnsatzState, InnerReport)> {
    let machine = TwoBodyMachine::new(st.grid, h.gauge);
    let h6 = st.grid.cell_volume().powi(2);
    let mut e = machine.h_expectation(&st, &h.v_sigma, h.alpha, h.offset);
    let initial = e;
    let mut tau = 0.1;
    let mut steps = 0;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_inner {
        steps += 1;
        let (_, mut grad) = machine.h_gradient(&st, &h.v_sigma, h.alpha, h.offset);
        // project out the state direction
        let mut overlap = Complex64::default();
        for (g, v) in grad.iter().zip(&st.values) {
            overlap += v.conj() * g;
        }
        overlap *= h6; // st is normalized
        for (g, v) in grad.iter_mut().zip(&st.values) {
            *g -= overlap * v;
        }
        grad_norm = (grad.iter().map(|g| g.norm_sqr()).sum::<f64>() * h6).sqrt();
        if grad_norm <= cfg.grad_tol * e.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut t = tau;
        for _ in 0..30 {
            let mut cand = st.clone();
            for (c, g) in cand.values.iter_mut().zip(&grad) {
                *c -= t * g;
            }
            if cand.normalize().is_err() {
                t *= 0.5;
                continue;
            }
            let e_new = machine.h_expectation(&cand, &h.v_sigma, h.alpha, h.offset);
            if e_new <= e - 1e-14 * e.abs().max(1.0) {
                st = cand;
                e = e_new;
                tau = (t * 1.5).min(1.0);
                accepted = true;
                break;
            }
            t *= 0.5;
            if t < 1e-15 {
                break;
            }
        }
        if !accepted {
            converged = grad_norm <= 100.0 * cfg.grad_tol * e.abs().max(1.0);
            break;
        }
    }
    Ok((
        AnsatzState::TwoBody(st),
        InnerReport {
            steps,
            initial,
            r#final: e,
            grad_norm,
            converged,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct ScfReport {
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub energy: f64,
    pub lambda: f64,
    pub el_residual: f64,
    /// alpha D(sigma - rho) at the final iterate (nonnegative diagnostic).
    pub final_gap: f64,
    pub outer_iterations: usize,
    pub inner_steps_total: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Run the full outer loop from a start state.
pub fn outer_scf(
    start: AnsatzState,
    cfg: &ScfConfig,
    gauge: &MagneticGauge,
) -> Result<(AnsatzState, ScfReport)> {
    validate_alpha(cfg.alpha)?;
    if !(cfg.mixing > 0.0 && cfg.mixing <= 1.0) {
        return Err(Error::Config(format!(
            "mixing must lie in (0, 1], got {}",
            cfg.mixing
        )));
    }
    let mut state = start;
    let mut energy_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut inner_steps_total = 0;
    let mut converged = false;
    let mut warnings = Vec::new();
    let mut sigma = state.density();
    let mut outer_iterations = 0;

    if cfg.alpha == 0.0 {
        // H does not depend on sigma: a single inner stage is the fixed point.
        let h = build_linearized(&sigma, 0.0, gauge)?;
        let (st, rep) = inner_minimize(&h, state, cfg)?;
        state = st;
        inner_steps_total = rep.steps;
        converged = rep.converged;
        outer_iterations = 1;
        let e = energy(&state, gauge, 0.0)?;
        energy_trace.push(e.total);
        residual_trace.push(0.0);
        warnings.extend(e.warnings);
    } else {
        for it in 0..cfg.max_outer {
            outer_iterations = it + 1;
            let h = build_linearized(&sigma, cfg.alpha, gauge)?;
            let (st, rep) = inner_minimize(&h, state, cfg)?;
            state = st;
            inner_steps_total += rep.steps;
            let e = energy(&state, gauge, cfg.alpha)?;
            energy_trace.push(e.total);
            warnings = e.warnings;
            let rho = state.density();
            let mut diff = rho.clone();
            diff.axpy(-1.0, &sigma);
            let residual = diff.l1_norm();
            residual_trace.push(residual);
            if residual < cfg.outer_tol {
                sigma = rho;
                converged = true;
                break;
            }
            sigma.scale(1.0 - cfg.mixing);
            sigma.axpy(cfg.mixing, &rho);
        }
    }

    let rho = state.density();
    let solver = CoulombSolver::shared(rho.grid);
    let mut diff = rho.clone();
    diff.axpy(-1.0, &sigma);
    let final_gap = cfg.alpha * solver.pair_energy(&diff, &diff);
    let (lambda, el_residual) = euler_lagrange_residual(&state, gauge, cfg.alpha)?;
    let energy = *energy_trace.last().unwrap();
    Ok((
        state,
        ScfReport {
            energy_trace,
            residual_trace,
            energy,
            lambda,
            el_residual,
            final_gap,
            outer_iterations,
            inner_steps_total,
            converged,
            warnings,
        },
    ))
}

/// Multiplier and stationarity residual at the state's own density.
/// lambda = E - alpha D(rho, rho); the residual is the tangent-projected
/// gradient norm of <H_rho> (plus |d E/d c| + |d E/d w| for the pair family).
pub fn euler_lagrange_residual(
    state: &AnsatzState,
    gauge: &MagneticGauge,
    alpha: f64,
) -> Result<(f64, f64)> {
    let rho = state.density();
    let h = build_linearized(&rho, alpha, gauge)?;
    let e = energy(state, gauge, alpha)?;
    let lambda = e.total - h.alpha * h.offset;
    let grid = state.grid();
    let residual = match state {
        AnsatzState::Hartree { orbitals } | AnsatzState::Slater { orbitals, .. } => {
            let spins = match state {
                AnsatzState::Slater { spins, .. } => Some(spins.as_slice()),
                _ => None,
            };
            let op = KineticOperator::new(grid, h.gauge);
            let solver = CoulombSolver::shared(grid);
            let dens: Vec<ScalarField3D> = orbitals.iter().map(|o| o.abs_sq()).collect();
            let mut rho_tot = ScalarField3D::zeros(grid);
            for d in &dens {
                rho_tot.axpy(1.0, d);
            }
            let v_tot = solver.potential(&rho_tot);
            let mut gsq = 0.0;
            for i in 0..orbitals.len() {
                let mut g = op.apply(&orbitals[i]);
                let v_i = solver.potential(&dens[i]);
                for (k, gi) in g.values.iter_mut().enumerate() {
                    *gi += orbitals[i].values[k]
                        * (v_tot.values[k] - v_i.values[k] - h.alpha * h.v_sigma.values[k]);
                }
                if let Some(sp) = spins {
                    for j in 0..orbitals.len() {
                        if j != i && sp[j] == sp[i] {
                            let mut p = ComplexField3D::zeros(grid);
                            for k in 0..grid.len() {
                                p.values[k] =
                                    orbitals[j].values[k].conj() * orbitals[i].values[k];
                            }
                            let vp = solver.potential_complex(&p);
                            for k in 0..grid.len() {
                                g.values[k] -= orbitals[j].values[k] * vp.values[k];
                            }
                        }
                    }
                }
                let basis: Vec<&ComplexField3D> = match spins {
                    Some(sp) => (0..orbitals.len())
                        .filter(|&j| sp[j] == sp[i])
                        .map(|j| &orbitals[j])
                        .collect(),
                    None => vec![&orbitals[i]],
                };
                project_out(&mut g, &basis);
                gsq += g.norm_sq();
            }
            gsq.sqrt()
        }
        AnsatzState::Pair { orbital, factor } => {
            let machine = PairMachine::new(grid, h.gauge, factor.clone())?;
            let (_, mut grad) = machine.h_gradient(orbital, &h.v_sigma, h.alpha, h.offset);
            let basis = [orbital];
            project_out(&mut grad, &basis);
            let mut r = grad.norm();
            if let PairFactor::Gaussian { c, w } = factor {
                // parameter stationarity by central differences of the energy
                let dc = 1e-4;
                let dw = 1e-4 * w;
                let ec = |cc: f64, ww: f64| -> Result<f64> {
                    let st = AnsatzState::Pair {
                        orbital: orbital.clone(),
                        factor: PairFactor::Gaussian { c: cc, w: ww },
                    };
                    Ok(energy(&st, gauge, alpha)?.total)
                };
                if *c > dc && *c < 1.0 - dc {
                    r += ((ec(c + dc, *w)? - ec(c - dc, *w)?) / (2.0 * dc)).abs();
                }
                r += ((ec(*c, w + dw)? - ec(*c, w - dw)?) / (2.0 * dw)).abs();
            }
            r
        }
        AnsatzState::TwoBody(t) => {
            let machine = TwoBodyMachine::new(t.grid, h.gauge);
            let (_, grad) = machine.h_gradient(t, &h.v_sigma, h.alpha, h.offset);
            let h6 = t.grid.cell_volume().powi(2);
            let mut overlap = Complex64::default();
            for (g, v) in grad.iter().zip(&t.values) {
                overlap += v.conj() * g;
            }
            overlap *= h6;
            let mut gsq = 0.0;
            for (g, v) in grad.iter().zip(&t.values) {
                gsq += (g - overlap * v).norm_sqr();
            }
            (gsq * h6).sqrt()
        }
    };
    Ok((lambda, residual))
}

/// Deterministic start states for the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartKind {
    Spread,
    Shifted,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Hartree,
    Slater,
    Pair,
    TwoBody,
}

impl FamilyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hartree" => Ok(FamilyKind::Hartree),
            "slater" => Ok(FamilyKind::Slater),
            "pair" => Ok(FamilyKind::Pair),
            "twobody" => Ok(FamilyKind::TwoBody),
            other => Err(Error::Config(format!(
                "unknown family '{other}' (expected hartree|slater|pair|twobody)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Hartree => "hartree",
            FamilyKind::Slater => "slater",
            FamilyKind::Pair => "pair",
            FamilyKind::TwoBody => "twobody",
        }
    }
}

fn start_orbital(
    grid: Grid3D,
    gauge: &MagneticGauge,
    center: [f64; 3],
    width: f64,
    seed: Option<u64>,
) -> ComplexField3D {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let b = gauge.b_norm();
    let w_perp = if b > 0.0 {
        width.min((2.0 / b).sqrt() * 1.5)
    } else {
        width
    };
    let mut modes: Vec<([f64; 3], Complex64)> = Vec::new();
    if let Some(s) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        for _ in 0..4 {
            modes.push((
                [
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ],
                Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)),
            ));
        }
    }
    let mut f = ComplexField3D::from_fn(grid, |p| {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        let dz = p[2] - center[2];
        let env = (-(dx * dx + dy * dy) / (2.0 * w_perp * w_perp)
            - dz * dz / (2.0 * width * width))
            .exp();
        let mut v = Complex64::new(1.0, 0.0);
        for (k, c) in &modes {
            v += c * Complex64::from_polar(1.0, k[0] * p[0] + k[1] * p[1] + k[2] * p[2]);
        }
        v * env
    });
    f.normalize().expect("gaussian start is nonzero");
    f
}

/// Build a start state for `family` with `n_particles` particles.
pub fn initial_state(
    family: FamilyKind,
    grid: Grid3D,
    gauge: &MagneticGauge,
    n_particles: usize,
    q: usize,
    kind: StartKind,
    seed: u64,
) -> Result<AnsatzState> {
    let side = grid.box_side();
    let width = side / 6.0;
    let centers: Vec<[f64; 3]> = match kind {
        StartKind::Spread | StartKind::Random => vec![[0.0, 0.0, 0.0]; n_particles],
        StartKind::Shifted => {
            let offs = [
                [-side / 8.0, 0.0, 0.0],
                [side / 8.0, 0.0, 0.0],
                [0.0, side / 8.0, 0.0],
                [0.0, -side / 8.0, 0.0],
                [0.0, 0.0, side / 8.0],
                [0.0, 0.0, -side / 8.0],
                [side / 8.0, side / 8.0, 0.0],
                [-side / 8.0, -side / 8.0, 0.0],
            ];
            (0..n_particles).map(|i| offs[i % offs.len()]).collect()
        }
    };
    let seed_of = |i: usize| match kind {
        StartKind::Random => Some(seed.wrapping_mul(2654435761).wrapping_add(i as u64)),
        _ => None,
    };
    match family {
        FamilyKind::Hartree => {
            let orbitals: Vec<ComplexField3D> = centers
                .iter()
                .enumerate()
                .map(|(i, &c)| start_orbital(grid, gauge, c, width, seed_of(i)))
                .collect();
            AnsatzState::hartree(orbitals)
        }
        FamilyKind::Slater => {
            // same-center starts would make spin blocks singular; spread them
            let centers = match kind {
                StartKind::Spread => (0..n_particles)
                    .map(|i| {
                        let t = i as f64 - (n_particles as f64 - 1.0) / 2.0;
                        [t * side / 10.0, 0.0, 0.0]
                    })
                    .collect(),
                _ => centers,
            };
            let orbitals: Vec<ComplexField3D> = centers
                .iter()
                .enumerate()
                .map(|(i, &c)| start_orbital(grid, gauge, c, width * (1.0 + 0.1 * i as f64), seed_of(i)))
                .collect();
            AnsatzState::slater(orbitals, q)
        }
        FamilyKind::Pair => {
            if n_particles != 2 {
                return Err(Error::Config(
                    "the pair family describes exactly 2 particles".into(),
                ));
            }
            let orbital = start_orbital(grid, gauge, [0.0, 0.0, 0.0], width, seed_of(0));
            AnsatzState::pair_correlated(
                orbital,
                PairFactor::Gaussian {
                    c: 0.3,
                    w: (side / 8.0).max(grid.spacing),
                },
            )
        }
        FamilyKind::TwoBody => {
            if n_particles != 2 {
                return Err(Error::Config(
                    "the two-body family describes exactly 2 particles".into(),
                ));
            }
            let orbital = start_orbital(grid, gauge, [0.0, 0.0, 0.0], width, seed_of(0));
            let st = TwoBodyState::from_pair(
                &orbital,
                &PairFactor::Gaussian {
                    c: 0.3,
                    w: (side / 8.0).max(grid.spacing),
                },
            )?;
            Ok(AnsatzState::TwoBody(st))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_state(grid: Grid3D, s: f64) -> AnsatzState {
        let mut f = ComplexField3D::from_fn(grid, |p| {
            Complex64::new(
                (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * s * s)).exp(),
                0.0,
            )
        });
        f.normalize().unwrap();
        AnsatzState::hartree(vec![f]).unwrap()
    }

    #[test]
    fn gap_identity_holds_for_arbitrary_sigma() {
        let grid = Grid3D::new(14, 0.9).unwrap();
        let gauge = MagneticGauge { b: [0.0, 0.0, 0.4] };
        let alpha = 0.7;
        let state = gaussian_state(grid, 1.4);
        let sigma = ScalarField3D::from_fn(grid, |p| {
            0.02 * (-(0.5 * p[0] * p[0] + p[1] * p[1] + 0.3 * p[2] * p[2])).exp()
        });
        let h = build_linearized(&sigma, alpha, &gauge).unwrap();
        let exp_h = expectation(&h, &state).unwrap();
        let e = energy(&state, &gauge, alpha).unwrap().total;
        let rho = state.density();
        let solver = CoulombSolver::shared(grid);
        let mut diff = h.sigma.clone();
        diff.axpy(-1.0, &rho);
        let gap = alpha * solver.pair_energy(&diff, &diff);
        assert!(gap >= 0.0);
        assert!(
            ((exp_h - e) - gap).abs() < 1e-10 * (1.0 + gap.abs()),
            "exp - E = {} vs gap {}",
            exp_h - e,
            gap
        );
    }

    #[test]
    fn expectation_at_own_density_equals_energy() {
        let grid = Grid3D::new(12, 1.0).unwrap();
        let gauge = MagneticGauge::zero();
        let alpha = 0.6;
        let state = gaussian_state(grid, 1.5);
        let rho = state.density();
        let h = build_linearized(&rho, alpha, &gauge).unwrap();
        let exp_h = expectation(&h, &state).unwrap();
        let e = energy(&state, &gauge, alpha).unwrap().total;
        assert!((exp_h - e).abs() < 1e-10 * (1.0 + e.abs()));
    }

    #[test]
    fn inner_stage_never_increases_the_expectation() {
        let grid = Grid3D::new(12, 1.0).unwrap();
        let gauge = MagneticGauge { b: [0.0, 0.0, 0.8] };
        let sigma = ScalarField3D::from_fn(grid, |p| {
            0.05 * (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 4.0).exp()
        });
        let h = build_linearized(&sigma, 0.5, &gauge).unwrap();
        let start = gaussian_state(grid, 2.5);
        let e0 = expectation(&h, &start).unwrap();
        let cfg = ScfConfig {
            max_inner: 40,
            ..ScfConfig::default()
        };
        let (_, rep) = inner_minimize(&h, start, &cfg).unwrap();
        assert!(rep.r#final <= e0 + 1e-12 * e0.abs().max(1.0));
        assert!(rep.r#final < e0, "should make progress from a bad start");
    }

    #[test]
    fn free_particle_inner_finds_box_ground_state() {
        // alpha = 0, B = 0: minimizing the kinetic form alone. The energy of
        // the relaxed state must drop below a crude variational envelope and
        // the projected gradient must be small.
        let grid = Grid3D::new(16, 1.0).unwrap();
        let gauge = MagneticGauge::zero();
        let cfg = ScfConfig {
            alpha: 0.0,
            grad_tol: 1e-9,
            max_inner: 500,
            ..ScfConfig::default()
        };
        let start = gaussian_state(grid, 2.0);
        let (state, report) = outer_scf(start, &cfg, &gauge).unwrap();
        // Dirichlet box of side 16: continuum ground energy 3 (pi/L)^2 with
        // L ~ box side; the discrete value sits nearby.
        let expect = 3.0 * (std::f64::consts::PI / grid.box_side()).powi(2);
        assert!(
            (report.energy - expect).abs() < 0.15 * expect,
            "E = {} vs box estimate {}",
            report.energy,
            expect
        );
        let (_, res) = euler_lagrange_residual(&state, &gauge, 0.0).unwrap();
        assert!(res < 1e-6, "EL residual {res}");
    }

    #[test]
    fn outer_scf_is_monotone_at_full_mixing() {
        let grid = Grid3D::new(16, 1.1).unwrap();
        let gauge = MagneticGauge::zero();
        let cfg = ScfConfig {
            alpha: 0.9,
            mixing: 1.0,
            outer_tol: 1e-9,
            max_outer: 25,
            grad_tol: 1e-7,
            max_inner: 120,
            ..ScfConfig::default()
        };
        let start = gaussian_state(grid, 2.2);
        let (_, report) = outer_scf(start, &cfg, &gauge).unwrap();
        for w in report.energy_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "trace must not increase: {:?}",
                report.energy_trace
            );
        }
        assert!(report.final_gap >= -1e-12);
    }
}
