//! Acceptance suite: one test per numbered criterion. Every test prints a
//! single `[criterion NN] PASS|FAIL — detail` line with the measured numbers
//! before asserting, so the test log doubles as the acceptance report.
//!
//! The expensive zero-field alpha = 1 ground solve is shared between the
//! scaling, multipole, dipole, and decay criteria through a `OnceLock`; on a
//! single-threaded run the scaling test (which sorts first) pays for it.

use num_complex::Complex64;
use pekarlab::ansatz::{energy, AnsatzState};
use pekarlab::asymptotics::{
    dipole_l, dipole_l_monte_carlo, dipole_l_value, direction_sample, exact_potential, far_field,
    interaction_norm_scan, kernel_expansion, l_direction_floor, recenter, smooth_cutoff,
    CutoffState, MPolicy,
};
use pekarlab::binding::{
    alpha_scan, decay_fit, energy_table, solve_ground, spherical_shells, SolveSpec,
};
use pekarlab::config::{Overrides, RunConfig, TaskKind};
use pekarlab::coulomb;
use pekarlab::field::{ComplexField3D, ScalarField3D};
use pekarlab::grid::{Grid3D, MagneticGauge};
use pekarlab::ims::{build_pair, continuum_localization, ims_identity_check, ProductPartition};
use pekarlab::radial::radial_ground_state;
use pekarlab::scf::{
    build_linearized, expectation, initial_state, outer_scf, FamilyKind, ScfConfig, StartKind,
};
use pekarlab::tasks;
use pekarlab::twobody::TwoBodyState;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fs;
use std::sync::OnceLock;
use std::time::Instant;

/// Grid for the scaling / oracle-match criteria and every criterion that
/// reuses their alpha = 1 minimizer. Box side 57.6 keeps the slowly decaying
/// small-alpha minimizers clear of the walls; spacing 0.9 keeps the
/// discretization error of the alpha = 1 energy well under the 1% window.
const SCALE_N: usize = 64;
const SCALE_H: f64 = 0.9;

/// Printed before the assert so each criterion contributes exactly one
/// PASS/FAIL line to the log, with its measured numbers.
fn verdict(num: u32, pass: bool, detail: &str) -> bool {
    println!(
        "[criterion {num:02}] {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

struct SharedGround {
    grid: Grid3D,
    state: AnsatzState,
    energy: f64,
    oracle_e1: f64,
}

static GROUND: OnceLock<SharedGround> = OnceLock::new();

/// Normalized centered Gaussian single-particle start of width `w`. A start
/// already at the physical size of the minimizer keeps the large-grid solves
/// affordable; the monotone descent from it is a full solver run, so nothing
/// about the converged answer depends on this choice.
fn gaussian_start(grid: Grid3D, w: f64) -> AnsatzState {
    let orb = ComplexField3D::from_fn(grid, |p| {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        Complex64::new((-r2 / (2.0 * w * w)).exp(), 0.0)
    });
    AnsatzState::hartree(vec![orb]).expect("gaussian start")
}

/// Zero-field N = 1 ground state at alpha = 1 on the scaling grid, plus the
/// independent radial-relaxation reference energy.
fn ground() -> &'static SharedGround {
    GROUND.get_or_init(|| {
        let oracle = radial_ground_state(1.0, 90.0, 18000).expect("radial oracle");
        let grid = Grid3D::new(SCALE_N, SCALE_H).expect("grid");
        let gauge = MagneticGauge::zero();
        let cfg = ScfConfig {
            alpha: 1.0,
            mixing: 1.0,
            outer_tol: 1e-8,
            max_outer: 40,
            grad_tol: 1e-6,
            max_inner: 900,
            seed: 1,
            ..ScfConfig::default()
        };
        let (state, rep) =
            outer_scf(gaussian_start(grid, 3.2), &cfg, &gauge).expect("alpha = 1 solve");
        assert!(rep.converged, "shared alpha = 1 ground solve must converge");
        SharedGround {
            grid,
            state,
            energy: rep.energy,
            oracle_e1: oracle.energy,
        }
    })
}

static BLOCK: OnceLock<CutoffState> = OnceLock::new();

/// Smoothly cut, recentered one-particle block built from the shared ground
/// state. The cutoff radius is the smallest value past 4x the half-mass
/// radius that the cutoff accepts (discarded tail below its cap).
fn block() -> &'static CutoffState {
    BLOCK.get_or_init(|| {
        let g = ground();
        let rho = g.state.density();
        let r_half = half_mass_radius(&rho);
        let mut r = 4.05 * r_half;
        loop {
            assert!(
                r < g.grid.half_side() - 3.0,
                "cutoff radius search ran out of box"
            );
            match smooth_cutoff(&g.state, r) {
                Ok(c) => {
                    return recenter(&c, &MagneticGauge::zero()).expect("recenter");
                }
                Err(_) => r += 0.5,
            }
        }
    })
}

fn half_mass_radius(rho: &ScalarField3D) -> f64 {
    let shells = spherical_shells(rho);
    let total: f64 = shells.iter().map(|s| s.mass).sum();
    let mut acc = 0.0;
    for s in &shells {
        acc += s.mass;
        if acc >= 0.5 * total {
            return s.r;
        }
    }
    shells.last().map(|s| s.r).unwrap_or(0.0)
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        ];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

// ---------------------------------------------------------------------------
// 1. Lowest Landau level: N = 1, alpha = 0, B = (0,0,1), 48^3 grid of box
//    side 16. The converged energy must sit within 2% of 1.0 in under five
//    minutes single-threaded.
// ---------------------------------------------------------------------------
#[test]
fn criterion_01_landau_level() {
    let n = 48;
    let h = 16.0 / 48.0;
    let grid = Grid3D::new(n, h).unwrap();
    let gauge = MagneticGauge::new([0.0, 0.0, 1.0]);
    let cfg = ScfConfig {
        alpha: 0.0,
        mixing: 1.0,
        outer_tol: 1e-8,
        max_outer: 2,
        grad_tol: 2e-5,
        max_inner: 2000,
        seed: 1,
        ..ScfConfig::default()
    };
    let start = initial_state(FamilyKind::Hartree, grid, &gauge, 1, 2, StartKind::Spread, 1)
        .expect("start state");
    let t0 = Instant::now();
    let (_, rep) = outer_scf(start, &cfg, &gauge).expect("landau solve");
    let dt = t0.elapsed().as_secs_f64();
    let e = rep.energy;
    // The hard-wall box adds a z-direction zero point of (pi/L)^2 on top of
    // the transverse Landau energy; printed so the decomposition is visible.
    let zp = (PI / 16.0) * (PI / 16.0);
    println!(
        "criterion 01 detail: E = {e:.10}, E - (pi/L)^2 = {:.10}, residual = {:.3e}, \
         converged = {}, {} inner steps, {:.1} s",
        e - zp,
        rep.el_residual,
        rep.converged,
        rep.inner_steps_total,
        dt
    );
    let pass = rep.converged && (e - 1.0).abs() <= 0.02 && dt < 300.0;
    let ok = verdict(
        1,
        pass,
        &format!(
            "E = {e:.8} (target 1.0 within 2%), converged = {}, runtime {dt:.0} s (cap 300 s)",
            rep.converged
        ),
    );
    assert!(ok, "criterion 1 failed");
}

// ---------------------------------------------------------------------------
// 2. Zero-field scaling: E(alpha)/alpha^2 constant to 1% over
//    alpha in {0.6, 0.8, 1.0}.
// 3. The alpha = 1 grid energy matches the independent radial-relaxation
//    oracle within 1%.
// ---------------------------------------------------------------------------
#[test]
fn criterion_02_03_scaling_and_oracle_match() {
    let g = ground();
    let gauge = MagneticGauge::zero();
    let mut ratios = vec![g.energy];
    println!(
        "criterion 02 detail: alpha = 1.0, E = {:.10}, E/alpha^2 = {:.10}",
        g.energy, g.energy
    );
    let mut warm = g.state.clone();
    for &alpha in &[0.8f64, 0.6] {
        let cfg = ScfConfig {
            alpha,
            mixing: 1.0,
            outer_tol: 1e-8,
            max_outer: 40,
            grad_tol: 1e-6,
            max_inner: 900,
            seed: 1,
            ..ScfConfig::default()
        };
        let (state, rep) = outer_scf(warm, &cfg, &gauge).expect("scaling solve");
        assert!(rep.converged, "scaling solve at alpha = {alpha} converged");
        let ratio = rep.energy / (alpha * alpha);
        println!(
            "criterion 02 detail: alpha = {alpha}, E = {:.10}, E/alpha^2 = {ratio:.10}",
            rep.energy
        );
        ratios.push(ratio);
        warm = state;
    }
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = (hi - lo) / mean.abs();
    let ok2 = verdict(
        2,
        spread <= 0.01,
        &format!("E/alpha^2 over alpha in {{0.6, 0.8, 1.0}}: relative spread {spread:.3e} (tol 1e-2)"),
    );
    let dev = (g.energy - g.oracle_e1) / g.oracle_e1.abs();
    let ok3 = verdict(
        3,
        dev.abs() <= 0.01,
        &format!(
            "grid E(1) = {:.9} vs radial oracle {:.9}: relative deviation {dev:+.3e} (tol 1e-2)",
            g.energy, g.oracle_e1
        ),
    );
    assert!(ok2 && ok3, "criterion 2/3 failed");
}

// ---------------------------------------------------------------------------
// 4. Linearization gap identity: for random (sigma, Psi),
//    <Psi, H_sigma Psi> - E(Psi) = alpha D(sigma - rho_Psi) to 1e-10
//    relative, and the gap is never negative.
// ---------------------------------------------------------------------------
#[test]
fn criterion_04_linearization_gap_identity() {
    let grid = Grid3D::new(12, 1.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_rel = 0.0f64;
    let mut min_gap = f64::INFINITY;
    for trial in 0..100 {
        let alpha = [0.3f64, 0.5, 0.9][trial % 3];
        let bz = [0.0f64, 0.7][trial % 2];
        let gauge = MagneticGauge::new([0.0, 0.0, bz]);
        let n_part = 1 + trial % 2;
        let smooth = trial % 4 >= 2;
        let mut orbitals = Vec::new();
        for _ in 0..n_part {
            let (cx, cy, cz) = (
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
                rng.gen::<f64>() * 4.0 - 2.0,
            );
            let w = 1.0 + rng.gen::<f64>() * 2.0;
            let k = rng.gen::<f64>() - 0.5;
            let field = ComplexField3D::from_fn(grid, |p| {
                if smooth {
                    let d2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2) + (p[2] - cz).powi(2);
                    Complex64::from_polar((-d2 / (2.0 * w * w)).exp(), k * p[0])
                } else {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                }
            });
            orbitals.push(field);
        }
        let state = AnsatzState::hartree(orbitals).expect("random state");
        // Nonnegative random source density with mass in [0.5, 1.5].
        let mut sigma = ScalarField3D::from_fn(grid, |_| {
            let v = rng.gen::<f64>() - 0.2;
            v * v
        });
        let mass = sigma.integral();
        sigma.scale((0.5 + rng.gen::<f64>()) / mass);

        let h = build_linearized(&sigma, alpha, &gauge).expect("linearized operator");
        let lhs = expectation(&h, &state).expect("expectation")
            - energy(&state, &gauge, alpha).expect("energy").total;
        let rho = state.density();
        let mut delta = sigma.clone();
        delta.axpy(-1.0, &rho);
        let rhs = alpha * coulomb::pair_energy(&delta, &delta).expect("pair energy");
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        max_rel = max_rel.max((lhs - rhs).abs() / scale);
        min_gap = min_gap.min(lhs.min(rhs));
    }
    let ok = verdict(
        4,
        max_rel <= 1e-10 && min_gap >= 0.0,
        &format!(
            "100 random (sigma, Psi): max relative identity error {max_rel:.3e} (tol 1e-10), \
             min gap {min_gap:.3e} (must stay >= 0)"
        ),
    );
    assert!(ok, "criterion 4 failed");
}

// ---------------------------------------------------------------------------
// 5. Outer-loop monotonicity at mixing = 1: no energy increment beyond
//    1e-10 in 20/20 randomized runs.
// ---------------------------------------------------------------------------
#[test]
fn criterion_05_scf_monotone_at_full_mixing() {
    let grid = Grid3D::new(10, 1.2).unwrap();
    let mut worst_increment = f64::NEG_INFINITY;
    let mut clean_runs = 0;
    for r in 0..20u64 {
        let bz = if r % 4 >= 2 { 0.5 } else { 0.0 };
        let gauge = MagneticGauge::new([0.0, 0.0, bz]);
        let n_part = 1 + (r % 2) as usize;
        let family = if n_part == 1 {
            FamilyKind::Hartree
        } else {
            FamilyKind::Pair
        };
        let cfg = ScfConfig {
            alpha: 0.8,
            mixing: 1.0,
            outer_tol: 1e-9,
            max_outer: 12,
            grad_tol: 1e-7,
            max_inner: 80,
            seed: 1000 + r,
            ..ScfConfig::default()
        };
        let start = initial_state(family, grid, &gauge, n_part, 2, StartKind::Random, 1000 + r)
            .expect("random start");
        let (_, rep) = outer_scf(start, &cfg, &gauge).expect("outer scf");
        let mut max_inc = f64::NEG_INFINITY;
        for w in rep.energy_trace.windows(2) {
            max_inc = max_inc.max(w[1] - w[0]);
        }
        if max_inc <= 1e-10 {
            clean_runs += 1;
        }
        worst_increment = worst_increment.max(max_inc);
    }
    let ok = verdict(
        5,
        clean_runs == 20,
        &format!(
            "{clean_runs}/20 randomized runs monotone at mixing = 1; worst outer increment \
             {worst_increment:.3e} (tol 1e-10)"
        ),
    );
    assert!(ok, "criterion 5 failed");
}

// ---------------------------------------------------------------------------
// 6. Magnetic binding below the Landau sum: alpha = 0.5, Bz = 1 gives
//    E^1 < 1 and E^2 < 2, each by more than 3x the solver tolerance.
// ---------------------------------------------------------------------------
#[test]
fn criterion_06_below_landau_sum() {
    let grid = Grid3D::new(28, 0.7).unwrap();
    let gauge = MagneticGauge::new([0.0, 0.0, 1.0]);
    let tol = 1e-3;
    let cfg = ScfConfig {
        alpha: 0.5,
        mixing: 1.0,
        outer_tol: 1e-8,
        max_outer: 50,
        grad_tol: 2e-5,
        max_inner: 2500,
        seed: 7,
        ..ScfConfig::default()
    };
    let mut spec = SolveSpec::new(
        grid,
        gauge,
        vec![FamilyKind::Hartree, FamilyKind::Pair],
        cfg,
    );
    spec.energy_tol = tol;
    spec.starts = vec![StartKind::Spread, StartKind::Shifted];
    let table = energy_table(2, &spec, None).expect("energy table");
    let (e1, e2) = (table.energies[0], table.energies[1]);
    let pass = e1 < 1.0 - 3.0 * tol && e2 < 2.0 - 3.0 * tol && table.reliable();
    let ok = verdict(
        6,
        pass,
        &format!(
            "E1 = {e1:.6} (need < {:.4}), E2 = {e2:.6} (need < {:.4}), all solves converged = {}",
            1.0 - 3.0 * tol,
            2.0 - 3.0 * tol,
            table.reliable()
        ),
    );
    assert!(ok, "criterion 6 failed");
}

// ---------------------------------------------------------------------------
// 7. Coupling scan of E^1 and E^2: no positive second difference beyond
//    1e-6 x scale in either sector, and E^2 <= 2 E^1 + 2 tol everywhere.
// ---------------------------------------------------------------------------
#[test]
fn criterion_07_alpha_scan_concavity_and_subadditivity() {
    let grid = Grid3D::new(40, 1.05).unwrap();
    let gauge = MagneticGauge::zero();
    let tol = 1e-3;
    let cfg = ScfConfig {
        alpha: 1.0,
        mixing: 1.0,
        outer_tol: 1e-8,
        max_outer: 40,
        grad_tol: 1e-6,
        max_inner: 500,
        seed: 3,
        ..ScfConfig::default()
    };
    let mut spec = SolveSpec::new(
        grid,
        gauge,
        vec![FamilyKind::Hartree, FamilyKind::Pair],
        cfg,
    );
    spec.energy_tol = tol;
    spec.starts = vec![StartKind::Spread, StartKind::Shifted];
    let alphas = [0.90f64, 0.925, 0.95, 0.975, 1.0];
    let scan = alpha_scan(2, &spec, &alphas).expect("alpha scan");

    let mut worst_second_diff = f64::NEG_INFINITY;
    for sector in 0..2 {
        let e: Vec<f64> = scan.points.iter().map(|p| p.energies[sector]).collect();
        let scale = e.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
        for w in e.windows(3) {
            let d2 = (w[2] - 2.0 * w[1] + w[0]) / (1e-6 * scale);
            worst_second_diff = worst_second_diff.max(d2);
        }
    }
    let mut worst_sub = f64::NEG_INFINITY;
    for p in &scan.points {
        worst_sub = worst_sub.max(p.energies[1] - 2.0 * p.energies[0] - 2.0 * tol);
        println!(
            "criterion 07 detail: alpha = {:.3}, E1 = {:.8}, E2 = {:.8}, E2 - 2 E1 = {:+.3e}",
            p.alpha,
            p.energies[0],
            p.energies[1],
            p.energies[1] - 2.0 * p.energies[0]
        );
    }
    let reliable = scan
        .points
        .iter()
        .all(|p| p.converged.iter().all(|&c| c));
    let pass = scan.concavity_violations == 0
        && worst_second_diff <= 1.0
        && worst_sub <= 0.0
        && reliable;
    let ok = verdict(
        7,
        pass,
        &format!(
            "concavity violations = {}, worst second difference = {worst_second_diff:.3}x the \
             1e-6 scale allowance, worst E2 - 2 E1 - 2 tol = {worst_sub:+.3e}, converged = {reliable}",
            scan.concavity_violations
        ),
    );
    assert!(ok, "criterion 7 failed");
}

// ---------------------------------------------------------------------------
// 8. Pair correlation gain at alpha = 0.9, B = 0: the pair-correlated state
//    beats the best product state by more than 3x the solver tolerance, the
//    ordering is confirmed by the full two-body solver on a 12^3 grid, and
//    the product pair term (1 - alpha) 2 D(rho_u, rho_v) is nonnegative.
// ---------------------------------------------------------------------------
#[test]
fn criterion_08_pair_correlation_gain() {
    let alpha = 0.9;
    let tol = 1e-4;
    let gauge = MagneticGauge::zero();
    let cfg = ScfConfig {
        alpha,
        mixing: 1.0,
        outer_tol: 1e-9,
        max_outer: 60,
        grad_tol: 1e-6,
        max_inner: 900,
        seed: 5,
        ..ScfConfig::default()
    };

    // Main grid: best product (independent orbitals) vs pair-correlated.
    let grid = Grid3D::new(24, 1.1).unwrap();
    let mut spec_prod = SolveSpec::new(
        grid,
        gauge,
        vec![FamilyKind::Hartree, FamilyKind::Hartree],
        cfg.clone(),
    );
    spec_prod.energy_tol = tol;
    let (state_prod, rep_prod) = solve_ground(2, &spec_prod, None).expect("product solve");
    let mut spec_pair = spec_prod.clone();
    spec_pair.families = vec![FamilyKind::Hartree, FamilyKind::Pair];
    let (_, rep_pair) = solve_ground(2, &spec_pair, None).expect("pair solve");
    let gain = rep_prod.energy - rep_pair.energy;

    // Pair term of the product state.
    let orbs = state_prod.orbitals().expect("product orbitals");
    let cross = (1.0 - alpha)
        * 2.0
        * coulomb::pair_energy(&orbs[0].abs_sq(), &orbs[1].abs_sq()).expect("cross term");

    // 12^3 full two-body reference, warm-started from the embedded pair
    // minimizer so the ordering E_full <= E_pair is structural.
    let grid_o = Grid3D::new(12, 1.6).unwrap();
    let cfg_o = ScfConfig {
        max_inner: 400,
        ..cfg.clone()
    };
    let mut spec_prod_o = SolveSpec::new(
        grid_o,
        gauge,
        vec![FamilyKind::Hartree, FamilyKind::Hartree],
        cfg_o.clone(),
    );
    spec_prod_o.energy_tol = tol;
    let (_, rep_prod_o) = solve_ground(2, &spec_prod_o, None).expect("product oracle solve");
    let mut spec_pair_o = spec_prod_o.clone();
    spec_pair_o.families = vec![FamilyKind::Hartree, FamilyKind::Pair];
    let (state_pair_o, rep_pair_o) = solve_ground(2, &spec_pair_o, None).expect("pair oracle solve");
    let warm_full = match &state_pair_o {
        AnsatzState::Pair { orbital, factor } => {
            AnsatzState::two_body(TwoBodyState::from_pair(orbital, factor).expect("embedding"))
        }
        _ => unreachable!("pair solve returns a pair state"),
    };
    let cfg_full = ScfConfig {
        grad_tol: 1e-5,
        max_inner: 120,
        max_outer: 12,
        ..cfg
    };
    let mut spec_full = SolveSpec::new(
        grid_o,
        gauge,
        vec![FamilyKind::Hartree, FamilyKind::TwoBody],
        cfg_full,
    );
    spec_full.energy_tol = tol;
    let (_, rep_full) = solve_ground(2, &spec_full, Some(&warm_full)).expect("full oracle solve");
    let ordering = rep_full.energy <= rep_pair_o.energy + 1e-9
        && rep_pair_o.energy < rep_prod_o.energy - 3.0 * tol;
    println!(
        "criterion 08 detail: 24^3 E_product = {:.8}, E_pair = {:.8}; 12^3 E_product = {:.8}, \
         E_pair = {:.8}, E_full = {:.8}",
        rep_prod.energy, rep_pair.energy, rep_prod_o.energy, rep_pair_o.energy, rep_full.energy
    );
    let pass = gain > 3.0 * tol && cross >= 0.0 && ordering;
    let ok = verdict(
        8,
        pass,
        &format!(
            "correlation gain = {gain:.3e} (need > {:.1e}), product pair term = {cross:.3e} \
             (>= 0), full-solver ordering on 12^3 holds = {ordering}",
            3.0 * tol
        ),
    );
    assert!(ok, "criterion 8 failed");
}

// ---------------------------------------------------------------------------
// 9. Multipole machinery: kernel remainder within the calibrated cubic bound
//    on a 1000-point sample, far-field error falling like |y|^-4 across
//    doublings in 26 directions, and the interaction norm scan matching the
//    dipole-functional prediction in slope and amplitude. Under ten minutes.
// ---------------------------------------------------------------------------
#[test]
fn criterion_09_multipole_and_far_field() {
    let c = block();
    let t0 = Instant::now();

    // (a) kernel remainder bound on a 1000-point random sample.
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_util = 0.0f64;
    for _ in 0..1000 {
        let ya = 10f64.powf(rng.gen_range(0.3..1.3));
        let ratio = rng.gen_range(0.02..0.5);
        let yd = random_unit(&mut rng);
        let wd = random_unit(&mut rng);
        let y = [ya * yd[0], ya * yd[1], ya * yd[2]];
        let wa = ratio * ya;
        let w = [wa * wd[0], wa * wd[1], wa * wd[2]];
        let ke = kernel_expansion(w, y).expect("kernel expansion");
        assert!(ke.checked, "sample stays in the certified regime");
        worst_util = worst_util.max(ke.remainder.abs() / ke.bound);
    }
    let kernel_ok = worst_util <= 1.0;

    // (b) far-field error decay: err x R^4 bounded across two doublings in
    // every sampled direction.
    let d = c.mass_radius(0.75);
    let z = [0.25 * d, -0.15 * d, 0.2 * d];
    let r0 = 3.0 * c.r;
    let mut worst_doubling = 0.0f64;
    let mut worst_err_r4 = 0.0f64;
    for dir in direction_sample() {
        let mut scaled = Vec::new();
        for k in 0..3 {
            let ra = r0 * (1 << k) as f64;
            let y = [ra * dir[0], ra * dir[1], ra * dir[2]];
            let approx = far_field(c, y, z).expect("far field");
            let exact = exact_potential(c, [z[0] - y[0], z[1] - y[1], z[2] - y[2]]);
            scaled.push((approx - exact).abs() * ra.powi(4));
        }
        for w in scaled.windows(2) {
            if w[0] > 1e-12 {
                worst_doubling = worst_doubling.max(w[1] / w[0]);
            }
        }
        worst_err_r4 = worst_err_r4.max(scaled[0].max(scaled[1]).max(scaled[2]));
    }
    let far_ok = worst_doubling <= 3.0;

    // (c) interaction norm scan against the dipole functional.
    let radii = [c.r, 2.0 * c.r, 4.0 * c.r];
    let scan =
        interaction_norm_scan(c, c, &radii, MPolicy::PerROptimal).expect("norm scan");
    let slope_ok = (-3.3..=-2.7).contains(&scan.slope);
    let ratio_ok = (0.8..=1.2).contains(&scan.ratio_at_largest);

    let dt = t0.elapsed().as_secs_f64();
    let pass = kernel_ok && far_ok && slope_ok && ratio_ok && dt < 600.0;
    let ok = verdict(
        9,
        pass,
        &format!(
            "kernel remainder <= bound on 1000 samples (worst utilization {worst_util:.3}), \
             far-field err x R^4 worst doubling ratio {worst_doubling:.2} (cap 3, worst level \
             {worst_err_r4:.2e}), norm-scan slope {:.3} (band [-3.3, -2.7]), amplitude ratio \
             {:.3} (band [0.8, 1.2]), runtime {dt:.0} s (cap 600 s)",
            scan.slope, scan.ratio_at_largest
        ),
    );
    assert!(ok, "criterion 9 failed");
}

// ---------------------------------------------------------------------------
// 10. Dipole functional: the closed-form minimum over D agrees with a
//     10^6-sample Monte Carlo estimate within 3 sigma, and the minimum stays
//     strictly positive over the 26-direction sample.
// ---------------------------------------------------------------------------
#[test]
fn criterion_10_dipole_functional_floor() {
    let c = block();
    let d = c.mass_radius(0.75);
    let y_hat = [0.0, 0.0, 1.0];
    let r = dipole_l(c, c, y_hat, d).expect("dipole functional");
    let exact = dipole_l_value(c, c, y_hat, d, r.d_opt).expect("closed form at the minimum");
    let (mc, se) = dipole_l_monte_carlo(c, c, y_hat, d, r.d_opt, 1_000_000, 1010)
        .expect("monte carlo estimate");
    let dev = (mc - exact).abs();
    let mc_ok = dev <= 3.0 * se.max(1e-15);
    let floor = l_direction_floor(c, c, d).expect("direction floor");
    let pass = mc_ok && floor > 0.0;
    let ok = verdict(
        10,
        pass,
        &format!(
            "closed-form L_min = {exact:.6e}, MC = {mc:.6e} +/- {se:.1e} (|diff| = {dev:.2e}, \
             3 sigma = {:.2e}), 26-direction floor = {floor:.3e} (> 0)",
            3.0 * se
        ),
    );
    assert!(ok, "criterion 10 failed");
}

// ---------------------------------------------------------------------------
// 11. Partition of unity and the localization identity: pointwise identity at
//     1e-12, gradient bound 1.05 epsilon, identity residual at 1e-8 relative
//     on three resolutions, and the localization defect against the continuum
//     weight integral shrinking like the fourth power of the spacing.
// ---------------------------------------------------------------------------
#[test]
fn criterion_11_partition_and_localization_identity() {
    let eps = 0.5;
    let r_eps = 2.0;
    let alpha = 0.7;
    let box_side = 19.2;
    let gauge = MagneticGauge::zero();
    let mut pointwise_worst = 0.0f64;
    let mut dsup_worst = 0.0f64;
    let mut rel_resid_worst = 0.0f64;
    let mut defects = Vec::new();
    let mut spacings = Vec::new();
    for &n in &[24usize, 32, 48] {
        let h = box_side / n as f64;
        let grid = Grid3D::new(n, h).unwrap();
        let pair = build_pair(eps, r_eps, grid).expect("partition pair");
        let mut pw = 0.0f64;
        for (a, b) in pair.j1.values.iter().zip(pair.j2.values.iter()) {
            pw = pw.max((a * a + b * b - 1.0).abs());
        }
        let dsup = pair.derivative_sup;
        pointwise_worst = pointwise_worst.max(pw);
        dsup_worst = dsup_worst.max(dsup);

        // Broad two-particle condensate spanning the transition ramp.
        let w = 4.0;
        let orb = ComplexField3D::from_fn(grid, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            Complex64::new((-r2 / (2.0 * w * w)).exp(), 0.0)
        });
        let state = AnsatzState::hartree(vec![orb.clone(), orb]).expect("state");
        let rho = state.density();
        let h_eff = build_linearized(&rho, alpha, &gauge).expect("operator");
        let partition = ProductPartition::new(pair, 2).expect("product partition");
        let rep = ims_identity_check(&h_eff, &state, &partition).expect("identity check");
        let rel = rep.residual / rep.expectation.abs().max(1.0);
        rel_resid_worst = rel_resid_worst.max(rel);
        let defect = (rep.grad_sum - continuum_localization(&rho, eps, r_eps)).abs();
        println!(
            "criterion 11 detail: n = {n}, h = {h:.3}, pointwise = {pw:.2e}, sup|grad j| = \
             {dsup:.4} (bound {:.3}), relative residual = {rel:.2e}, localization defect = {defect:.3e}",
            1.05 * eps
        );
        defects.push(defect);
        spacings.push(h);
    }

    // Magnetic spot check: the identity also holds with a field and a
    // phase-twisted state.
    {
        let n = 32;
        let h = box_side / n as f64;
        let grid = Grid3D::new(n, h).unwrap();
        let gauge_b = MagneticGauge::new([0.0, 0.0, 0.5]);
        let pair = build_pair(eps, r_eps, grid).expect("partition pair");
        let w = 4.0;
        let orb = ComplexField3D::from_fn(grid, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            Complex64::from_polar((-r2 / (2.0 * w * w)).exp(), 0.3 * p[0])
        });
        let state = AnsatzState::hartree(vec![orb.clone(), orb]).expect("state");
        let rho = state.density();
        let h_eff = build_linearized(&rho, alpha, &gauge_b).expect("operator");
        let partition = ProductPartition::new(pair, 2).expect("product partition");
        let rep = ims_identity_check(&h_eff, &state, &partition).expect("identity check");
        let rel = rep.residual / rep.expectation.abs().max(1.0);
        println!("criterion 11 detail: magnetic spot check relative residual = {rel:.2e}");
        rel_resid_worst = rel_resid_worst.max(rel);
    }

    let monotone = defects.windows(2).all(|w| w[1] < w[0]);
    let slope = (defects[0] / defects[2]).ln() / (spacings[0] / spacings[2]).ln();
    let contraction = defects[2] / defects[0];
    let pass = pointwise_worst <= 1e-12
        && dsup_worst <= 1.05 * eps
        && rel_resid_worst <= 1e-8
        && monotone
        && slope >= 3.0
        && contraction <= 0.25;
    let ok = verdict(
        11,
        pass,
        &format!(
            "pointwise identity {pointwise_worst:.2e} (tol 1e-12), sup|grad j| {dsup_worst:.4} \
             (bound {:.3}), worst relative residual {rel_resid_worst:.2e} (tol 1e-8), \
             localization defect monotone = {monotone} with order {slope:.2} (need >= 3) and \
             halving contraction {contraction:.3} (cap 0.25)",
            1.05 * eps
        ),
    );
    assert!(ok, "criterion 11 failed");
}

// ---------------------------------------------------------------------------
// 12. Decay-rate fit: a planted e^{-r} orbital (density e^{-2r}) recovers
//     beta = 1.0 within 1%; the self-consistent alpha = 1 state fits with
//     beta > 0 and r^2 > 0.99; the report compares beta to sqrt(max(dE, 0)).
// ---------------------------------------------------------------------------
#[test]
fn criterion_12_decay_rate_fit() {
    // Planted profile.
    let grid = Grid3D::new(40, 0.5).unwrap();
    let orb = ComplexField3D::from_fn(grid, |p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        Complex64::new((-r).exp(), 0.0)
    });
    let planted = AnsatzState::hartree(vec![orb]).expect("planted state");
    let fit_p = decay_fit(&planted, 1.0).expect("planted fit");
    println!(
        "criterion 12 detail: planted beta = {:.6} (target 1.0), r^2 = {:.6}, window = \
         [{:.2}, {:.2}], reference sqrt(dE) = 1.000",
        fit_p.beta, fit_p.r_squared, fit_p.fit_window.0, fit_p.fit_window.1
    );
    let planted_ok = (fit_p.beta - 1.0).abs() <= 0.01 && !fit_p.flagged;

    // Self-consistent minimizer.
    let g = ground();
    let delta_e = (-g.energy).max(0.0);
    let fit_s = decay_fit(&g.state, delta_e).expect("ground fit");
    println!(
        "criterion 12 detail: ground-state beta = {:.6} vs sqrt(max(dE, 0)) = {:.6}, r^2 = \
         {:.6}, window = [{:.2}, {:.2}], shortfall flag = {}",
        fit_s.beta,
        delta_e.sqrt(),
        fit_s.r_squared,
        fit_s.fit_window.0,
        fit_s.fit_window.1,
        fit_s.shortfall
    );
    let ground_ok = fit_s.beta > 0.0 && fit_s.r_squared > 0.99;
    let pass = planted_ok && ground_ok;
    let ok = verdict(
        12,
        pass,
        &format!(
            "planted beta = {:.4} (1.0 within 1%), ground beta = {:.4} > 0 with r^2 = {:.4} \
             (need > 0.99); beta vs sqrt(max(dE, 0)) = {:.4} reported",
            fit_p.beta,
            fit_s.beta,
            fit_s.r_squared,
            delta_e.sqrt()
        ),
    );
    assert!(ok, "criterion 12 failed");
}

// ---------------------------------------------------------------------------
// 13. Determinism: identical config + seed give byte-identical numeric
//     reports, in-process (either jobs setting) and through the binary.
// ---------------------------------------------------------------------------
#[test]
fn criterion_13_byte_determinism() {
    let dir = std::env::temp_dir().join(format!("pekarlab-acceptance-13-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    let out_dir = dir.join("out");
    let text = "\
[grid]
n = 12
spacing = 1.1

[run]
task = solve
n = 1
alpha = 0.85
families = hartree
starts = spread,random
seed = 11

[scf]
mixing = 0.7
outer_tol = 1e-8
max_outer = 30
grad_tol = 1e-5
max_inner = 200
energy_tol = 2e-4
";
    let cfg_path = dir.join("run.cfg");
    fs::write(&cfg_path, text).unwrap();
    let overrides = Overrides {
        out: Some(out_dir.clone()),
        seed: None,
    };
    let rc = RunConfig::from_text(text, TaskKind::Solve, &overrides).expect("config");
    let artifacts = ["report.json", "energy_trace.csv", "density_profile.csv"];
    let snapshot = |tag: &str| -> Vec<(String, Vec<u8>)> {
        artifacts
            .iter()
            .map(|a| {
                (
                    a.to_string(),
                    fs::read(out_dir.join(a)).unwrap_or_else(|_| panic!("{tag} wrote {a}")),
                )
            })
            .collect()
    };

    tasks::run(&rc, 1).expect("first in-process run");
    let snap1 = snapshot("first run");
    tasks::run(&rc, 2).expect("second in-process run");
    let snap2 = snapshot("second run");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_pekarlab"))
        .args([
            "solve",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .env_remove("PEKARLAB_JOBS")
        .status()
        .expect("binary runs");
    assert!(status.success(), "binary solve exits zero");
    let snap3 = snapshot("binary run");

    let mut mismatches = Vec::new();
    for i in 0..artifacts.len() {
        if snap1[i].1 != snap2[i].1 {
            mismatches.push(format!("{} differs between jobs = 1 and jobs = 2", snap1[i].0));
        }
        if snap1[i].1 != snap3[i].1 {
            mismatches.push(format!(
                "{} differs between in-process and binary runs",
                snap1[i].0
            ));
        }
    }
    let pass = mismatches.is_empty();
    let ok = verdict(
        13,
        pass,
        &format!(
            "three runs (jobs = 1, jobs = 2, binary) of an identical config + seed: {}",
            if pass {
                format!(
                    "all {} artifacts byte-identical",
                    artifacts.len()
                )
            } else {
                mismatches.join("; ")
            }
        ),
    );
    assert!(ok, "criterion 13 failed");
    fs::remove_dir_all(&dir).ok();
}
