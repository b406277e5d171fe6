//! Temporary: radial-oracle box-size study. #[ignore]d.
use pekarlab::radial::radial_ground_state;

#[test]
#[ignore]
fn box_study() {
    let reference = [
        (1.0f64, -0.027128206495f64),
        (0.8, 0.64 * -0.027128206495),
        (0.6, 0.36 * -0.027128206495),
    ];
    for &(alpha, e_inf) in &reference {
        for rmax in [21.6f64, 25.0, 30.0, 36.0, 43.2, 60.0] {
            let m = ((rmax / 0.005) as usize).max(4000);
            let sol = radial_ground_state(alpha, rmax, m).unwrap();
            println!(
                "alpha={alpha} rmax={rmax}: E = {:.9}  rel dev vs inf = {:+.3e}",
                sol.energy,
                (sol.energy - e_inf) / e_inf.abs()
            );
        }
    }
}
