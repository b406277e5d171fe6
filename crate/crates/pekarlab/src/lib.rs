//! Variational treatment of N particles with Coulomb repulsion and a
//! self-induced attractive polarization field, in a constant magnetic field.
//!
//! The energy functional on normalized N-body states is
//!
//! ```text
//!   E(Psi) = <Psi, (sum_j D_A^2(x_j) + sum_{i<j} 1/|x_i-x_j|) Psi> - alpha D(rho_Psi)
//! ```
//!
//! with `D_A = -i grad + A`, `A = B x / 2`, `D(rho) = 1/2 iint rho(x) rho(y) / |x-y|`,
//! and coupling `0 < alpha < 1` (units: hbar = 2m = e = 1, unit repulsion).
//!
//! Minimization proceeds by linearize-then-minimize self-consistency: freeze the
//! attraction source `sigma`, minimize the linearized Hamiltonian
//! `H_sigma = sum_j (D_A^2 - alpha V_sigma)(x_j) + sum_{i<j} 1/|x_i-x_j| + alpha D(sigma)`
//! over an ansatz family, refresh `sigma` from the minimizer's density, repeat.
//! The gap identity `<Psi, H_sigma Psi> - E(Psi) = alpha D(sigma - rho_Psi) >= 0`
//! makes the outer loop monotone at full density mixing.

pub mod grid;
pub mod field;
pub mod fft;
pub mod coulomb;
pub mod kinetic;
pub mod checkpoint;
pub mod ansatz;
pub mod pair;
pub mod twobody;
pub mod scf;
pub mod binding;
pub mod asymptotics;
pub mod ims;
pub mod radial;
pub mod config;
pub mod report;
pub mod tasks;

/// Crate version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Errors surfaced to callers. Configuration errors are recoverable input
/// problems; usage errors are contract violations by the caller; the
/// non-convergence variant still carries its artifacts at the call site.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
