//! Quantum Fisher information of single-mode Gaussian states under a
//! thermal attenuator, and time-local symplectic control of its decay.
//!
//! Conventions: `ħ = 1`, quadratures `(x, p)`, vacuum covariance `1`,
//! symplectic form `Ω = [[0, 1], [-1, 0]]`.

pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod qfi;
pub mod symplectic;
pub mod verify;

pub use control::{
    controlled_qfi_angle, controlled_qfi_strength, nu_c, optimize_control, simulate_protocol,
    single_control_suffices_check, ControlProtocol, OptimizerSettings, Optimum,
};
pub use dynamics::{evolve_family, evolve_state, FamilyKind, StateFamily, ThermalChannel};
pub use error::{Error, Result};
pub use qfi::{gaussian_qfi, qfi_rate, QfiReport};
pub use symplectic::{GaussianState, Mat2, SymplecticControl, Vec2};
