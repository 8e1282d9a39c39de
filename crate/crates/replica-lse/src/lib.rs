//! Asymptotic performance of nonlinear least-squares-error (LSE) precoders.
//!
//! The precoder maps a source vector `s` to `x = argmin_v ‖Hv − √ρ s‖² + u(v)`
//! over a per-antenna support. In the large-system limit every entry of `x`
//! behaves like a scalar "decoupled" precoder driven by a Gaussian (replica
//! symmetric) or tilted-Gaussian (one-step symmetry breaking) input. This crate
//! solves the corresponding fixed-point equations, evaluates distortion, active
//! antenna fraction and power, and checks the predictions against direct
//! finite-size solutions.
//!
//! Modules:
//! - [`spectral`]: R-transform of the channel Gram spectrum.
//! - [`decoupled`]: closed-form scalar precoders and a grid oracle.
//! - [`rs_solver`]: replica-symmetric fixed point.
//! - [`rsb_solver`]: one-step replica-symmetry-breaking fixed point.
//! - [`finite_sim`]: finite-size instances and solvers.
//! - [`harness`]: sweeps, calibration and CSV output.

pub mod decoupled;
pub mod error;
pub mod finite_sim;
pub mod harness;
pub mod quadrature;
pub mod rs_solver;
pub mod rsb_solver;
pub mod spectral;

pub use decoupled::{Penalty, Support};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectral::SpectralModel;
