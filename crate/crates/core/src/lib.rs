//! Lipschitz stability of parametric second-order initial-value problems.
//!
//! The crate integrates `x'' = f_λ(t, x, x')` for a family of parameters `λ`,
//! evaluates closed-form bounds on `‖x_λ(t) - x(t)‖` in terms of the initial
//! data and parameter perturbations, and certifies, by sweeping `λ`, that the
//! computed deviations stay below those bounds.
//!
//! - [`ode`]: problem/trajectory types, RK4 integration, deviations.
//! - [`bounds`]: stability coefficients, Perov inequality, integral lemma.
//! - [`models`]: cocoercive, RLC and linear-control families with validators.
//! - [`harness`]: Lipschitz estimation, sweeps, reports, certification.
//! - [`config`]: JSON model configuration.
//! - [`suite`]: the property suite run by `paramstab verify`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod config;
pub mod error;
pub mod harness;
pub mod models;
pub mod ode;
pub mod suite;

pub use error::{Result, StabilityError};
pub use ode::{NormKind, SecondOrderIvp, Trajectory, VectorState};

/// Formats a double with 17 significant digits.
pub fn format_sci(x: f64) -> String {
    format!("{x:.16e}")
}
