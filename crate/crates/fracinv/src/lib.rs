//! Backward reconstruction of time-fractional reaction-diffusion solutions
//! on `(0, π)^d` from noisy point observations of the final state.
//!
//! The crate is organised bottom-up:
//!
//! - [`mlf`]: Gamma and Mittag-Leffler evaluation on the negative real axis,
//!   envelope constants and the per-mode amplification ratio.
//! - [`spectral`]: sine eigenbasis, spectral fields, Simpson quadrature,
//!   projection and synthesis, Sobolev-scale norms.
//! - [`observe`]: midpoint observation grids, the seeded noise model, the
//!   rectangle and ball coefficient estimators, aliasing sums.
//! - [`regularize`]: truncation, quasi-boundary and general filter operators,
//!   the Picard solver for the regularized integral equation, the forward
//!   solver and explicit error bounds.
//! - [`expcli`]: scenarios, metrics, convergence studies and report writers
//!   used by the `fracinv` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod error;
pub mod expcli;
pub mod mlf;
pub mod observe;
mod par;
pub mod regularize;
pub mod spectral;

pub use error::{Error, Result};
