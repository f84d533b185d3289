//! Positive linear influence dynamics on product-ecosystem networks.
//!
//! The crate models the influence vector `α(t) ≥ 0` of `n` products driven by
//! a Metzler generator `M = Λ − diag(δ)` and a nonnegative exogenous push `u`:
//!
//! ```text
//! α'(t) = M(t) α(t) + u(t)
//! ```
//!
//! Modules, bottom-up:
//!
//! * [`matfun`]: dense matrix exponential, exponential integral, principal
//!   logarithm and Perron root.
//! * [`model`]: validated domain types (interaction matrices, decay rates,
//!   generators, input signals, schedules, generator paths).
//! * [`solvers`]: exact solutions for constant, piecewise-constant and fully
//!   time-varying generators, including Peano–Baker transition matrices.
//! * [`nonlinear`]: the saturating influence model and the SIS adoption layer
//!   with its spectral persistence threshold.
//! * [`analysis`]: amplification factors, perceived-utility saturation,
//!   frequency scaling, and the sensitivity / ROI decomposition.
//! * [`estimation`]: discrete-time identification of the generator from
//!   snapshots.
//! * [`io`]: the CSV formats shared with the command-line front end.

// `!(x > 0.0)` is the NaN-rejecting form used for every validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimation;
pub mod io;
pub mod matfun;
pub mod model;
pub mod nonlinear;
pub mod quadrature;
pub mod solvers;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
