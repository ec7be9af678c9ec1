//! Approximate message passing for amplitude-based phase retrieval.
//!
//! The crate covers the measurement model `y = |A x| + w`, the AMP.A
//! iteration and its smoothed and regularized forms, the two-dimensional
//! state evolution that predicts its behavior, the decoupled spectral
//! initialization, error metrics, and an experiment harness.
//!
//! Numeric code is generic over [`Real`] (`f64` or `f32`); the aliases below
//! fix the scalar to `f64`, which is what the harness uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::nonminimal_bool)]

pub mod ampa;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod se;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Instance = model::ProblemInstance<f64>;
pub type Instance32 = model::ProblemInstance<f32>;
pub type State = ampa::AmpState<f64>;
pub type State32 = ampa::AmpState<f32>;
pub type Point = se::SePoint<f64>;
pub type Spectral = spectral::SpectralInit<f64>;
pub type Matrix = linalg::CMatrix<f64>;
