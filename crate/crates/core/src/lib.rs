//! Computational toolkit for Carnot groups.
//!
//! * [`algebra`]: graded nilpotent Lie algebras, norms, dilations, graded homomorphisms.
//! * [`bch`]: group law in exponential coordinates via the truncated BCH series.
//! * [`barycenter`]: center of mass of discrete measures.
//! * [`mollifier`]: center-of-mass mollification of maps between Carnot groups.
//! * [`exterior`]: weight-graded left-invariant forms and the `I`/`J` ideals.
//! * [`pansu`]: Pansu differentials, pullbacks and distortion.
//! * [`harness`]: experiment runner with CSV output.

pub mod algebra;
pub mod barycenter;
pub mod bch;
pub mod exterior;
pub mod harness;
pub mod linalg;
pub mod mollifier;
pub mod pansu;
pub mod scalar;

pub use algebra::{AlgebraVector, CarnotAlgebra, GradedHom};
pub use bch::GroupPoint;
pub use scalar::{rat, Rational, Scalar};
