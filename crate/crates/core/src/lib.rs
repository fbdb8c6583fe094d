//! Convexity-preserving nonlinear least-squares regression.
//!
//! The model predicts `g(w·x)` for an output transform `g` and is fitted by
//! minimizing the total squared loss. With the square-root transform
//! [`transform::ConvexSqrt`] the loss stays convex in `w` as long as every
//! target lies in `[-Y, Y]`, so plain gradient descent finds the global
//! optimum. The [`lab`] module checks that claim numerically and shows it
//! failing for `tanh`.
//!
//! - [`transform`]: output transforms and their derivatives
//! - [`remark`]: checker for the sufficient conditions on a generating function
//! - [`loss`]: squared loss, gradients and the pointwise convexity condition
//! - [`solver`]: gradient descent, least squares and multi-restart fitting
//! - [`lab`]: midpoint, derivative-monotonicity and Hessian checks
//! - [`data`]: CSV loading, synthetic data and target-bound estimation

pub mod data;
pub mod dataset;
pub mod error;
pub mod lab;
pub mod loss;
pub mod remark;
pub mod solver;
pub mod transform;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use loss::Model;
pub use transform::{Affine, ConvexSqrt, Tanh, TransformKind};
