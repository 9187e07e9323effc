//! Subspace quasi-Newton optimization with randomly sketched gradients.
//!
//! The crate provides the optimizer itself ([`optimizer`]), its building
//! blocks ([`oracle`], [`sketch`], [`subspace`], [`hessian`]), reference
//! methods ([`baselines`]), desk-scale test problems ([`problems`]) and the
//! experiment runner behind the `subqn` binary ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod hessian;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod sketch;
pub mod subspace;

pub use error::{Error, Result};
pub use oracle::{ClassTag, GradMode, Objective, Oracle, Problem, SketchGradient};
pub use optimizer::{Config, Trace};
