//! Gradient descent with delayed (and optionally noisy) gradients on convex
//! quadratics.
//!
//! The crate is organised around the scalar recurrence
//! `b_{k+1} = b_k - alpha * b_{k-tau}` whose generating function is
//! `1 / (1 - z + alpha z^{tau+1})`:
//!
//! - [`quadratic`]: objectives, gradients, minimizers, random instances.
//! - [`genfun`]: coefficient sequences by recurrence and by partial fractions.
//! - [`roots`]: roots of the characteristic polynomial and their certificates.
//! - [`dynamics`]: DGD, SDGD, mini-batch SGD and the idle baselines.
//! - [`bounds`]: upper/lower bound formulas, step-size tuning, exact expectations.
//! - [`worstcase`]: tridiagonal lower-bound instances and span checks.
//! - [`experiments`]: reproducible Monte Carlo sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod format;
pub mod genfun;
pub mod quadratic;
pub mod roots;
pub mod worstcase;

pub use error::{Error, Result};
