//! Alpha-mixture assistant distributions for knowledge distillation.
//!
//! An assistant `r` interpolates between a teacher `p` and a student `q` via a
//! weighted power mean controlled by `alpha` (the mean's shape) and `lambda`
//! (the teacher weight). Distilling through `r` instead of directly against `p`
//! gives the AMiD family of losses.
//!
//! - [`simplex`]: categorical distributions, grids and sampling.
//! - [`fmean`]: homogeneous quasi-arithmetic means.
//! - [`mixture`]: the alpha-mixture itself.
//! - [`divergence`]: KL, skew, alpha, AB and f-divergences.
//! - [`grad`]: the AMiD loss and its gradient.
//! - [`trainer`]: Adam, simplex fits, the Gaussian toy and tabular distillation.
//! - [`cli`]: the `amid` command-line interface.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod divergence;
pub mod error;
pub mod fmean;
pub mod grad;
pub mod mixture;
pub mod simplex;
pub mod trainer;

pub use divergence::{Divergence, FGenerator};
pub use error::{Error, Result};
pub use grad::{Direction, StudentLogits};
pub use mixture::{alpha_mixture, AlphaLambda};
pub use simplex::LogCategorical;
