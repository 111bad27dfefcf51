//! The alpha-mixture assistant distribution.
//!
//! For teacher `p`, student `q`, and parameters `(alpha, lambda)` the
//! unnormalized assistant is the weighted `f_alpha`-mean of the two densities,
//! evaluated pointwise:
//!
//! ```text
//! r~(z) = (lambda p(z)^s + (1 - lambda) q(z)^s)^(1/s),   s = (1 - alpha) / 2
//! r~(z) = p(z)^lambda q(z)^(1 - lambda)                   alpha = 1
//! ```
//!
//! and `r = r~ / Z` with `Z` the sum (discrete) or trapezoid integral (grid).
//! `alpha = -1` is the arithmetic mixture, `alpha = 1` the normalized geometric
//! one. For `alpha < 1` the support of `r` is the union of the two supports;
//! for `alpha >= 1` it is their intersection. Hard zeros are handled by set
//! algebra, never by propagating NaN.

use serde::Serialize;

use crate::divergence::alpha_div;
use crate::error::{ensure_same_len, Error, Result};
use crate::fmean::log_power_mean;
use crate::simplex::{logsumexp, normalize, trapezoid, Grid1D, LogCategorical};

/// Grid densities below this value count as hard zeros.
pub const GRID_ZERO_THRESHOLD: f64 = 1e-300;

/// Interpolation parameters: path geometry `alpha` and teacher share `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaLambda {
    alpha: f64,
    lambda: f64,
}

impl AlphaLambda {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { alpha, lambda })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same geometry with the roles of `p` and `q` exchanged.
    pub fn swapped(&self) -> Self {
        Self { alpha: self.alpha, lambda: 1.0 - self.lambda }
    }
}

/// A normalized assistant distribution together with `ln Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureResult<D> {
    pub r: D,
    pub log_z: f64,
}

/// `ln r~` for one point given `ln p` and `ln q`.
pub fn log_unnormalized_entry(log_p: f64, log_q: f64, params: AlphaLambda) -> f64 {
    let lambda = params.lambda;
    log_power_mean(&[lambda, 1.0 - lambda], &[log_p, log_q], params.alpha)
}

fn log_unnormalized(log_p: &[f64], log_q: &[f64], params: AlphaLambda) -> Vec<f64> {
    log_p.iter().zip(log_q).map(|(&a, &b)| log_unnormalized_entry(a, b, params)).collect()
}

/// Builds `r^(alpha, lambda)` between two categoricals.
pub fn alpha_mixture(
    p: &LogCategorical,
    q: &LogCategorical,
    params: AlphaLambda,
) -> Result<MixtureResult<LogCategorical>> {
    ensure_same_len(p.len(), q.len())?;
    let log_r = log_unnormalized(p.log_probs(), q.log_probs(), params);
    let log_z = logsumexp(&log_r);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let r = normalize(&log_r)?;
    Ok(MixtureResult { r, log_z })
}

fn grid_logs(g: &Grid1D) -> Vec<f64> {
    g.density().iter().map(|&d| if d < GRID_ZERO_THRESHOLD { f64::NEG_INFINITY } else { d.ln() }).collect()
}

/// Builds `r^(alpha, lambda)` between two densities on the same grid.
pub fn alpha_mixture_grid(p: &Grid1D, q: &Grid1D, params: AlphaLambda) -> Result<MixtureResult<Grid1D>> {
    p.same_grid(q)?;
    let log_r = log_unnormalized(&grid_logs(p), &grid_logs(q), params);
    let peak = log_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let scaled: Vec<f64> = log_r.iter().map(|l| (l - peak).exp()).collect();
    let mass = trapezoid(&scaled, p.dx());
    if !(mass > 0.0) {
        return Err(Error::EmptySupport);
    }
    let log_z = mass.ln() + peak;
    let density = scaled.into_iter().map(|v| v / mass).collect();
    let r = Grid1D::new(p.x_min(), p.x_max(), density)?;
    Ok(MixtureResult { r, log_z })
}

/// Softmax of the lambda-weighted logit average; equals the `alpha = 1` mixture.
pub fn taid_logit_mixture(teacher_logits: &[f64], student_logits: &[f64], lambda: f64) -> Result<LogCategorical> {
    ensure_same_len(teacher_logits.len(), student_logits.len())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    for (index, &value) in teacher_logits.iter().chain(student_logits).enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index: index % teacher_logits.len(), value });
        }
    }
    let blended: Vec<f64> =
        teacher_logits.iter().zip(student_logits).map(|(t, s)| lambda * t + (1.0 - lambda) * s).collect();
    normalize(&blended)
}

/// `lambda D_alpha(p || r) + (1 - lambda) D_alpha(q || r)`.
///
/// The closed-form mixture is the unique minimizer of this objective over `r`.
/// Terms with zero weight are dropped, so `D_alpha = +inf` there is ignored.
pub fn weighted_alpha_div_objective(
    r_cand: &LogCategorical,
    p: &LogCategorical,
    q: &LogCategorical,
    params: AlphaLambda,
) -> Result<f64> {
    ensure_same_len(r_cand.len(), p.len())?;
    ensure_same_len(r_cand.len(), q.len())?;
    let lambda = params.lambda;
    let mut total = 0.0;
    if lambda > 0.0 {
        total += lambda * alpha_div(p, r_cand, params.alpha)?;
    }
    if lambda < 1.0 {
        total += (1.0 - lambda) * alpha_div(q, r_cand, params.alpha)?;
    }
    Ok(total)
}
