//! Homogeneous quasi-arithmetic means.
//!
//! `f_alpha(u) = u^((1 - alpha) / 2)` for `alpha != 1` and `ln u` at `alpha = 1`.
//! The weighted mean `f_alpha^-1(sum_i w_i f_alpha(u_i))` covers the arithmetic
//! (`alpha = -1`), geometric (`alpha = 1`) and harmonic (`alpha = 3`) means and
//! tends to `max` / `min` as `alpha` goes to `-inf` / `+inf`.

use crate::error::{ensure_same_len, Error, Result};

/// Half-width of the window around `alpha = 1` in which the geometric branch is used.
pub const ALPHA_ONE_TOL: f64 = 1e-6;

/// Exponent `(1 - alpha) / 2` of the power map.
pub fn power_exponent(alpha: f64) -> f64 {
    0.5 * (1.0 - alpha)
}

/// True when `alpha` falls in the geometric-branch window.
pub fn is_alpha_one(alpha: f64) -> bool {
    (1.0 - alpha).abs() <= ALPHA_ONE_TOL
}

/// A validated `alpha` for the power family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FAlpha {
    alpha: f64,
}

impl FAlpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, u: f64) -> Result<f64> {
        f_alpha(u, self.alpha)
    }

    pub fn invert(&self, v: f64) -> Result<f64> {
        f_alpha_inv(v, self.alpha)
    }
}

/// `u^((1 - alpha) / 2)`, or `ln u` when `alpha` is exactly one.
pub fn f_alpha(u: f64, alpha: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("f_alpha needs a positive finite input, got {u}")));
    }
    if alpha == 1.0 {
        Ok(u.ln())
    } else {
        Ok(u.powf(power_exponent(alpha)))
    }
}

/// Inverse of [`f_alpha`].
pub fn f_alpha_inv(v: f64, alpha: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("f_alpha_inv needs a finite input, got {v}")));
    }
    if alpha == 1.0 {
        return Ok(v.exp());
    }
    if !(v > 0.0) {
        return Err(Error::Domain(format!("f_alpha_inv for alpha != 1 is only defined on v > 0, got {v}")));
    }
    Ok(v.powf(1.0 / power_exponent(alpha)))
}

/// Weighted `f_alpha`-mean of positive inputs, evaluated in the log domain.
pub fn generalized_f_mean(weights: &[f64], inputs: &[f64], alpha: f64) -> Result<f64> {
    ensure_same_len(weights.len(), inputs.len())?;
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("empty input set".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
    }
    for (index, &w) in weights.iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!("weight {index} is {w}")));
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    let log_u = inputs
        .iter()
        .map(|&u| {
            if u > 0.0 && u.is_finite() {
                Ok(u.ln())
            } else {
                Err(Error::Domain(format!("mean inputs must be positive and finite, got {u}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(log_power_mean(weights, &log_u, alpha).exp())
}

/// `ln` of the weighted power mean given `ln u_i`; zero weights are skipped.
///
/// Centered on the weighted log-mean so that the result stays accurate as
/// `alpha` approaches the geometric-branch window.
pub(crate) fn log_power_mean(weights: &[f64], log_u: &[f64], alpha: f64) -> f64 {
    let active = || weights.iter().zip(log_u).filter(|(w, _)| **w > 0.0).map(|(w, l)| (*w, *l));
    if let Some((_, first)) = active().next() {
        if active().all(|(_, l)| l == first) {
            return first;
        }
    }
    let total: f64 = active().map(|(w, _)| w).sum();
    let center: f64 = active().map(|(w, l)| w * l).sum::<f64>() / total;
    if is_alpha_one(alpha) {
        return center;
    }
    let s = power_exponent(alpha);
    if center.is_finite() {
        let spread = active().fold(0.0f64, |m, (_, l)| m.max((s * (l - center)).abs()));
        if spread <= 1.0 {
            let acc: f64 = active().map(|(w, l)| w / total * (s * (l - center)).exp_m1()).sum();
            return center + acc.ln_1p() / s;
        }
    }
    let peak = active().map(|(w, l)| (w / total).ln() + s * l).fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak / s;
    }
    let sum: f64 = active().map(|(w, l)| ((w / total).ln() + s * l - peak).exp()).sum();
    (peak + sum.ln()) / s
}
