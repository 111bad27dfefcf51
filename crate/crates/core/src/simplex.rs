//! Finite and gridded probability distributions.
//!
//! Discrete distributions are held as natural-log probabilities. A hard zero is
//! the exact value `f64::NEG_INFINITY`, never a large negative sentinel, so
//! support computations are exact set operations.
//!
//! Randomness comes from `ChaCha8Rng` seeded with a `u64` through
//! [`rng_from_seed`]. Every sampling routine takes the seed (or an explicit
//! generator) as an argument and keeps no hidden state.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_len, Error, Result};

/// Generator used for every seeded draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tolerance on `logsumexp(log_probs)` accepted by [`LogCategorical::from_log_probs`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `ln Σ exp(x_i)`, returning `-inf` when every entry is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Two-term `ln(e^a + e^b)`.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// A categorical distribution over `K >= 2` outcomes stored as log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogCategorical {
    log_probs: Vec<f64>,
}

impl LogCategorical {
    /// Wraps log-probabilities that are already normalized.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        validate_log_weights(&log_probs)?;
        let lse = logsumexp(&log_probs);
        if lse == f64::NEG_INFINITY {
            return Err(Error::AllZero);
        }
        if lse.abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!("log-probabilities are not normalized (logsumexp = {lse:e})")));
        }
        Ok(Self { log_probs })
    }

    /// Builds a distribution from non-negative weights, normalizing them.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let mut logs = Vec::with_capacity(probs.len());
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(Error::Negative { index, value });
            }
            logs.push(if value == 0.0 { f64::NEG_INFINITY } else { value.ln() });
        }
        normalize(&logs)
    }

    /// Uniform distribution over `k` outcomes.
    pub fn uniform(k: usize) -> Result<Self> {
        normalize(&vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn into_log_probs(self) -> Vec<f64> {
        self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.log_probs[k].exp()
    }

    /// Indicator of the entries that are not hard zeros.
    pub fn support(&self) -> Vec<bool> {
        self.log_probs.iter().map(|&l| l > f64::NEG_INFINITY).collect()
    }

    /// Draws `count` indices; see [`sample`].
    pub fn sample(&self, seed: u64, count: usize) -> Vec<usize> {
        sample(self, seed, count)
    }
}

fn validate_log_weights(log_weights: &[f64]) -> Result<()> {
    if log_weights.len() < 2 {
        return Err(Error::TooShort { min: 2, got: log_weights.len() });
    }
    for (index, &value) in log_weights.iter().enumerate() {
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::NonFinite { index, value });
        }
    }
    Ok(())
}

/// Shifts `log_weights` so that they exponentiate to a probability vector.
pub fn normalize(log_weights: &[f64]) -> Result<LogCategorical> {
    validate_log_weights(log_weights)?;
    let lse = logsumexp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::AllZero);
    }
    let log_probs = log_weights.iter().map(|&w| w - lse).collect();
    Ok(LogCategorical { log_probs })
}

/// Half the L1 distance between two categoricals, in `[0, 1]`.
pub fn total_variation(p: &LogCategorical, q: &LogCategorical) -> Result<f64> {
    ensure_same_len(p.len(), q.len())?;
    let l1: f64 = p.log_probs.iter().zip(&q.log_probs).map(|(&a, &b)| (a.exp() - b.exp()).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

/// Draws `count` i.i.d. indices from `p` using a generator seeded with `seed`.
pub fn sample(p: &LogCategorical, seed: u64, count: usize) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    sample_with(p, &mut rng, count)
}

/// Like [`sample`], drawing from a caller-owned generator.
pub fn sample_with(p: &LogCategorical, rng: &mut SeededRng, count: usize) -> Vec<usize> {
    // A valid LogCategorical always has finite, non-negative, non-zero total weight.
    let dist = WeightedIndex::new(p.probs()).expect("valid categorical weights");
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Draws a probability vector from a symmetric Dirichlet(`concentration`).
///
/// Gamma draws that underflow to zero are floored at `floor` so the result has
/// full support unless `floor` is zero.
pub fn dirichlet_probs(rng: &mut SeededRng, k: usize, concentration: f64, floor: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(floor)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

/// Trapezoid rule on uniformly spaced samples with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            dx * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Minimum number of grid points accepted by [`Grid1D`].
pub const MIN_GRID_POINTS: usize = 64;
/// Tolerance on the trapezoid integral of a [`Grid1D`] density.
pub const GRID_MASS_TOL: f64 = 1e-6;

/// A density sampled on `n` uniformly spaced points spanning `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    density: Vec<f64>,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, density: Vec<f64>) -> Result<Self> {
        check_grid_spec(x_min, x_max, density.len())?;
        for (index, &value) in density.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite { index, value });
            }
            if value < 0.0 {
                return Err(Error::Negative { index, value });
            }
        }
        let grid = Self { x_min, x_max, density };
        let mass = grid.integral();
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidParameter(format!("grid density integrates to {mass}, expected 1")));
        }
        Ok(grid)
    }

    /// Rescales a non-negative density so its trapezoid integral is one.
    pub fn normalized(x_min: f64, x_max: f64, mut density: Vec<f64>) -> Result<Self> {
        check_grid_spec(x_min, x_max, density.len())?;
        let dx = (x_max - x_min) / (density.len() - 1) as f64;
        let mass = trapezoid(&density, dx);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::EmptySupport);
        }
        density.iter_mut().for_each(|d| *d /= mass);
        Self::new(x_min, x_max, density)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.density.len()
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.density.len() - 1) as f64
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.x(i)).collect()
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.dx())
    }

    /// Trapezoid estimate of the mean and variance.
    pub fn mean_variance(&self) -> (f64, f64) {
        let xs = self.xs();
        let dx = self.dx();
        let first: Vec<f64> = xs.iter().zip(&self.density).map(|(x, d)| x * d).collect();
        let mean = trapezoid(&first, dx);
        let second: Vec<f64> = xs.iter().zip(&self.density).map(|(x, d)| (x - mean).powi(2) * d).collect();
        (mean, trapezoid(&second, dx))
    }

    pub fn same_grid(&self, other: &Grid1D) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::GridMismatch(format!("{} vs {} points", self.n(), other.n())));
        }
        if self.x_min != other.x_min || self.x_max != other.x_max {
            return Err(Error::GridMismatch(format!(
                "[{}, {}] vs [{}, {}]",
                self.x_min, self.x_max, other.x_min, other.x_max
            )));
        }
        Ok(())
    }
}

fn check_grid_spec(x_min: f64, x_max: f64, n: usize) -> Result<()> {
    if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
        return Err(Error::InvalidParameter(format!(
            "grid endpoints must be finite with x_min < x_max, got [{x_min}, {x_max}]"
        )));
    }
    if n < MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!("grid needs at least {MIN_GRID_POINTS} points, got {n}")));
    }
    Ok(())
}

/// One weighted Gaussian component; `variance` is sigma squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianComponent {
    pub fn pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        (-0.5 * z * z / self.variance).exp() / (2.0 * std::f64::consts::PI * self.variance).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianMixture1D {
    components: Vec<GaussianComponent>,
}

impl GaussianMixture1D {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidParameter(format!("weight {} not in (0, 1]", c.weight)));
            }
            if !(c.variance > 0.0 && c.variance.is_finite()) || !c.mean.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "component N({}, {}) is not a valid Gaussian",
                    c.mean, c.variance
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// A single Gaussian `N(mean, variance)`.
    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![GaussianComponent { weight: 1.0, mean, variance }])
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(x)).sum()
    }
}

/// Samples `m` on `n` points over `[x_min, x_max]` and renormalizes.
pub fn discretize(m: &GaussianMixture1D, x_min: f64, x_max: f64, n: usize) -> Result<Grid1D> {
    check_grid_spec(x_min, x_max, n)?;
    let dx = (x_max - x_min) / (n - 1) as f64;
    let density: Vec<f64> = (0..n).map(|i| m.pdf(x_min + i as f64 * dx)).collect();
    let mass = trapezoid(&density, dx);
    if !(mass >= 0.999) {
        return Err(Error::InsufficientCoverage { mass });
    }
    Grid1D::normalized(x_min, x_max, density)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        let r = normalize(&[0.0, 0.0]).unwrap();
        assert!(close(r.log_probs()[0], 0.5f64.ln(), 1e-15));
        assert!(close(r.log_probs()[1], 0.5f64.ln(), 1e-15));

        let c = -17.25;
        let r = normalize(&[c, c, c]).unwrap();
        for lp in r.log_probs() {
            assert!(close(*lp, (1.0f64 / 3.0).ln(), 1e-14));
        }

        let r = normalize(&[2f64.ln(), 6f64.ln()]).unwrap();
        assert!(close(r.log_probs()[0], 0.25f64.ln(), 1e-15));
        assert!(close(r.log_probs()[1], 0.75f64.ln(), 1e-15));
    }

    #[test]
    fn normalize_rejects_all_zero_and_bad_input() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(normalize(&[ninf, ninf]), Err(Error::AllZero));
        assert!(matches!(normalize(&[0.0]), Err(Error::TooShort { .. })));
        assert!(matches!(normalize(&[0.0, f64::NAN]), Err(Error::NonFinite { index: 1, .. })));
        assert!(matches!(normalize(&[0.0, f64::INFINITY]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn hard_zero_survives_normalization() {
        let r = LogCategorical::from_probs(&[0.0, 3.0, 1.0]).unwrap();
        assert_eq!(r.log_probs()[0], f64::NEG_INFINITY);
        assert_eq!(r.support(), vec![false, true, true]);
    }

    #[test]
    fn from_log_probs_checks_normalization() {
        assert!(LogCategorical::from_log_probs(vec![0.0, 0.0]).is_err());
        assert!(LogCategorical::from_log_probs(vec![0.5f64.ln(), 0.5f64.ln()]).is_ok());
    }

    #[test]
    fn total_variation_examples() {
        let p = LogCategorical::from_probs(&[0.5, 0.5]).unwrap();
        let q = LogCategorical::from_probs(&[0.9, 0.1]).unwrap();
        assert_eq!(total_variation(&p, &p).unwrap(), 0.0);
        assert!(close(total_variation(&p, &q).unwrap(), 0.4, 1e-15));

        let a = LogCategorical::from_probs(&[1.0, 0.0]).unwrap();
        let b = LogCategorical::from_probs(&[0.0, 1.0]).unwrap();
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);

        let c = LogCategorical::uniform(3).unwrap();
        assert!(matches!(total_variation(&a, &c), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let p = LogCategorical::from_probs(&[1.0, 0.0, 0.0]).unwrap();
        assert!(sample(&p, 3, 1000).iter().all(|&i| i == 0));

        let q = LogCategorical::from_probs(&[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(sample(&q, 42, 500), sample(&q, 42, 500));
        assert_ne!(sample(&q, 42, 500), sample(&q, 43, 500));
    }

    #[test]
    fn sampling_uniform_frequencies() {
        let p = LogCategorical::uniform(4).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for i in sample(&p, 7, n) {
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn discretize_standard_normal_peak() {
        let m = GaussianMixture1D::single(0.0, 1.0).unwrap();
        let g = discretize(&m, -8.0, 8.0, 1024).unwrap();
        let peak = g.density().iter().copied().fold(0.0, f64::max);
        let expected = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!(close(peak, expected, 1e-3), "{peak} vs {expected}");
        assert!(close(g.integral(), 1.0, 1e-12));
    }

    #[test]
    fn discretize_identical_components_match_single() {
        let c = GaussianComponent { weight: 0.5, mean: 1.0, variance: 2.0 };
        let two = GaussianMixture1D::new(vec![c, c]).unwrap();
        let one = GaussianMixture1D::single(1.0, 2.0).unwrap();
        let a = discretize(&two, -10.0, 10.0, 512).unwrap();
        let b = discretize(&one, -10.0, 10.0, 512).unwrap();
        for (x, y) in a.density().iter().zip(b.density()) {
            assert!(close(*x, *y, 1e-15));
        }
    }

    #[test]
    fn discretize_teacher_is_bimodal_with_taller_left_mode() {
        let teacher = GaussianMixture1D::new(vec![
            GaussianComponent { weight: 0.7, mean: -3.0, variance: 2.0 },
            GaussianComponent { weight: 0.3, mean: 3.0, variance: 0.8 },
        ])
        .unwrap();
        let g = discretize(&teacher, -10.0, 10.0, 2048).unwrap();
        let d = g.density();
        let local_max: Vec<usize> = (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1]).collect();
        assert_eq!(local_max.len(), 2, "{local_max:?}");
        let left = local_max[0];
        let right = local_max[1];
        assert!((g.x(left) + 3.0).abs() < 0.05);
        assert!((g.x(right) - 3.0).abs() < 0.05);
        assert!(d[left] > d[right]);
    }

    #[test]
    fn discretize_rejects_narrow_grid() {
        let m = GaussianMixture1D::single(0.0, 1.0).unwrap();
        assert!(matches!(discretize(&m, 0.0, 8.0, 256), Err(Error::InsufficientCoverage { .. })));
        assert!(discretize(&m, -8.0, 8.0, 32).is_err());
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        let c = GaussianComponent { weight: 0.6, mean: 0.0, variance: 1.0 };
        assert!(GaussianMixture1D::new(vec![c, c]).is_err());
    }
}
