use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::STATIONARY_LOSS;
use crate::error::{Error, Result};
use crate::grad::finite_diff_grad;
use crate::mixture::{log_unnormalized_entry, AlphaLambda};
use crate::simplex::{discretize, trapezoid, GaussianComponent, GaussianMixture1D, MIN_GRID_POINTS};

/// Central-difference step on `(mu, log_sigma)`.
pub const TOY_FD_STEP: f64 = 1e-5;

/// The second Gaussian argument of every toy distribution is a variance.
pub const VARIANCE_CONVENTION: &str = "variance";

/// A unimodal Gaussian student parameterized by mean and log standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyStudent1D {
    pub mu: f64,
    pub log_sigma: f64,
}

impl ToyStudent1D {
    pub fn new(mu: f64, log_sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !log_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("student parameters must be finite: {mu}, {log_sigma}")));
        }
        Ok(Self { mu, log_sigma })
    }

    /// `N(mu, variance)`.
    pub fn from_variance(mu: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidParameter(format!("variance must be positive, got {variance}")));
        }
        Self::new(mu, 0.5 * variance.ln())
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma();
        -0.5 * z * z - self.log_sigma - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -10.0, x_max: 10.0, n: 2048 }
    }
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x_min + i as f64 * self.dx()).collect()
    }
}

/// `0.7 N(-3, 2) + 0.3 N(3, 0.8)`.
pub fn default_toy_teacher() -> GaussianMixture1D {
    GaussianMixture1D::new(vec![
        GaussianComponent { weight: 0.7, mean: -3.0, variance: 2.0 },
        GaussianComponent { weight: 0.3, mean: 3.0, variance: 0.8 },
    ])
    .expect("fixed teacher is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyPoint {
    pub step: usize,
    pub loss: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyFit {
    pub student: ToyStudent1D,
    pub trajectory: Vec<ToyPoint>,
    #[serde(serialize_with = "super::serialize_error")]
    pub diverged: Option<Error>,
}

/// `KL(p || r)` on a grid where `p` is fixed and `q` is the student, integrated
/// as `p ln(p/r) - p + r` so the integrand is non-negative.
struct ToyObjective {
    xs: Vec<f64>,
    dx: f64,
    log_p: Vec<f64>,
    p: Vec<f64>,
    params: AlphaLambda,
}

impl ToyObjective {
    fn new(teacher: &GaussianMixture1D, params: AlphaLambda, grid: GridSpec) -> Result<Self> {
        let discretized = discretize(teacher, grid.x_min, grid.x_max, grid.n)?;
        let p = discretized.density().to_vec();
        let log_p = p.iter().map(|&d| if d > 0.0 { d.ln() } else { f64::NEG_INFINITY }).collect();
        Ok(Self { xs: grid.xs(), dx: grid.dx(), log_p, p, params })
    }

    fn loss(&self, student: ToyStudent1D) -> f64 {
        let log_q = normalized_logs(self.xs.iter().map(|&x| student.log_pdf(x)).collect(), self.dx);
        let log_r = normalized_logs(
            self.log_p.iter().zip(&log_q).map(|(&a, &b)| log_unnormalized_entry(a, b, self.params)).collect(),
            self.dx,
        );
        let integrand: Vec<f64> = self
            .p
            .iter()
            .zip(self.log_p.iter().zip(&log_r))
            .map(|(&pk, (&a, &b))| {
                let rk = b.exp();
                if pk > 0.0 {
                    pk * (a - b) - pk + rk
                } else {
                    rk
                }
            })
            .collect();
        trapezoid(&integrand, self.dx)
    }
}

/// Subtracts the log of the trapezoid mass so the density integrates to one.
fn normalized_logs(mut logs: Vec<f64>, dx: f64) -> Vec<f64> {
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return vec![f64::NAN; logs.len()];
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let log_mass = trapezoid(&scaled, dx).ln() + peak;
    logs.iter_mut().for_each(|l| *l -= log_mass);
    logs
}

/// Quadrature loss `KL(p || r)` used by [`toy_gaussian_fit`].
pub fn toy_loss(
    teacher: &GaussianMixture1D,
    student: ToyStudent1D,
    params: AlphaLambda,
    grid: GridSpec,
) -> Result<f64> {
    check_grid(grid)?;
    Ok(ToyObjective::new(teacher, params, grid)?.loss(student))
}

fn check_grid(grid: GridSpec) -> Result<()> {
    if grid.n < MIN_GRID_POINTS || !(grid.x_max > grid.x_min) || !grid.x_min.is_finite() || !grid.x_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid needs x_min < x_max and at least {MIN_GRID_POINTS} points, got {grid:?}"
        )));
    }
    Ok(())
}

/// Fits a Gaussian student to a mixture teacher through the assistant
/// `r^(alpha, lambda)`, with finite-difference gradients on `(mu, log_sigma)`.
pub fn toy_gaussian_fit(
    teacher: &GaussianMixture1D,
    init: ToyStudent1D,
    params: AlphaLambda,
    grid: GridSpec,
    opt: AdamConfig,
) -> Result<ToyFit> {
    opt.validate()?;
    check_grid(grid)?;
    let objective = ToyObjective::new(teacher, params, grid)?;
    let eval = |theta: &[f64]| -> Result<f64> {
        let loss = objective.loss(ToyStudent1D { mu: theta[0], log_sigma: theta[1] });
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NonFiniteLoss)
        }
    };
    let mut theta = vec![init.mu, init.log_sigma];
    let initial = eval(&theta)?;
    let mut trajectory = Vec::with_capacity(opt.steps + 1);
    trajectory.push(ToyPoint { step: 0, loss: initial, mu: init.mu, sigma: init.sigma() });
    let mut adam = Adam::new(opt, 2);
    let mut diverged = None;
    for step in 1..=opt.steps {
        let last = *trajectory.last().expect("initial point recorded");
        if last.loss <= STATIONARY_LOSS {
            trajectory.push(ToyPoint { step, ..last });
            continue;
        }
        let outcome = finite_diff_grad(eval, &theta, TOY_FD_STEP).and_then(|g| {
            adam.step(&mut theta, &g);
            if theta.iter().all(|v| v.is_finite()) {
                eval(&theta)
            } else {
                Err(Error::NonFiniteLoss)
            }
        });
        match outcome {
            Ok(loss) => trajectory.push(ToyPoint { step, loss, mu: theta[0], sigma: theta[1].exp() }),
            Err(e) => {
                diverged = Some(Error::DivergedLoss { step, reason: e.to_string() });
                break;
            }
        }
    }
    let last = trajectory.last().expect("initial point recorded");
    let student = ToyStudent1D { mu: last.mu, log_sigma: last.sigma.ln() };
    Ok(ToyFit { student, trajectory, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_at_teacher_does_not_move() {
        let teacher = GaussianMixture1D::single(0.5, 1.5).unwrap();
        let init = ToyStudent1D::from_variance(0.5, 1.5).unwrap();
        let params = AlphaLambda::new(-3.0, 0.3).unwrap();
        let fit =
            toy_gaussian_fit(&teacher, init, params, GridSpec::default(), AdamConfig::toy().with_steps(100)).unwrap();
        assert!(fit.diverged.is_none());
        assert!((fit.student.mu - init.mu).abs() < 1e-6);
        assert!((fit.student.log_sigma - init.log_sigma).abs() < 1e-6);
        assert!(fit.trajectory.iter().all(|pt| pt.loss.abs() < 1e-10));
    }

    #[test]
    fn variance_convention() {
        let s = ToyStudent1D::from_variance(0.0, 4.0).unwrap();
        assert!((s.sigma() - 2.0).abs() < 1e-15);
        assert!(ToyStudent1D::from_variance(0.0, 0.0).is_err());
    }

    #[test]
    fn loss_is_zero_at_lambda_one() {
        let teacher = default_toy_teacher();
        let student = ToyStudent1D::new(1.0, 0.2).unwrap();
        let v = toy_loss(&teacher, student, AlphaLambda::new(0.0, 1.0).unwrap(), GridSpec::default()).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn bad_grid_is_rejected() {
        let teacher = default_toy_teacher();
        let student = ToyStudent1D::new(0.0, 0.0).unwrap();
        let params = AlphaLambda::new(0.0, 0.5).unwrap();
        assert!(toy_loss(&teacher, student, params, GridSpec { x_min: -1.0, x_max: 1.0, n: 10 }).is_err());
        assert!(matches!(
            toy_loss(&teacher, student, params, GridSpec { x_min: -2.0, x_max: 2.0, n: 256 }),
            Err(Error::InsufficientCoverage { .. })
        ));
    }
}
