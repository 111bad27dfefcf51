use serde::Serialize;

use super::adam::{Adam, AdamConfig};
use super::STATIONARY_LOSS;
use crate::divergence::{Divergence, FGenerator};
use crate::error::{Error, Result};
use crate::grad::{amid_grad_analytic, amid_loss_with, finite_diff_grad, Direction, StudentLogits, FD_STEP};
use crate::mixture::AlphaLambda;
use crate::simplex::{total_variation, LogCategorical};

/// One recorded optimizer state: loss and `TV(p, q_theta)` before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainPoint {
    pub step: usize,
    pub loss: f64,
    pub tv: f64,
}

/// Outcome of [`fit_simplex`]. A diverged run keeps the trajectory up to the
/// failure and records the error instead of discarding it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexFit {
    pub trajectory: Vec<TrainPoint>,
    pub theta: StudentLogits,
    #[serde(serialize_with = "super::serialize_error")]
    pub diverged: Option<Error>,
}

impl SimplexFit {
    pub fn last(&self) -> TrainPoint {
        *self.trajectory.last().expect("trajectory holds the initial state")
    }

    /// First recorded step with `tv < threshold`.
    pub fn steps_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.trajectory.iter().find(|pt| pt.tv < threshold).map(|pt| pt.step)
    }
}

/// Full-gradient Adam on the AMiD loss for an f-divergence generator.
pub fn fit_simplex(
    p: &LogCategorical,
    theta0: &StudentLogits,
    params: AlphaLambda,
    gen: &FGenerator,
    direction: Direction,
    opt: AdamConfig,
) -> Result<SimplexFit> {
    fit_simplex_with(p, theta0, params, &Divergence::from(*gen), direction, opt)
}

/// [`fit_simplex`] for any divergence. Teacher-side f-divergences use the
/// analytic gradient; everything else uses central differences.
pub fn fit_simplex_with(
    p: &LogCategorical,
    theta0: &StudentLogits,
    params: AlphaLambda,
    divergence: &Divergence,
    direction: Direction,
    opt: AdamConfig,
) -> Result<SimplexFit> {
    opt.validate()?;
    let analytic = match direction {
        Direction::TeacherSide => divergence.generator(),
        Direction::StudentSide => None,
    };
    let loss_at = |theta: &[f64]| -> Result<f64> {
        amid_loss_with(p, &StudentLogits::new(theta.to_vec())?, params, divergence, direction)
    };
    let gradient = |theta: &StudentLogits| -> Result<Vec<f64>> {
        match &analytic {
            Some(gen) => amid_grad_analytic(p, theta, params, gen),
            None => finite_diff_grad(loss_at, theta.as_slice(), FD_STEP),
        }
    };
    fit_objective(theta0, opt, |theta| Ok((loss_at(theta.as_slice())?, total_variation(p, &theta.probs())?)), gradient)
}

/// Generic full-gradient Adam loop over student logits. `eval` returns the
/// loss and the tracked distance for a state.
pub fn fit_objective<E, G>(theta0: &StudentLogits, opt: AdamConfig, mut eval: E, mut gradient: G) -> Result<SimplexFit>
where
    E: FnMut(&StudentLogits) -> Result<(f64, f64)>,
    G: FnMut(&StudentLogits) -> Result<Vec<f64>>,
{
    opt.validate()?;
    let (loss, tv) = eval(theta0)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut trajectory = Vec::with_capacity(opt.steps + 1);
    trajectory.push(TrainPoint { step: 0, loss, tv });
    let mut theta = theta0.clone();
    let mut params = theta.as_slice().to_vec();
    let mut adam = Adam::new(opt, params.len());
    let mut current = loss;
    for step in 1..=opt.steps {
        let failure = |reason: String| Error::DivergedLoss { step, reason };
        if current <= STATIONARY_LOSS {
            let last = *trajectory.last().expect("initial point recorded");
            trajectory.push(TrainPoint { step, ..last });
            continue;
        }
        let grad = match gradient(&theta) {
            Ok(g) if g.iter().all(|v| v.is_finite()) => g,
            Ok(_) => return Ok(diverged(trajectory, theta, failure("non-finite gradient".into()))),
            Err(e) => return Ok(diverged(trajectory, theta, failure(e.to_string()))),
        };
        adam.step(&mut params, &grad);
        theta = match StudentLogits::new(params.clone()) {
            Ok(t) => t,
            Err(e) => return Ok(diverged(trajectory, theta, failure(e.to_string()))),
        };
        match eval(&theta) {
            Ok((loss, tv)) if loss.is_finite() => {
                current = loss;
                trajectory.push(TrainPoint { step, loss, tv })
            }
            Ok(_) => return Ok(diverged(trajectory, theta, failure("non-finite loss".into()))),
            Err(e) => return Ok(diverged(trajectory, theta, failure(e.to_string()))),
        }
    }
    Ok(SimplexFit { trajectory, theta, diverged: None })
}

fn diverged(trajectory: Vec<TrainPoint>, theta: StudentLogits, error: Error) -> SimplexFit {
    log::debug!("{error}");
    SimplexFit { trajectory, theta, diverged: Some(error) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starting_at_the_teacher_stays_there() {
        let p = LogCategorical::from_probs(&[0.1, 0.6, 0.3]).unwrap();
        let theta = StudentLogits::matching(&p).unwrap();
        let params = AlphaLambda::new(-2.0, 0.4).unwrap();
        for dir in [Direction::TeacherSide, Direction::StudentSide] {
            let fit =
                fit_simplex(&p, &theta, params, &FGenerator::kl(), dir, AdamConfig::simplex().with_steps(50)).unwrap();
            assert!(fit.diverged.is_none());
            assert_eq!(fit.trajectory.len(), 51);
            for pt in &fit.trajectory {
                assert!(pt.loss.abs() < 1e-14 && pt.tv < 1e-12, "{pt:?}");
            }
        }
    }

    #[test]
    fn short_fit_moves_towards_the_teacher() {
        let p = LogCategorical::from_probs(&[0.7, 0.2, 0.1]).unwrap();
        let theta = StudentLogits::zeros(3).unwrap();
        let params = AlphaLambda::new(-1.0, 0.3).unwrap();
        let fit = fit_simplex(
            &p,
            &theta,
            params,
            &FGenerator::kl(),
            Direction::TeacherSide,
            AdamConfig::simplex().with_steps(300),
        )
        .unwrap();
        assert!(fit.last().tv < 0.1 * fit.trajectory[0].tv);
        assert_eq!(fit.steps_to_threshold(f64::INFINITY), Some(0));
    }

    #[test]
    fn infinite_initial_loss_is_rejected() {
        let p = LogCategorical::from_probs(&[0.0, 0.5, 0.5]).unwrap();
        let theta = StudentLogits::zeros(3).unwrap();
        let params = AlphaLambda::new(-1.0, 0.5).unwrap();
        let err = fit_simplex(&p, &theta, params, &FGenerator::rkl(), Direction::TeacherSide, AdamConfig::simplex())
            .unwrap_err();
        assert!(err.is_support_violation());
    }
}
