//! The AMiD loss over a softmax-parameterized student and its gradient.
//!
//! The student is `q = softmax(theta)`. The loss aligns the assistant
//! `r = r^(alpha, lambda)(p, q)` with either the teacher (`D(p || r)`) or the
//! student (`D(q || r)`). For an f-divergence on the teacher side the gradient
//! has the closed form
//!
//! ```text
//! grad_theta D_f(p || r) = E_r[ w (psi_f(p/r) - E_r[psi_f(p/r)]) grad_theta ln q ]
//! w = (1 - lambda) q^s / (lambda p^s + (1 - lambda) q^s),   s = (1 - alpha) / 2
//! ```
//!
//! with `d ln q(k) / d theta_j = 1{j = k} - q(j)`. Expectations are exact sums
//! over the vocabulary. The student side has no closed form here; callers use
//! [`finite_diff_grad`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{f_div, Divergence, FGenerator};
use crate::error::{ensure_same_len, Error, Result};
use crate::fmean::{is_alpha_one, power_exponent};
use crate::mixture::{alpha_mixture, AlphaLambda};
use crate::simplex::{dirichlet_probs, logaddexp, normalize, rng_from_seed, LogCategorical};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-6;
/// Floor added to the denominator of the relative gradient error.
pub const REL_ERR_FLOOR: f64 = 1e-8;
/// Pass threshold on the relative gradient error.
pub const GRAD_REL_TOL: f64 = 1e-5;
/// Max-norm threshold for gradients that must vanish.
pub const ZERO_GRAD_TOL: f64 = 1e-9;

/// Unnormalized student log-weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentLogits(Vec<f64>);

impl StudentLogits {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::TooShort { min: 2, got: theta.len() });
        }
        if let Some((index, &value)) = theta.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self(theta))
    }

    /// Logits whose softmax is `p`; requires full support.
    pub fn matching(p: &LogCategorical) -> Result<Self> {
        Self::new(p.log_probs().to_vec())
    }

    pub fn zeros(k: usize) -> Result<Self> {
        Self::new(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `softmax(theta)`.
    pub fn probs(&self) -> LogCategorical {
        normalize(&self.0).expect("finite logits always normalize")
    }
}

/// Which side the assistant distribution is aligned with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `D(p || r)`.
    #[serde(rename = "teacher")]
    TeacherSide,
    /// `D(q || r)`.
    #[serde(rename = "student")]
    StudentSide,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::TeacherSide => write!(f, "teacher"),
            Direction::StudentSide => write!(f, "student"),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher" => Ok(Direction::TeacherSide),
            "student" => Ok(Direction::StudentSide),
            other => Err(Error::Config(format!("direction must be teacher or student, got {other:?}"))),
        }
    }
}

/// AMiD loss for an f-divergence generator.
pub fn amid_loss(
    p: &LogCategorical,
    theta: &StudentLogits,
    params: AlphaLambda,
    gen: &FGenerator,
    direction: Direction,
) -> Result<f64> {
    ensure_same_len(p.len(), theta.len())?;
    let q = theta.probs();
    let r = alpha_mixture(p, &q, params)?.r;
    match direction {
        Direction::TeacherSide => f_div(p, &r, gen),
        Direction::StudentSide => f_div(&q, &r, gen),
    }
}

/// AMiD loss for any named divergence.
pub fn amid_loss_with(
    p: &LogCategorical,
    theta: &StudentLogits,
    params: AlphaLambda,
    divergence: &Divergence,
    direction: Direction,
) -> Result<f64> {
    ensure_same_len(p.len(), theta.len())?;
    let q = theta.probs();
    let r = alpha_mixture(p, &q, params)?.r;
    match direction {
        Direction::TeacherSide => divergence.eval(p, &r),
        Direction::StudentSide => divergence.eval(&q, &r),
    }
}

/// Per-entry share `w` of the student in the mixture's sensitivity, in `[0, 1]`.
pub fn mixture_weight_w(p: &LogCategorical, q: &LogCategorical, params: AlphaLambda) -> Result<Vec<f64>> {
    ensure_same_len(p.len(), q.len())?;
    let lambda = params.lambda();
    let ninf = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(p.len());
    for (index, (&a, &b)) in p.log_probs().iter().zip(q.log_probs()).enumerate() {
        if a == ninf && b == ninf {
            return Err(Error::IndeterminateWeight { index });
        }
        let w = if lambda == 0.0 {
            1.0
        } else if lambda == 1.0 {
            0.0
        } else if is_alpha_one(params.alpha()) {
            1.0 - lambda
        } else {
            let s = power_exponent(params.alpha());
            if b == ninf {
                // q^s -> 0 for s > 0 and -> inf for s < 0.
                if s > 0.0 {
                    0.0
                } else {
                    1.0
                }
            } else {
                let student = (1.0 - lambda).ln() + s * b;
                let teacher = lambda.ln() + s * a;
                (student - logaddexp(teacher, student)).exp()
            }
        };
        out.push(w);
    }
    Ok(out)
}

/// `psi_f(p / r) - E_r[psi_f(p / r)]` on `supp(r)`, zero off it.
pub fn centered_psi(p: &LogCategorical, r: &LogCategorical, gen: &FGenerator) -> Result<Vec<f64>> {
    ensure_same_len(p.len(), r.len())?;
    let mut psi = vec![0.0; p.len()];
    let mut mean = 0.0;
    for (index, (&a, &lr)) in p.log_probs().iter().zip(r.log_probs()).enumerate() {
        if lr == f64::NEG_INFINITY {
            continue;
        }
        let v = (a - lr).exp();
        let value = gen.psi(v);
        if !value.is_finite() {
            return Err(Error::SupportViolation { index });
        }
        psi[index] = value;
        mean += lr.exp() * value;
    }
    for (value, &lr) in psi.iter_mut().zip(r.log_probs()) {
        if lr > f64::NEG_INFINITY {
            *value -= mean;
        }
    }
    Ok(psi)
}

/// Closed-form gradient of `D_f(p || r)` with respect to the student logits.
pub fn amid_grad_analytic(
    p: &LogCategorical,
    theta: &StudentLogits,
    params: AlphaLambda,
    gen: &FGenerator,
) -> Result<Vec<f64>> {
    ensure_same_len(p.len(), theta.len())?;
    let q = theta.probs();
    let r = alpha_mixture(p, &q, params)?.r;
    // The loss itself must be finite for the gradient to mean anything.
    f_div(p, &r, gen)?;
    let w = mixture_weight_w(p, &q, params)?;
    let centered = centered_psi(p, &r, gen)?;
    let coeff: Vec<f64> = r
        .log_probs()
        .iter()
        .zip(&w)
        .zip(&centered)
        .map(|((&lr, &wk), &c)| if lr == f64::NEG_INFINITY { 0.0 } else { lr.exp() * wk * c })
        .collect();
    let total: f64 = coeff.iter().sum();
    Ok(coeff.iter().zip(q.log_probs()).map(|(&c, &lq)| c - lq.exp() * total).collect())
}

/// Central differences `(L(theta + h e_j) - L(theta - h e_j)) / 2h`.
pub fn finite_diff_grad<F>(mut loss: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = theta.to_vec();
    let mut eval = |x: &[f64]| match loss(x) {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonFiniteLoss),
    };
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let plus = eval(&probe)?;
        probe[j] = theta[j] - h;
        let minus = eval(&probe)?;
        probe[j] = theta[j];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Side-by-side analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_err: f64,
    /// `max_abs_err / (REL_ERR_FLOOR + max(|analytic|_inf, |numeric|_inf))`.
    pub max_rel_err: f64,
}

impl GradReport {
    pub fn from_pair(analytic: Vec<f64>, numeric: Vec<f64>) -> Self {
        let max_abs_err = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
        let scale = max_norm(&analytic).max(max_norm(&numeric));
        Self { analytic, numeric, max_abs_err, max_rel_err: max_abs_err / (REL_ERR_FLOOR + scale) }
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs both gradient paths at `theta` with step [`FD_STEP`].
pub fn grad_check(
    p: &LogCategorical,
    theta: &StudentLogits,
    params: AlphaLambda,
    gen: &FGenerator,
) -> Result<GradReport> {
    let analytic = amid_grad_analytic(p, theta, params, gen)?;
    let numeric = finite_diff_grad(
        |x| amid_loss(p, &StudentLogits::new(x.to_vec())?, params, gen, Direction::TeacherSide),
        theta.as_slice(),
        FD_STEP,
    )?;
    Ok(GradReport::from_pair(analytic, numeric))
}

/// What a suite case is meant to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Random teacher and student; judged on relative error.
    Random,
    /// Random teacher with a few hard zeros; judged on relative error.
    HardZeros,
    /// Student equal to the teacher; both gradients must vanish.
    Identical,
    /// `lambda = 1`; both gradients must vanish.
    LambdaOne,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub id: usize,
    pub kind: CaseKind,
    pub k: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub generator: FGenerator,
    pub seed: u64,
}

impl GradCheckCase {
    /// Draws the teacher and student logits for this case from its seed.
    pub fn instance(&self) -> (LogCategorical, StudentLogits) {
        let mut rng = rng_from_seed(self.seed);
        let mut probs = dirichlet_probs(&mut rng, self.k, 1.0, 1e-12);
        if self.kind == CaseKind::HardZeros {
            let zeros = (self.k / 4).max(1);
            for slot in probs.iter_mut().take(zeros) {
                *slot = 0.0;
            }
        }
        let p = LogCategorical::from_probs(&probs).expect("dirichlet draw is a distribution");
        let theta = if self.kind == CaseKind::Identical {
            // Shifted logits of a full-support teacher reproduce it exactly.
            p.log_probs().iter().map(|l| l + 0.75).collect()
        } else {
            (0..self.k).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        (p, StudentLogits::new(theta).expect("finite logits"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaseStatus {
    Passed,
    Failed {
        reason: String,
    },
    /// The loss is infinite at this instance; reported, not judged.
    NonFinite {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub case: GradCheckCase,
    pub status: CaseStatus,
    pub report: Option<GradReport>,
}

pub const SUITE_KS: [usize; 3] = [3, 17, 64];
pub const SUITE_ALPHAS: [f64; 5] = [-5.0, -1.0, 0.0, 0.5, 1.0];
pub const SUITE_LAMBDAS: [f64; 3] = [0.05, 0.3, 0.9];
/// Number of randomized cases in [`default_suite`].
pub const SUITE_RANDOM_CASES: usize = 100;

/// 100 randomized cases cycling over the K, alpha, lambda and generator
/// grids (every seventh teacher carries hard zeros), followed by vanishing-gradient
/// controls for `p = q` and `lambda = 1`.
pub fn default_suite(seed: u64) -> Vec<GradCheckCase> {
    let gens = FGenerator::shipped();
    let mut cases = Vec::new();
    for i in 0..SUITE_RANDOM_CASES {
        cases.push(GradCheckCase {
            id: i,
            kind: if i % 7 == 3 { CaseKind::HardZeros } else { CaseKind::Random },
            k: SUITE_KS[i % 3],
            alpha: SUITE_ALPHAS[i % 5],
            lambda: SUITE_LAMBDAS[(i / 5) % 3],
            generator: gens[(i / 15) % 3],
            seed: seed.wrapping_add(i as u64),
        });
    }
    let mut id = SUITE_RANDOM_CASES;
    for (j, &k) in SUITE_KS.iter().enumerate() {
        for kind in [CaseKind::Identical, CaseKind::LambdaOne] {
            cases.push(GradCheckCase {
                id,
                kind,
                k,
                alpha: SUITE_ALPHAS[(j + id) % 5],
                lambda: if kind == CaseKind::LambdaOne { 1.0 } else { SUITE_LAMBDAS[j] },
                generator: gens[j],
                seed: seed.wrapping_add(id as u64),
            });
            id += 1;
        }
    }
    cases
}

/// One `lambda = 1` control per (K, alpha) pair.
pub fn lambda_one_suite(seed: u64) -> Vec<GradCheckCase> {
    let gens = FGenerator::shipped();
    let mut cases = Vec::new();
    for &k in &SUITE_KS {
        for &alpha in &SUITE_ALPHAS {
            let id = cases.len();
            cases.push(GradCheckCase {
                id,
                kind: CaseKind::LambdaOne,
                k,
                alpha,
                lambda: 1.0,
                generator: gens[id % 3],
                seed: seed.wrapping_add(id as u64),
            });
        }
    }
    cases
}

/// Evaluates one case; `negate_analytic` flips the analytic gradient as a
/// negative control for the checker itself.
pub fn run_case(case: &GradCheckCase, negate_analytic: bool) -> CaseOutcome {
    let (p, theta) = case.instance();
    let params = match AlphaLambda::new(case.alpha, case.lambda) {
        Ok(params) => params,
        Err(e) => {
            return CaseOutcome {
                case: case.clone(),
                status: CaseStatus::Failed { reason: e.to_string() },
                report: None,
            }
        }
    };
    let report = match grad_check(&p, &theta, params, &case.generator) {
        Ok(report) => report,
        Err(e @ (Error::SupportViolation { .. } | Error::NonFiniteLoss)) => {
            return CaseOutcome {
                case: case.clone(),
                status: CaseStatus::NonFinite { reason: e.to_string() },
                report: None,
            }
        }
        Err(e) => {
            return CaseOutcome {
                case: case.clone(),
                status: CaseStatus::Failed { reason: e.to_string() },
                report: None,
            }
        }
    };
    let report = if negate_analytic {
        GradReport::from_pair(report.analytic.iter().map(|g| -g).collect(), report.numeric)
    } else {
        report
    };
    let status = match case.kind {
        CaseKind::Random | CaseKind::HardZeros => {
            if report.max_rel_err <= GRAD_REL_TOL {
                CaseStatus::Passed
            } else {
                CaseStatus::Failed { reason: format!("max_rel_err {:e} > {GRAD_REL_TOL:e}", report.max_rel_err) }
            }
        }
        CaseKind::Identical | CaseKind::LambdaOne => {
            let worst = max_norm(&report.analytic).max(max_norm(&report.numeric));
            if worst <= ZERO_GRAD_TOL {
                CaseStatus::Passed
            } else {
                CaseStatus::Failed { reason: format!("gradient norm {worst:e} > {ZERO_GRAD_TOL:e}") }
            }
        }
    };
    CaseOutcome { case: case.clone(), status, report: Some(report) }
}

/// Runs every case in parallel; output order follows `cases`.
pub fn run_suite(cases: &[GradCheckCase], negate_analytic: bool) -> Vec<CaseOutcome> {
    cases.par_iter().map(|c| run_case(c, negate_analytic)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(p: &[f64]) -> LogCategorical {
        LogCategorical::from_probs(p).unwrap()
    }

    fn params(alpha: f64, lambda: f64) -> AlphaLambda {
        AlphaLambda::new(alpha, lambda).unwrap()
    }

    #[test]
    fn student_logits_validation() {
        assert!(StudentLogits::new(vec![0.0]).is_err());
        assert!(StudentLogits::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(matches!(StudentLogits::matching(&cat(&[1.0, 0.0])), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn loss_vanishes_at_the_teacher() {
        let p = cat(&[0.2, 0.5, 0.3]);
        let theta = StudentLogits::matching(&p).unwrap();
        for gen in FGenerator::shipped() {
            for dir in [Direction::TeacherSide, Direction::StudentSide] {
                for (alpha, lambda) in [(-3.0, 0.1), (1.0, 0.5), (0.5, 0.9)] {
                    let v = amid_loss(&p, &theta, params(alpha, lambda), &gen, dir).unwrap();
                    assert!(v.abs() < 1e-14, "{} {dir}: {v}", gen.name());
                }
            }
        }
    }

    #[test]
    fn loss_special_cases() {
        let p = cat(&[0.2, 0.5, 0.3]);
        let theta = StudentLogits::new(vec![0.4, -0.3, 1.1]).unwrap();
        let q = theta.probs();
        let at_zero = amid_loss(&p, &theta, params(2.0, 0.0), &FGenerator::kl(), Direction::TeacherSide).unwrap();
        assert!((at_zero - crate::divergence::kl(&p, &q).unwrap()).abs() < 1e-14);
        let skew = amid_loss(&p, &theta, params(-1.0, 0.1), &FGenerator::kl(), Direction::TeacherSide).unwrap();
        assert!((skew - crate::divergence::skew_kl(&p, &q, 0.1).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn weight_examples() {
        let p = cat(&[0.8, 0.2]);
        let q = cat(&[0.2, 0.8]);
        let w = mixture_weight_w(&p, &q, params(-1.0, 0.5)).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
        for alpha in [-4.0, 0.0, 1.0, 3.0] {
            assert!(mixture_weight_w(&p, &q, params(alpha, 0.0)).unwrap().iter().all(|&x| x == 1.0));
            assert!(mixture_weight_w(&p, &q, params(alpha, 1.0)).unwrap().iter().all(|&x| x == 0.0));
            for x in mixture_weight_w(&p, &p, params(alpha, 0.3)).unwrap() {
                assert!((x - 0.7).abs() < 1e-15);
            }
        }
        let a = cat(&[0.5, 0.5, 0.0]);
        let b = cat(&[0.5, 0.5, 0.0]);
        assert_eq!(mixture_weight_w(&a, &b, params(0.0, 0.5)), Err(Error::IndeterminateWeight { index: 2 }));
    }

    #[test]
    fn weight_with_one_sided_zero() {
        let p = cat(&[0.0, 1.0]);
        let q = cat(&[0.5, 0.5]);
        // s > 0: the teacher contributes nothing where it is zero.
        assert_eq!(mixture_weight_w(&p, &q, params(-1.0, 0.5)).unwrap()[0], 1.0);
        // s < 0: 0^s blows up and the teacher dominates.
        assert_eq!(mixture_weight_w(&p, &q, params(3.0, 0.5)).unwrap()[0], 0.0);
    }

    #[test]
    fn gradient_vanishes_at_fixed_point_and_lambda_one() {
        let p = cat(&[0.1, 0.2, 0.3, 0.4]);
        let theta = StudentLogits::matching(&p).unwrap();
        let g = amid_grad_analytic(&p, &theta, params(-2.0, 0.4), &FGenerator::kl()).unwrap();
        assert!(max_norm(&g) < 1e-15);
        let other = StudentLogits::new(vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let g = amid_grad_analytic(&p, &other, params(0.3, 1.0), &FGenerator::rkl()).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn finite_diff_on_quadratic() {
        let g = finite_diff_grad(|x| Ok(x.iter().map(|v| v * v).sum()), &[1.0, -2.0], 1e-6).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] + 4.0).abs() < 1e-6);
        let g = finite_diff_grad(|_| Ok(3.5), &[0.1, 0.2, 0.3], 1e-6).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(finite_diff_grad(|x| Ok(x[0].ln()), &[0.0], 1e-6).unwrap_err(), Error::NonFiniteLoss);
        assert!(finite_diff_grad(|_| Ok(0.0), &[0.0], 0.0).is_err());
    }

    #[test]
    fn analytic_matches_finite_differences_k7() {
        let mut rng = rng_from_seed(2024);
        let p = LogCategorical::from_probs(&dirichlet_probs(&mut rng, 7, 1.0, 0.0)).unwrap();
        let theta = StudentLogits::new((0..7).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
        let report = grad_check(&p, &theta, params(-2.5, 0.3), &FGenerator::kl()).unwrap();
        assert!(report.max_rel_err <= 1e-5, "{report:?}");
    }

    #[test]
    fn centered_psi_has_zero_mean_under_r() {
        let p = cat(&[0.05, 0.15, 0.3, 0.5]);
        let q = cat(&[0.4, 0.3, 0.2, 0.1]);
        for gen in FGenerator::shipped() {
            for alpha in [-3.0, 0.0, 1.0, 2.0] {
                let r = alpha_mixture(&p, &q, params(alpha, 0.35)).unwrap().r;
                let c = centered_psi(&p, &r, &gen).unwrap();
                let mean: f64 = c.iter().zip(r.probs()).map(|(x, rk)| x * rk).sum();
                assert!(mean.abs() < 1e-12, "{} alpha={alpha}: {mean}", gen.name());
            }
        }
    }

    #[test]
    fn direction_parsing() {
        assert_eq!("teacher".parse::<Direction>().unwrap(), Direction::TeacherSide);
        assert_eq!("student".parse::<Direction>().unwrap(), Direction::StudentSide);
        assert!("both".parse::<Direction>().is_err());
    }

    #[test]
    fn negated_gradient_fails_the_suite() {
        let cases: Vec<_> = default_suite(5).into_iter().take(6).collect();
        let outcomes = run_suite(&cases, true);
        assert!(outcomes.iter().any(|o| matches!(o.status, CaseStatus::Failed { .. })));
    }
}
