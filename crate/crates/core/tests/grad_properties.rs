mod common;

use amid::divergence::{skew_kl, FGenerator};
use amid::grad::{
    amid_grad_analytic, amid_loss, centered_psi, default_suite, max_norm, mixture_weight_w, run_suite, CaseKind,
    CaseStatus, Direction, StudentLogits,
};
use amid::mixture::{alpha_mixture, AlphaLambda};
use common::*;
use proptest::prelude::*;
use rand::Rng;

/// Teacher-side AMiD loss from plain probabilities: `sum r f(p / r)`.
fn plain_loss(p: &[f64], theta: &[f64], alpha: f64, lambda: f64, f: fn(f64) -> f64) -> f64 {
    let q = softmax(theta);
    let r = if alpha == 1.0 { geometric_mixture(p, &q, lambda) } else { power_mixture(p, &q, alpha, lambda) };
    r.iter().zip(p).map(|(ri, pi)| ri * f(pi / ri)).sum()
}

fn plain_fd(p: &[f64], theta: &[f64], alpha: f64, lambda: f64, f: fn(f64) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += h;
            down[j] -= h;
            (plain_loss(p, &up, alpha, lambda, f) - plain_loss(p, &down, alpha, lambda, f)) / (2.0 * h)
        })
        .collect()
}

type PlainGenerator = fn(f64) -> f64;

#[test]
fn analytic_gradient_matches_an_independent_loss() {
    let gens: [(FGenerator, PlainGenerator); 3] = [
        (FGenerator::kl(), |t| t * t.ln()),
        (FGenerator::rkl(), |t| -t.ln()),
        (FGenerator::jeffreys(), |t| (t - 1.0) * t.ln()),
    ];
    let mut rng = rng(31);
    for i in 0..60 {
        let k = 3 + i % 6;
        let p = dirichlet(&mut rng, k, 1.0, 1e-6);
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = [-2.5, -1.0, 0.0, 0.5, 1.0, 2.0][i % 6];
        let lambda = rng.random_range(0.05..0.95);
        let (gen, f) = &gens[i % 3];
        let params = AlphaLambda::new(alpha, lambda).unwrap();
        let analytic = amid_grad_analytic(&cat(&p), &StudentLogits::new(theta.clone()).unwrap(), params, gen).unwrap();
        let numeric = plain_fd(&p, &theta, alpha, lambda, *f);
        let scale = 1e-8 + max_norm(&numeric);
        let err = max_abs_diff(&analytic, &numeric) / scale;
        assert!(err <= 1e-6, "case {i} ({}, alpha {alpha}): rel err {err:e}", gen.name());
    }
}

#[test]
fn skew_kl_is_the_arithmetic_teacher_side_loss() {
    let mut rng = rng(12);
    for _ in 0..100 {
        let p = cat(&dirichlet(&mut rng, 7, 1.0, 1e-9));
        let theta = StudentLogits::new((0..7).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let params = AlphaLambda::new(-1.0, 0.1).unwrap();
        let loss = amid_loss(&p, &theta, params, &FGenerator::kl(), Direction::TeacherSide).unwrap();
        let want = skew_kl(&p, &theta.probs(), 0.1).unwrap();
        assert!((loss - want).abs() <= 1e-12 * want.max(1.0));
    }
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (2usize..10).prop_flat_map(|k| {
        (prop::collection::vec(1e-4f64..1.0, k), prop::collection::vec(1e-4f64..1.0, k), 0.0f64..=1.0).prop_map(
            |(p, q, lambda)| {
                let sp: f64 = p.iter().sum();
                let sq: f64 = q.iter().sum();
                (p.iter().map(|x| x / sp).collect(), q.iter().map(|x| x / sq).collect(), lambda)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn weights_stay_in_the_unit_interval((p, q, lambda) in instance(), alpha in -10.0f64..10.0) {
        let w = mixture_weight_w(&cat(&p), &cat(&q), AlphaLambda::new(alpha, lambda).unwrap()).unwrap();
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn weights_move_monotonically_in_alpha((p, q, lambda) in instance()) {
        let (pc, qc) = (cat(&p), cat(&q));
        let alphas: Vec<f64> = (0..=60).map(|i| -5.0 + i as f64 * 0.1).collect();
        let ws: Vec<Vec<f64>> = alphas
            .iter()
            .map(|&a| mixture_weight_w(&pc, &qc, AlphaLambda::new(a, lambda).unwrap()).unwrap())
            .collect();
        for k in 0..p.len() {
            for pair in ws.windows(2) {
                let step = pair[1][k] - pair[0][k];
                if p[k] > q[k] {
                    prop_assert!(step >= -1e-12, "entry {} decreased by {}", k, step);
                } else if p[k] < q[k] {
                    prop_assert!(step <= 1e-12, "entry {} increased by {}", k, step);
                }
            }
        }
    }

    #[test]
    fn centered_psi_has_zero_mean((p, q, lambda) in instance(), alpha in -5.0f64..3.0, g in 0usize..3) {
        let gen = FGenerator::shipped()[g];
        let (pc, qc) = (cat(&p), cat(&q));
        let r = alpha_mixture(&pc, &qc, AlphaLambda::new(alpha, lambda).unwrap()).unwrap().r;
        let c = centered_psi(&pc, &r, &gen).unwrap();
        let mean: f64 = r.probs().iter().zip(&c).map(|(ri, ci)| ri * ci).sum();
        let scale = c.iter().map(|x| x.abs()).fold(1.0, f64::max);
        prop_assert!(mean.abs() <= 1e-12 * scale, "mean {}", mean);
    }
}

#[test]
fn seeded_suite_passes_every_finite_case() {
    let outcomes = run_suite(&default_suite(2024), false);
    let random = outcomes.iter().filter(|o| matches!(o.case.kind, CaseKind::Random | CaseKind::HardZeros)).count();
    assert_eq!(random, 100);
    for o in &outcomes {
        match &o.status {
            CaseStatus::Passed => {}
            CaseStatus::NonFinite { .. } => assert_eq!(o.case.kind, CaseKind::HardZeros, "case {}", o.case.id),
            CaseStatus::Failed { reason } => panic!("case {} failed: {reason}", o.case.id),
        }
    }
    let ks: std::collections::BTreeSet<usize> = outcomes.iter().map(|o| o.case.k).collect();
    assert_eq!(ks.into_iter().collect::<Vec<_>>(), vec![3, 17, 64]);
}

#[test]
fn suite_is_reproducible() {
    let a = serde_json::to_string(&run_suite(&default_suite(7), false)).unwrap();
    let b = serde_json::to_string(&run_suite(&default_suite(7), false)).unwrap();
    assert_eq!(a, b);
}
