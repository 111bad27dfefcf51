mod common;

use amid::divergence::{ab_div, alpha_div, f_div, gjs, kl, rkl, skew_kl, skew_rkl, ABParams, Divergence, FGenerator};
use amid::mixture::{alpha_mixture, AlphaLambda};
use common::*;

/// 50-digit reference for `a = 0.2, b = 0.7`, `p = [0.5, 0.5]`, `q = [0.9, 0.1]`.
const AB_GOLDEN: f64 = 0.436_778_270_961_102_15;

#[test]
fn ab_divergence_golden_value() {
    let v = ab_div(&cat(&[0.5, 0.5]), &cat(&[0.9, 0.1]), ABParams::new(0.2, 0.7).unwrap()).unwrap();
    assert!((v - AB_GOLDEN).abs() <= 1e-14 * AB_GOLDEN, "{v} vs {AB_GOLDEN}");
}

fn random_pairs(seed: u64, n: usize) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let mut rng = rng(seed);
    (0..n).map(|i| random_triple(&mut rng, 2 + i % 12)).collect()
}

#[test]
fn every_named_divergence_is_nonnegative_and_vanishes_on_identical_inputs() {
    let names = [
        "kl",
        "rkl",
        "jeffreys",
        "skl:0.1",
        "srkl:0.3",
        "gjs:0.5",
        "alpha:-3",
        "alpha:0",
        "alpha:0.5",
        "alpha:2",
        "ab:0.2,0.7",
    ];
    let divs: Vec<Divergence> = names.iter().map(|n| n.parse().unwrap()).collect();
    for (p, q, _) in random_pairs(1, 1000) {
        let (pc, qc) = (cat(&p), cat(&q));
        for (name, d) in names.iter().zip(&divs) {
            let v = d.eval(&pc, &qc).unwrap();
            assert!(v >= -1e-12, "{name}: {v}");
            let zero = d.eval(&pc, &pc).unwrap();
            assert!(zero.abs() <= 1e-12, "{name}: D(p, p) = {zero}");
        }
    }
}

#[test]
fn ab_divergence_is_nonnegative_on_random_pairs() {
    let params = ABParams::new(0.2, 0.7).unwrap();
    for (p, q, _) in random_pairs(2, 1000) {
        assert!(ab_div(&cat(&p), &cat(&q), params).unwrap() >= -1e-12);
    }
}

#[test]
fn divergences_match_plain_formulas() {
    for (p, q, lambda) in random_pairs(3, 300) {
        let (pc, qc) = (cat(&p), cat(&q));
        let scale = |x: f64| 1e-12 * x.abs().max(1.0);
        let want = kl_plain(&p, &q);
        assert!((kl(&pc, &qc).unwrap() - want).abs() <= scale(want));
        let want = kl_plain(&q, &p);
        assert!((rkl(&pc, &qc).unwrap() - want).abs() <= scale(want));
        let m = arithmetic_mixture(&p, &q, lambda);
        let want = lambda * kl_plain(&p, &m) + (1.0 - lambda) * kl_plain(&q, &m);
        assert!((gjs(&pc, &qc, lambda).unwrap() - want).abs() <= scale(want));
        for alpha in [-4.0, -0.5, 0.0, 0.7, 3.0] {
            let want = alpha_div_plain(&p, &q, alpha);
            let got = alpha_div(&pc, &qc, alpha).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-3), "alpha={alpha}: {got} vs {want}");
        }
    }
}

#[test]
fn f_divergences_agree_with_the_named_forms() {
    for (p, q, _) in random_pairs(4, 500) {
        let (pc, qc) = (cat(&p), cat(&q));
        let k = kl(&pc, &qc).unwrap();
        let r = rkl(&pc, &qc).unwrap();
        assert!((f_div(&pc, &qc, &FGenerator::kl()).unwrap() - k).abs() <= 1e-12 * k.max(1.0));
        assert!((f_div(&pc, &qc, &FGenerator::rkl()).unwrap() - r).abs() <= 1e-12 * r.max(1.0));
        assert!((f_div(&pc, &qc, &FGenerator::jeffreys()).unwrap() - (k + r)).abs() <= 1e-12 * (k + r).max(1.0));
    }
}

#[test]
fn skew_divergences_compose_with_the_mixture() {
    for (p, q, lambda) in random_pairs(5, 500) {
        let (pc, qc) = (cat(&p), cat(&q));
        let m = alpha_mixture(&pc, &qc, AlphaLambda::new(-1.0, lambda).unwrap()).unwrap().r;
        assert_eq!(skew_kl(&pc, &qc, lambda).unwrap().to_bits(), kl(&pc, &m).unwrap().to_bits());
        assert_eq!(skew_rkl(&pc, &qc, lambda).unwrap().to_bits(), kl(&qc, &m).unwrap().to_bits());
        let split = lambda * skew_kl(&pc, &qc, lambda).unwrap() + (1.0 - lambda) * skew_rkl(&pc, &qc, lambda).unwrap();
        assert!((gjs(&pc, &qc, lambda).unwrap() - split).abs() <= 1e-12);
    }
}

#[test]
fn gjs_is_symmetric_at_one_half() {
    for (p, q, _) in random_pairs(6, 200) {
        let (pc, qc) = (cat(&p), cat(&q));
        assert!((gjs(&pc, &qc, 0.5).unwrap() - gjs(&qc, &pc, 0.5).unwrap()).abs() <= 1e-14);
    }
}

fn log_grid() -> Vec<f64> {
    (0..=240).map(|i| 10f64.powf(-6.0 + i as f64 * 0.05)).collect()
}

#[test]
fn generators_are_convex_and_consistent() {
    for gen in FGenerator::shipped() {
        assert!(gen.f(1.0).abs() <= 1e-12, "{}", gen.name());
        let grid = log_grid();
        for w in grid.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            // Second divided difference on a non-uniform grid.
            let second = ((gen.f(c) - gen.f(b)) / (c - b) - (gen.f(b) - gen.f(a)) / (b - a)) / (c - a);
            assert!(second >= -1e-9, "{} not convex near {b}", gen.name());
        }
        for &v in &grid {
            let want = gen.f(v) - v * gen.f_prime(v);
            assert!((gen.psi(v) - want).abs() <= 1e-10 * want.abs().max(1.0), "{} psi at {v}", gen.name());
            let h = 1e-6 * v;
            let numeric = (gen.f(v + h) - gen.f(v - h)) / (2.0 * h);
            let analytic = gen.f_prime(v);
            assert!((numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1.0), "{} f' at {v}", gen.name());
        }
    }
}

#[test]
fn alpha_divergence_is_continuous_across_branch_points() {
    for (p, q, _) in random_pairs(8, 200) {
        let (pc, qc) = (cat(&p), cat(&q));
        for (branch, reference) in [(-1.0, kl(&pc, &qc).unwrap()), (1.0, rkl(&pc, &qc).unwrap())] {
            // The value drifts linearly away from the branch, so the tolerance scales with the offset.
            for (offset, rel) in [(1e-7, 1e-5), (-1e-7, 1e-5), (1e-5, 1e-3), (-1e-5, 1e-3)] {
                let v = alpha_div(&pc, &qc, branch + offset).unwrap();
                assert!((v - reference).abs() <= rel * reference.max(1e-12) + 1e-12, "alpha={}", branch + offset);
            }
        }
    }
}

#[test]
fn support_violations_are_reported_as_infinite() {
    let p = cat(&[0.5, 0.5]);
    let q = cat(&[1.0, 0.0]);
    assert!(kl(&p, &q).unwrap_err().is_support_violation());
    assert!(rkl(&q, &p).unwrap_err().is_support_violation());
    assert!(f_div(&p, &q, &FGenerator::kl()).unwrap_err().is_support_violation());
    assert!(alpha_div(&p, &q, -2.0).unwrap_err().is_support_violation());
    assert!(alpha_div(&p, &q, 0.0).is_ok());
    assert!(gjs(&p, &q, 0.5).is_ok());
}
