//! Independent reference implementations used by the integration tests.
//!
//! Everything here works on plain probabilities with textbook formulas, so it
//! shares no code paths with the log-domain library routines it checks.

#![allow(dead_code)]

use amid::simplex::{rng_from_seed, LogCategorical, SeededRng};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

pub fn cat(p: &[f64]) -> LogCategorical {
    LogCategorical::from_probs(p).unwrap()
}

pub fn rng(seed: u64) -> SeededRng {
    rng_from_seed(seed)
}

/// Dirichlet draw with every entry at least `floor` before renormalizing.
pub fn dirichlet(rng: &mut SeededRng, k: usize, concentration: f64, floor: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).unwrap();
    let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(floor)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// `(p, q, lambda)` with strictly positive entries.
pub fn random_triple(rng: &mut SeededRng, k: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let p = dirichlet(rng, k, 1.0, 1e-12);
    let q = dirichlet(rng, k, 1.0, 1e-12);
    (p, q, rng.random_range(0.0..=1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

/// `lambda p + (1 - lambda) q`.
pub fn arithmetic_mixture(p: &[f64], q: &[f64], lambda: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect()
}

/// Normalized `p^lambda q^(1 - lambda)`.
pub fn geometric_mixture(p: &[f64], q: &[f64], lambda: f64) -> Vec<f64> {
    normalized(p.iter().zip(q).map(|(a, b)| a.powf(lambda) * b.powf(1.0 - lambda)).collect())
}

/// Normalized power mean of `p` and `q` for `alpha != 1`.
pub fn power_mixture(p: &[f64], q: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
    let s = (1.0 - alpha) / 2.0;
    normalized(p.iter().zip(q).map(|(a, b)| (lambda * a.powf(s) + (1.0 - lambda) * b.powf(s)).powf(1.0 / s)).collect())
}

pub fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    normalized(theta.iter().map(|t| (t - m).exp()).collect())
}

/// `sum p ln(p / q)` with `0 ln 0 = 0`.
pub fn kl_plain(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Alpha-divergence on strictly positive inputs, with the KL limits at `alpha = -1, 1`.
pub fn alpha_div_plain(p: &[f64], q: &[f64], alpha: f64) -> f64 {
    if alpha == -1.0 {
        return kl_plain(p, q);
    }
    if alpha == 1.0 {
        return kl_plain(q, p);
    }
    let s: f64 = p.iter().zip(q).map(|(a, b)| a.powf((1.0 - alpha) / 2.0) * b.powf((1.0 + alpha) / 2.0)).sum();
    4.0 / (1.0 - alpha * alpha) * (1.0 - s)
}

/// Every point of the simplex in three dimensions with coordinates on a `1/n` lattice.
pub fn simplex_grid3(n: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let a = i as f64 / n as f64;
            let b = j as f64 / n as f64;
            out.push([a, b, (1.0 - a - b).max(0.0)]);
        }
    }
    out
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Projected gradient descent with backtracking on a smooth objective over the
/// simplex, kept `floor` away from the boundary. Gradients are central differences.
pub fn projected_gradient_descent<F>(objective: F, start: &[f64], iterations: usize, floor: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let k = start.len();
    let clamp = |v: Vec<f64>| -> Vec<f64> {
        let lifted: Vec<f64> = project_simplex(&v).into_iter().map(|x| x.max(floor)).collect();
        normalized(lifted)
    };
    let mut x = clamp(start.to_vec());
    let mut fx = objective(&x);
    let mut step = 0.1;
    for _ in 0..iterations {
        let h = 1e-7;
        let grad: Vec<f64> = (0..k)
            .map(|j| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[j] += h;
                down[j] -= h;
                (objective(&up) - objective(&down)) / (2.0 * h)
            })
            .collect();
        loop {
            let candidate = clamp(x.iter().zip(&grad).map(|(a, g)| a - step * g).collect());
            let fc = objective(&candidate);
            if fc <= fx {
                x = candidate;
                fx = fc;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                return (x, fx);
            }
        }
    }
    (x, fx)
}
