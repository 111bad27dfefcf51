//! Divergences between categorical distributions.
//!
//! All functions take `(p, q)` and measure `D(p || q)` in nats. When the
//! value is `+inf` because `p` (or, for some families, `q`) puts mass outside
//! the other argument's support, the call returns
//! [`Error::SupportViolation`] carrying the first offending index instead of a
//! bare infinity. Trainers use that tag to report blow-ups.
//!
//! alpha-divergence convention:
//!
//! ```text
//! D_alpha(p || q) = 4 / (1 - alpha^2) * (1 - sum_k p^((1-alpha)/2) q^((1+alpha)/2))
//! ```
//!
//! so `alpha -> -1` gives `KL(p || q)` and `alpha -> 1` gives `KL(q || p)`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{ensure_same_len, Error, Result};
use crate::mixture::{alpha_mixture, AlphaLambda};
use crate::simplex::LogCategorical;

/// Half-width of the windows around `alpha = +-1` that use the KL branches.
pub const ALPHA_KL_TOL: f64 = 1e-6;

/// An f-divergence generator `f` with `f(1) = 0`, convex on `(0, inf)`.
///
/// `psi(v) = f(v) - v f'(v)` is the per-entry factor that appears in the
/// gradient of `D_f(p || r)` with respect to `r`. The two limits describe how
/// `q f(p / q)` behaves on the boundary of the simplex: `f_at_zero` is
/// `lim f(t)` as `t -> 0+` and `slope_at_infinity` is `lim f(t) / t` as
/// `t -> inf`. Either may be `+inf`.
#[derive(Clone, Copy)]
pub struct FGenerator {
    name: &'static str,
    f: fn(f64) -> f64,
    f_prime: fn(f64) -> f64,
    psi: fn(f64) -> f64,
    excess: Option<fn(f64) -> f64>,
    f_at_zero: f64,
    slope_at_infinity: f64,
}

impl fmt::Debug for FGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FGenerator").field("name", &self.name).finish()
    }
}

impl PartialEq for FGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Serialize for FGenerator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name)
    }
}

fn kl_f(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

fn kl_f_prime(t: f64) -> f64 {
    t.ln() + 1.0
}

fn kl_psi(v: f64) -> f64 {
    -v
}

fn kl_excess(u: f64) -> f64 {
    u * u.exp() - u.exp_m1()
}

fn rkl_f(t: f64) -> f64 {
    -t.ln()
}

fn rkl_f_prime(t: f64) -> f64 {
    -1.0 / t
}

fn rkl_psi(v: f64) -> f64 {
    1.0 - v.ln()
}

fn rkl_excess(u: f64) -> f64 {
    u.exp_m1() - u
}

fn jeffreys_f(t: f64) -> f64 {
    (t - 1.0) * t.ln()
}

fn jeffreys_f_prime(t: f64) -> f64 {
    t.ln() + 1.0 - 1.0 / t
}

fn jeffreys_psi(v: f64) -> f64 {
    1.0 - v - v.ln()
}

fn jeffreys_excess(u: f64) -> f64 {
    u * u.exp_m1()
}

impl FGenerator {
    /// Registers a custom generator. `psi` must equal `f(v) - v f'(v)`.
    pub fn new(
        name: &'static str,
        f: fn(f64) -> f64,
        f_prime: fn(f64) -> f64,
        psi: fn(f64) -> f64,
        f_at_zero: f64,
        slope_at_infinity: f64,
    ) -> Self {
        Self { name, f, f_prime, psi, excess: None, f_at_zero, slope_at_infinity }
    }

    /// Supplies an accurate `u -> f(e^u) - f'(1) (e^u - 1)`; see [`FGenerator::excess`].
    pub fn with_excess(self, excess: fn(f64) -> f64) -> Self {
        Self { excess: Some(excess), ..self }
    }

    /// `f(t) = t ln t`, giving `KL(p || q)`.
    pub fn kl() -> Self {
        Self::new("kl", kl_f, kl_f_prime, kl_psi, 0.0, f64::INFINITY).with_excess(kl_excess)
    }

    /// `f(t) = -ln t`, giving `KL(q || p)`.
    pub fn rkl() -> Self {
        Self::new("rkl", rkl_f, rkl_f_prime, rkl_psi, f64::INFINITY, 0.0).with_excess(rkl_excess)
    }

    /// `f(t) = (t - 1) ln t`, the symmetric sum `KL(p || q) + KL(q || p)`.
    pub fn jeffreys() -> Self {
        Self::new("jeffreys", jeffreys_f, jeffreys_f_prime, jeffreys_psi, f64::INFINITY, f64::INFINITY)
            .with_excess(jeffreys_excess)
    }

    /// Every generator shipped with the crate.
    pub fn shipped() -> [Self; 3] {
        [Self::kl(), Self::rkl(), Self::jeffreys()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::shipped().into_iter().find(|g| g.name == name)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn f_prime(&self, t: f64) -> f64 {
        (self.f_prime)(t)
    }

    pub fn psi(&self, v: f64) -> f64 {
        if v == 0.0 {
            // psi(0) = f(0) since v f'(v) -> 0 for the shipped generators.
            return self.f_at_zero;
        }
        (self.psi)(v)
    }

    /// `f(t) - f'(1) (t - 1)` at `t = e^u`: the generator shifted by its
    /// tangent at one, which is non-negative and vanishes to second order at
    /// `u = 0`.
    pub fn excess(&self, u: f64) -> f64 {
        match self.excess {
            Some(h) => h(u),
            None => {
                let t = u.exp();
                self.f(t) - self.f_prime(1.0) * u.exp_m1()
            }
        }
    }

    pub fn f_at_zero(&self) -> f64 {
        self.f_at_zero
    }

    pub fn slope_at_infinity(&self) -> f64 {
        self.slope_at_infinity
    }
}

/// `KL(p || q) = sum_k p(k) (ln p(k) - ln q(k))`, summed termwise as
/// `p ln(p/q) - p + q` so every term is non-negative.
pub fn kl(p: &LogCategorical, q: &LogCategorical) -> Result<f64> {
    ensure_same_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (index, (&a, &b)) in p.log_probs().iter().zip(q.log_probs()).enumerate() {
        if a == f64::NEG_INFINITY {
            total += b.exp();
            continue;
        }
        if b == f64::NEG_INFINITY {
            return Err(Error::SupportViolation { index });
        }
        total += b.exp() * kl_excess(a - b);
    }
    Ok(total)
}

/// `KL(q || p)`.
pub fn rkl(p: &LogCategorical, q: &LogCategorical) -> Result<f64> {
    kl(q, p)
}

/// `KL(p || lambda p + (1 - lambda) q)`.
pub fn skew_kl(p: &LogCategorical, q: &LogCategorical, lambda: f64) -> Result<f64> {
    let m = alpha_mixture(p, q, AlphaLambda::new(-1.0, lambda)?)?;
    kl(p, &m.r)
}

/// `KL(q || lambda p + (1 - lambda) q)`.
pub fn skew_rkl(p: &LogCategorical, q: &LogCategorical, lambda: f64) -> Result<f64> {
    let m = alpha_mixture(p, q, AlphaLambda::new(-1.0, lambda)?)?;
    kl(q, &m.r)
}

/// Generalized Jensen-Shannon: `lambda KL(p || m) + (1 - lambda) KL(q || m)`
/// with `m = lambda p + (1 - lambda) q`.
pub fn gjs(p: &LogCategorical, q: &LogCategorical, lambda: f64) -> Result<f64> {
    let m = alpha_mixture(p, q, AlphaLambda::new(-1.0, lambda)?)?;
    let mut total = 0.0;
    if lambda > 0.0 {
        total += lambda * kl(p, &m.r)?;
    }
    if lambda < 1.0 {
        total += (1.0 - lambda) * kl(q, &m.r)?;
    }
    Ok(total)
}

/// `beta p + gamma q - p^beta q^gamma` for `beta + gamma = 1`, both positive
/// inputs given as logs. Rewritten around `expm1` so that the small-exponent
/// side does not cancel catastrophically.
fn alpha_term(a: f64, b: f64, beta: f64, gamma: f64) -> f64 {
    let direct = || beta * a.exp() + gamma * b.exp() - (beta * a + gamma * b).exp();
    if beta.abs() <= gamma.abs() {
        let l = a - b;
        if l > 700.0 {
            return direct();
        }
        b.exp() * (beta * l.exp_m1() - (beta * l).exp_m1())
    } else {
        let l = b - a;
        if l > 700.0 {
            return direct();
        }
        a.exp() * (gamma * l.exp_m1() - (gamma * l).exp_m1())
    }
}

/// Amari alpha-divergence; see the module docs for the convention.
pub fn alpha_div(p: &LogCategorical, q: &LogCategorical, alpha: f64) -> Result<f64> {
    ensure_same_len(p.len(), q.len())?;
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
    }
    if (alpha + 1.0).abs() <= ALPHA_KL_TOL {
        return kl(p, q);
    }
    if (alpha - 1.0).abs() <= ALPHA_KL_TOL {
        return kl(q, p);
    }
    let beta = 0.5 * (1.0 - alpha);
    let gamma = 0.5 * (1.0 + alpha);
    let mut total = 0.0;
    for (index, (&a, &b)) in p.log_probs().iter().zip(q.log_probs()).enumerate() {
        let p_zero = a == f64::NEG_INFINITY;
        let q_zero = b == f64::NEG_INFINITY;
        total += match (p_zero, q_zero) {
            (true, true) => 0.0,
            (true, false) if beta > 0.0 => gamma * b.exp(),
            (false, true) if gamma > 0.0 => beta * a.exp(),
            (true, false) | (false, true) => return Err(Error::SupportViolation { index }),
            (false, false) => alpha_term(a, b, beta, gamma),
        };
    }
    Ok(total / (beta * gamma))
}

/// Parameters of the alpha-beta divergence family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ABParams {
    a: f64,
    b: f64,
}

impl ABParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a == 0.0 || b == 0.0 || a + b == 0.0 {
            return Err(Error::DegenerateParams { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// `x^e` for `x = exp(log_x)` with `0^e` = 0, 1, or +inf by the sign of `e`.
fn pow_from_log(log_x: f64, e: f64) -> f64 {
    if log_x == f64::NEG_INFINITY {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        (e * log_x).exp()
    }
}

/// Alpha-beta divergence
/// `-1/(ab) sum_k [p^a q^b - a/(a+b) p^(a+b) - b/(a+b) q^(a+b)]`.
pub fn ab_div(p: &LogCategorical, q: &LogCategorical, params: ABParams) -> Result<f64> {
    ensure_same_len(p.len(), q.len())?;
    let (a, b) = (params.a, params.b);
    let s = a + b;
    let mut total = 0.0;
    for (index, (&lp, &lq)) in p.log_probs().iter().zip(q.log_probs()).enumerate() {
        let cross = if lp > f64::NEG_INFINITY && lq > f64::NEG_INFINITY {
            (a * lp + b * lq).exp()
        } else {
            pow_from_log(lp, a) * pow_from_log(lq, b)
        };
        let term = cross - (a / s) * pow_from_log(lp, s) - (b / s) * pow_from_log(lq, s);
        if !term.is_finite() {
            return Err(Error::SupportViolation { index });
        }
        total += term;
    }
    Ok(-total / (a * b))
}

/// `sum_k q(k) f(p(k) / q(k))`, with boundary terms taken from the generator's limits.
///
/// Summed as `q(k) [f(t) - f'(1) (t - 1)]`, which has the same total for
/// normalized inputs and no cancellation between terms near `p = q`.
pub fn f_div(p: &LogCategorical, q: &LogCategorical, gen: &FGenerator) -> Result<f64> {
    ensure_same_len(p.len(), q.len())?;
    let tangent = gen.f_prime(1.0);
    let mut total = 0.0;
    for (index, (&a, &b)) in p.log_probs().iter().zip(q.log_probs()).enumerate() {
        let term = match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
            (true, true) => 0.0,
            (false, true) => a.exp() * (gen.slope_at_infinity - tangent),
            (true, false) => b.exp() * (gen.f_at_zero + tangent),
            (false, false) => b.exp() * gen.excess(a - b),
        };
        if !term.is_finite() {
            return Err(Error::SupportViolation { index });
        }
        total += term;
    }
    Ok(total)
}

/// A named divergence, as selected on the command line.
///
/// Text form: `kl`, `rkl`, `jeffreys`, `skl[:<lambda>]`, `srkl[:<lambda>]`,
/// `gjs[:<lambda>]`, `alpha:<a>`, `ab:<a>,<b>`. The skew variants default to
/// `lambda = 0.1` and `gjs` to `0.5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Kl,
    Rkl,
    Jeffreys,
    SkewKl { lambda: f64 },
    SkewRkl { lambda: f64 },
    Gjs { lambda: f64 },
    Alpha { alpha: f64 },
    Ab(ABParams),
}

pub const DEFAULT_SKEW_LAMBDA: f64 = 0.1;
pub const DEFAULT_GJS_LAMBDA: f64 = 0.5;

impl Divergence {
    pub fn eval(&self, p: &LogCategorical, q: &LogCategorical) -> Result<f64> {
        match *self {
            Divergence::Kl => kl(p, q),
            Divergence::Rkl => rkl(p, q),
            Divergence::Jeffreys => f_div(p, q, &FGenerator::jeffreys()),
            Divergence::SkewKl { lambda } => skew_kl(p, q, lambda),
            Divergence::SkewRkl { lambda } => skew_rkl(p, q, lambda),
            Divergence::Gjs { lambda } => gjs(p, q, lambda),
            Divergence::Alpha { alpha } => alpha_div(p, q, alpha),
            Divergence::Ab(params) => ab_div(p, q, params),
        }
    }

    /// The f-generator for divergences that are plain f-divergences.
    pub fn generator(&self) -> Option<FGenerator> {
        match self {
            Divergence::Kl => Some(FGenerator::kl()),
            Divergence::Rkl => Some(FGenerator::rkl()),
            Divergence::Jeffreys => Some(FGenerator::jeffreys()),
            _ => None,
        }
    }
}

impl From<FGenerator> for Divergence {
    fn from(gen: FGenerator) -> Self {
        match gen.name() {
            "kl" => Divergence::Kl,
            "rkl" => Divergence::Rkl,
            "jeffreys" => Divergence::Jeffreys,
            other => panic!("generator {other} has no named divergence"),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Kl => write!(f, "kl"),
            Divergence::Rkl => write!(f, "rkl"),
            Divergence::Jeffreys => write!(f, "jeffreys"),
            Divergence::SkewKl { lambda } => write!(f, "skl:{lambda}"),
            Divergence::SkewRkl { lambda } => write!(f, "srkl:{lambda}"),
            Divergence::Gjs { lambda } => write!(f, "gjs:{lambda}"),
            Divergence::Alpha { alpha } => write!(f, "alpha:{alpha}"),
            Divergence::Ab(p) => write!(f, "ab:{},{}", p.a, p.b),
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn parse_number(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("cannot parse {what} from {text:?}")))
}

fn parse_lambda(arg: Option<&str>, default: f64) -> Result<f64> {
    let lambda = match arg {
        None => default,
        Some(text) => parse_number(text, "lambda")?,
    };
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(lambda)
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let no_arg = |d: Divergence| match arg {
            None => Ok(d),
            Some(_) => Err(Error::Config(format!("divergence {name} takes no parameter"))),
        };
        match name {
            "kl" => no_arg(Divergence::Kl),
            "rkl" => no_arg(Divergence::Rkl),
            "jeffreys" => no_arg(Divergence::Jeffreys),
            "skl" => Ok(Divergence::SkewKl { lambda: parse_lambda(arg, DEFAULT_SKEW_LAMBDA)? }),
            "srkl" => Ok(Divergence::SkewRkl { lambda: parse_lambda(arg, DEFAULT_SKEW_LAMBDA)? }),
            "gjs" => Ok(Divergence::Gjs { lambda: parse_lambda(arg, DEFAULT_GJS_LAMBDA)? }),
            "alpha" => {
                let text = arg.ok_or_else(|| Error::Config("alpha divergence needs alpha:<a>".into()))?;
                Ok(Divergence::Alpha { alpha: parse_number(text, "alpha")? })
            }
            "ab" => {
                let text = arg.ok_or_else(|| Error::Config("ab divergence needs ab:<a>,<b>".into()))?;
                let (a, b) = text
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("ab divergence needs two numbers, got {text:?}")))?;
                let params = ABParams::new(parse_number(a, "a")?, parse_number(b, "b")?)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok(Divergence::Ab(params))
            }
            other => Err(Error::Config(format!("unknown divergence {other:?}"))),
        }
    }
}
