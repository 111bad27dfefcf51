use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::STATIONARY_LOSS;
use crate::divergence::FGenerator;
use crate::error::{Error, Result};
use crate::grad::{amid_grad_analytic, amid_loss, finite_diff_grad, Direction, StudentLogits, FD_STEP};
use crate::mixture::AlphaLambda;
use crate::simplex::{dirichlet_probs, normalize, rng_from_seed, total_variation, LogCategorical, SeededRng};

/// Floor applied to teacher table entries before taking logs.
pub const TEACHER_FLOOR: f64 = 1e-30;
/// Dirichlet concentration of each teacher row.
pub const TEACHER_CONCENTRATION: f64 = 0.5;

/// An order-1 autoregressive model over a vocabulary of `V` symbols. The
/// first token is drawn from `start_logits`; each later token from the row of
/// `transition_logits` indexed by the previous token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularLM {
    pub vocab_size: usize,
    pub start_logits: Vec<f64>,
    pub transition_logits: Vec<Vec<f64>>,
    pub max_len: usize,
}

impl TabularLM {
    pub fn new(start_logits: Vec<f64>, transition_logits: Vec<Vec<f64>>, max_len: usize) -> Result<Self> {
        let model = Self { vocab_size: start_logits.len(), start_logits, transition_logits, max_len };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab_size;
        if v < 2 {
            return Err(Error::TooShort { min: 2, got: v });
        }
        if self.max_len == 0 {
            return Err(Error::InvalidParameter("max_len must be at least 1".into()));
        }
        if self.transition_logits.len() != v {
            return Err(Error::LengthMismatch { left: v, right: self.transition_logits.len() });
        }
        for row in std::iter::once(&self.start_logits).chain(&self.transition_logits) {
            StudentLogits::new(row.clone())?;
            if row.len() != v {
                return Err(Error::LengthMismatch { left: v, right: row.len() });
            }
        }
        Ok(())
    }

    /// All-zero logits: every conditional is uniform.
    pub fn uniform(vocab_size: usize, max_len: usize) -> Result<Self> {
        Self::new(vec![0.0; vocab_size], vec![vec![0.0; vocab_size]; vocab_size], max_len)
    }

    /// Teacher with Dirichlet(0.5) rows, floored at [`TEACHER_FLOOR`].
    pub fn random_teacher(vocab_size: usize, max_len: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let mut row = || -> Vec<f64> {
            dirichlet_probs(&mut rng, vocab_size, TEACHER_CONCENTRATION, TEACHER_FLOOR)
                .into_iter()
                .map(f64::ln)
                .collect()
        };
        let start = row();
        let transitions = (0..vocab_size).map(|_| row()).collect();
        Self::new(start, transitions, max_len)
    }

    /// Number of contexts: the start symbol plus one per vocabulary entry.
    pub fn num_contexts(&self) -> usize {
        self.vocab_size + 1
    }

    /// Logits for a context; context 0 is the start symbol, `c > 0` follows token `c - 1`.
    pub fn context_logits(&self, context: usize) -> &[f64] {
        if context == 0 {
            &self.start_logits
        } else {
            &self.transition_logits[context - 1]
        }
    }

    fn context_logits_mut(&mut self, context: usize) -> &mut Vec<f64> {
        if context == 0 {
            &mut self.start_logits
        } else {
            &mut self.transition_logits[context - 1]
        }
    }

    pub fn conditional(&self, context: usize) -> LogCategorical {
        normalize(self.context_logits(context)).expect("validated logits normalize")
    }

    fn samplers(&self) -> Vec<WeightedIndex<f64>> {
        (0..self.num_contexts())
            .map(|c| WeightedIndex::new(self.conditional(c).probs()).expect("conditional has positive mass"))
            .collect()
    }

    /// Probability of each context at each position under this model, averaged
    /// over the `max_len` positions.
    pub fn context_occupancy(&self) -> Vec<f64> {
        let v = self.vocab_size;
        let mut occupancy = vec![0.0; self.num_contexts()];
        occupancy[0] = 1.0;
        let mut marginal = self.conditional(0).probs();
        for _ in 1..self.max_len {
            for (token, &m) in marginal.iter().enumerate() {
                occupancy[token + 1] += m;
            }
            let mut next = vec![0.0; v];
            for (token, &m) in marginal.iter().enumerate() {
                for (n, pr) in next.iter_mut().zip(self.conditional(token + 1).probs()) {
                    *n += m * pr;
                }
            }
            marginal = next;
        }
        occupancy.iter_mut().for_each(|o| *o /= self.max_len as f64);
        occupancy
    }
}

/// Ancestral sampling of `count` sequences of length `len`.
pub fn generate(model: &TabularLM, seed: u64, count: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    generate_with(model, &mut rng_from_seed(seed), count, len)
}

pub fn generate_with(model: &TabularLM, rng: &mut SeededRng, count: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    if len > model.max_len {
        return Err(Error::InvalidParameter(format!("len {len} exceeds max_len {}", model.max_len)));
    }
    let samplers = model.samplers();
    Ok((0..count)
        .map(|_| {
            let mut seq = Vec::with_capacity(len);
            let mut context = 0;
            for _ in 0..len {
                let token = samplers[context].sample(rng);
                seq.push(token);
                context = token + 1;
            }
            seq
        })
        .collect())
}

/// Where each training sequence comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SGOStrategy {
    /// Uniform draws from a pool of teacher sequences sampled once up front.
    Fixed,
    /// Fresh student samples every step.
    OnPolicy,
    /// Per-sequence coin flip: a student sample with probability `mix_prob`,
    /// otherwise a draw from the teacher pool.
    Mixed { mix_prob: f64 },
    /// Uniform draws from a buffer of student samples regenerated every
    /// `refresh_interval` steps.
    AdaptiveOffPolicy { buffer_size: usize, refresh_interval: usize },
}

pub const DEFAULT_MIX_PROB: f64 = 0.5;
pub const DEFAULT_BUFFER_SIZE: usize = 256;
pub const DEFAULT_REFRESH_INTERVAL: usize = 50;
/// Size of the teacher pool used by the fixed and mixed strategies.
pub const TEACHER_POOL_SIZE: usize = 1024;

impl SGOStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SGOStrategy::Mixed { mix_prob } if !(0.0..=1.0).contains(&mix_prob) => {
                Err(Error::InvalidParameter(format!("mix_prob must lie in [0, 1], got {mix_prob}")))
            }
            SGOStrategy::AdaptiveOffPolicy { buffer_size, refresh_interval }
                if buffer_size == 0 || refresh_interval == 0 =>
            {
                Err(Error::InvalidParameter("buffer_size and refresh_interval must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn all_defaults() -> [SGOStrategy; 4] {
        [
            SGOStrategy::Fixed,
            SGOStrategy::OnPolicy,
            SGOStrategy::Mixed { mix_prob: DEFAULT_MIX_PROB },
            SGOStrategy::AdaptiveOffPolicy {
                buffer_size: DEFAULT_BUFFER_SIZE,
                refresh_interval: DEFAULT_REFRESH_INTERVAL,
            },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SGOStrategy::Fixed => "fixed",
            SGOStrategy::OnPolicy => "on-policy",
            SGOStrategy::Mixed { .. } => "mixed",
            SGOStrategy::AdaptiveOffPolicy { .. } => "adaptive-off-policy",
        }
    }
}

impl fmt::Display for SGOStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SGOStrategy {
    type Err = Error;

    /// Accepts the strategy name with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        SGOStrategy::all_defaults()
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistillPoint {
    pub step: usize,
    /// Batch-mean of the summed per-position loss.
    pub loss: f64,
    /// Teacher-occupancy-weighted TV between teacher and student conditionals.
    pub mean_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillRun {
    pub student: TabularLM,
    pub trajectory: Vec<DistillPoint>,
    #[serde(serialize_with = "super::serialize_error")]
    pub diverged: Option<Error>,
}

/// Mean conditional TV, weighting each context by how often the teacher
/// visits it.
pub fn mean_conditional_tv(teacher: &TabularLM, student: &TabularLM) -> Result<f64> {
    check_compatible(teacher, student)?;
    let occupancy = teacher.context_occupancy();
    let mut total = 0.0;
    for (c, &w) in occupancy.iter().enumerate() {
        if w > 0.0 {
            total += w * total_variation(&teacher.conditional(c), &student.conditional(c))?;
        }
    }
    Ok(total)
}

fn check_compatible(teacher: &TabularLM, student: &TabularLM) -> Result<()> {
    if teacher.vocab_size != student.vocab_size {
        return Err(Error::LengthMismatch { left: teacher.vocab_size, right: student.vocab_size });
    }
    if teacher.max_len != student.max_len {
        return Err(Error::InvalidParameter(format!("max_len differs: {} vs {}", teacher.max_len, student.max_len)));
    }
    Ok(())
}

/// Context visit counts of a batch.
fn context_counts(batch: &[Vec<usize>], num_contexts: usize) -> Vec<usize> {
    let mut counts = vec![0; num_contexts];
    for seq in batch {
        let mut context = 0;
        for &token in seq {
            counts[context] += 1;
            context = token + 1;
        }
    }
    counts
}

struct BatchSource {
    strategy: SGOStrategy,
    pool: Vec<Vec<usize>>,
    buffer: Vec<Vec<usize>>,
}

impl BatchSource {
    fn new(strategy: SGOStrategy, teacher: &TabularLM, rng: &mut SeededRng) -> Result<Self> {
        let pool = match strategy {
            SGOStrategy::Fixed | SGOStrategy::Mixed { .. } => {
                generate_with(teacher, rng, TEACHER_POOL_SIZE, teacher.max_len)?
            }
            _ => Vec::new(),
        };
        Ok(Self { strategy, pool, buffer: Vec::new() })
    }

    fn draw(&mut self, step: usize, student: &TabularLM, batch: usize, rng: &mut SeededRng) -> Result<Vec<Vec<usize>>> {
        let len = student.max_len;
        match self.strategy {
            SGOStrategy::Fixed => {
                Ok((0..batch).map(|_| self.pool[rng.random_range(0..self.pool.len())].clone()).collect())
            }
            SGOStrategy::OnPolicy => generate_with(student, rng, batch, len),
            SGOStrategy::Mixed { mix_prob } => {
                let mut out = Vec::with_capacity(batch);
                for _ in 0..batch {
                    if rng.random_bool(mix_prob) {
                        out.extend(generate_with(student, rng, 1, len)?);
                    } else {
                        out.push(self.pool[rng.random_range(0..self.pool.len())].clone());
                    }
                }
                Ok(out)
            }
            SGOStrategy::AdaptiveOffPolicy { buffer_size, refresh_interval } => {
                if (step - 1).is_multiple_of(refresh_interval) {
                    self.buffer = generate_with(student, rng, buffer_size, len)?;
                }
                Ok((0..batch).map(|_| self.buffer[rng.random_range(0..self.buffer.len())].clone()).collect())
            }
        }
    }
}

/// Loss and gradient of one context's conditional.
fn context_loss_grad(
    p: &LogCategorical,
    theta: &StudentLogits,
    params: AlphaLambda,
    gen: &FGenerator,
    direction: Direction,
) -> Result<(f64, Vec<f64>)> {
    let loss = amid_loss(p, theta, params, gen, direction)?;
    if loss <= STATIONARY_LOSS {
        return Ok((loss, vec![0.0; theta.len()]));
    }
    let grad = match direction {
        Direction::TeacherSide => amid_grad_analytic(p, theta, params, gen)?,
        Direction::StudentSide => finite_diff_grad(
            |x| amid_loss(p, &StudentLogits::new(x.to_vec())?, params, gen, direction),
            theta.as_slice(),
            FD_STEP,
        )?,
    };
    Ok((loss, grad))
}

/// Hyperparameters of a [`distill_tabular`] run besides the models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillSettings {
    pub strategy: SGOStrategy,
    pub params: AlphaLambda,
    pub gen: FGenerator,
    pub direction: Direction,
    pub opt: AdamConfig,
    pub batch: usize,
    pub seed: u64,
}

/// Token-level distillation of `student0` towards `teacher`. Each step draws a
/// batch per the strategy, sums the per-position AMiD loss along every
/// sequence, averages over the batch and takes one Adam step on all logits.
pub fn distill_tabular(teacher: &TabularLM, student0: &TabularLM, s: &DistillSettings) -> Result<DistillRun> {
    teacher.validate()?;
    student0.validate()?;
    check_compatible(teacher, student0)?;
    s.strategy.validate()?;
    s.opt.validate()?;
    if s.batch == 0 {
        return Err(Error::InvalidParameter("batch must be positive".into()));
    }
    let mut rng = rng_from_seed(s.seed);
    let mut source = BatchSource::new(s.strategy, teacher, &mut rng)?;
    let contexts = teacher.num_contexts();
    let v = teacher.vocab_size;
    let teacher_rows: Vec<LogCategorical> = (0..contexts).map(|c| teacher.conditional(c)).collect();
    // Every context is checked up front so an infinite loss surfaces before training.
    for (c, p) in teacher_rows.iter().enumerate() {
        let theta = StudentLogits::new(student0.context_logits(c).to_vec())?;
        amid_loss(p, &theta, s.params, &s.gen, s.direction).inspect_err(|e| log::debug!("context {c}: {e}"))?;
    }

    let mut student = student0.clone();
    let mut flat = flatten(&student);
    let mut adam = Adam::new(s.opt, flat.len());
    let mut trajectory = Vec::with_capacity(s.opt.steps);
    let mut diverged = None;
    for step in 1..=s.opt.steps {
        let batch = source.draw(step, &student, s.batch, &mut rng)?;
        let counts = context_counts(&batch, contexts);
        let mut grad = vec![0.0; flat.len()];
        let mut loss = 0.0;
        let mut failure = None;
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let theta = StudentLogits::new(student.context_logits(c).to_vec())?;
            match context_loss_grad(&teacher_rows[c], &theta, s.params, &s.gen, s.direction) {
                Ok((l, g)) => {
                    let weight = count as f64 / s.batch as f64;
                    loss += weight * l;
                    for (dst, gk) in grad[c * v..(c + 1) * v].iter_mut().zip(g) {
                        *dst += weight * gk;
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failure.or_else(|| (!loss.is_finite()).then_some(Error::NonFiniteLoss)) {
            diverged = Some(Error::DivergedLoss { step, reason: e.to_string() });
            break;
        }
        adam.step(&mut flat, &grad);
        if flat.iter().any(|x| !x.is_finite()) {
            diverged = Some(Error::DivergedLoss { step, reason: "non-finite logits".into() });
            break;
        }
        unflatten(&mut student, &flat);
        trajectory.push(DistillPoint { step, loss, mean_tv: mean_conditional_tv(teacher, &student)? });
    }
    Ok(DistillRun { student, trajectory, diverged })
}

fn flatten(model: &TabularLM) -> Vec<f64> {
    (0..model.num_contexts()).flat_map(|c| model.context_logits(c).to_vec()).collect()
}

fn unflatten(model: &mut TabularLM, flat: &[f64]) {
    let v = model.vocab_size;
    for c in 0..model.num_contexts() {
        model.context_logits_mut(c).copy_from_slice(&flat[c * v..(c + 1) * v]);
    }
}
