use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::divergence::{Divergence, FGenerator};
use crate::error::{Error, Result};
use crate::grad::Direction;
use crate::mixture::AlphaLambda;
use crate::simplex::GaussianComponent;
use crate::trainer::{default_toy_teacher, AdamConfig, GridSpec, SGOStrategy, TV_THRESHOLD};

/// Reads a JSON config file; unknown keys are rejected.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// Training configs carry the Adam settings as top-level keys.
macro_rules! adam_settings {
    ($($ty:ty),*) => {$(
        impl $ty {
            pub fn adam(&self) -> Result<AdamConfig> {
                AdamConfig::new(self.lr, self.beta1, self.beta2, self.eps, self.steps)
            }

            fn with_adam(mut self, c: AdamConfig) -> Self {
                self.lr = c.lr;
                self.steps = c.steps;
                self.beta1 = c.beta1;
                self.beta2 = c.beta2;
                self.eps = c.eps;
                self
            }
        }
    )*};
}

adam_settings!(FitSimplexConfig, ToyConfig, SweepFileConfig, DistillConfig);

pub fn parse_divergence(name: &str) -> Result<Divergence> {
    name.parse()
}

pub fn parse_generator(name: &str) -> Result<FGenerator> {
    FGenerator::by_name(name)
        .ok_or_else(|| Error::Config(format!("{name:?} is not an f-divergence generator (kl, rkl, jeffreys)")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Treat `p` and `q` as logits instead of probabilities.
    pub logits: bool,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { p: Vec::new(), q: Vec::new(), logits: false, alpha: -1.0, lambda: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceConfig {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub logits: bool,
    pub divergence: String,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self { p: Vec::new(), q: Vec::new(), logits: false, divergence: "kl".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub seed: u64,
    /// Only `lambda = 1` controls.
    pub lambda_one_only: bool,
    /// Negative control: flip the analytic gradient's sign.
    pub negate_analytic: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { seed: 2024, lambda_one_only: false, negate_analytic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSimplexConfig {
    /// Teacher probabilities; drawn from `seed` when empty.
    pub p: Vec<f64>,
    pub k: usize,
    pub teacher_zeros: usize,
    pub seed: u64,
    /// Initial student logits; zeros when empty.
    pub theta0: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub divergence: String,
    pub direction: Direction,
    pub lr: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for FitSimplexConfig {
    fn default() -> Self {
        Self {
            p: Vec::new(),
            k: 10,
            teacher_zeros: 0,
            seed: 0,
            theta0: Vec::new(),
            alpha: -5.0,
            lambda: 0.1,
            divergence: "kl".into(),
            direction: Direction::TeacherSide,
            lr: 0.0,
            steps: 0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
        .with_adam(AdamConfig::simplex())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// Teacher mixture components; each `variance` is sigma squared.
    pub teacher: Vec<GaussianComponent>,
    pub init_mu: f64,
    pub init_variance: f64,
    pub grid: GridSpec,
    pub lr: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            alpha: -3.0,
            lambda: 0.3,
            teacher: default_toy_teacher().components().to_vec(),
            init_mu: 0.0,
            init_variance: 1.0,
            grid: GridSpec::default(),
            lr: 0.0,
            steps: 0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
        .with_adam(AdamConfig::toy())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFileConfig {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub divergences: Vec<String>,
    pub directions: Vec<Direction>,
    pub k: usize,
    pub teachers: usize,
    pub teacher_zeros: usize,
    pub seed: u64,
    pub tv_threshold: f64,
    pub lr: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for SweepFileConfig {
    fn default() -> Self {
        Self {
            alphas: vec![-1.0, 0.0, 1.0],
            lambdas: vec![0.1, 0.5],
            divergences: vec!["kl".into(), "rkl".into()],
            directions: vec![Direction::TeacherSide],
            k: 10,
            teachers: 5,
            teacher_zeros: 3,
            seed: 0,
            tv_threshold: TV_THRESHOLD,
            lr: 0.0,
            steps: 0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
        .with_adam(AdamConfig::simplex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudentInit {
    Uniform,
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub teacher_seed: u64,
    pub student_init: StudentInit,
    pub strategy: SGOStrategy,
    pub alpha: f64,
    pub lambda: f64,
    pub divergence: String,
    pub direction: Direction,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8,
            max_len: 6,
            teacher_seed: 42,
            student_init: StudentInit::Uniform,
            strategy: SGOStrategy::OnPolicy,
            alpha: -3.0,
            lambda: 0.1,
            divergence: "kl".into(),
            direction: Direction::TeacherSide,
            batch: 32,
            seed: 1,
            lr: 0.0,
            steps: 0,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
        .with_adam(AdamConfig::tabular())
    }
}

pub fn params(alpha: f64, lambda: f64) -> Result<AlphaLambda> {
    AlphaLambda::new(alpha, lambda)
}
