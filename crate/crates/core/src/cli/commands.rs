//! Subcommand bodies: resolve the config, run, write outputs.

use serde::Serialize;
use serde_json::json;

use super::config::{self, *};
use super::output::{to_json, Cell, Csv, Sink};
use super::*;
use crate::grad::{default_suite, lambda_one_suite, run_suite, CaseStatus, Direction, StudentLogits};
use crate::mixture::alpha_mixture;
use crate::simplex::{normalize, GaussianMixture1D, LogCategorical, NORMALIZATION_TOL};
use crate::trainer::{
    distill_tabular, fit_simplex_with, run_sweep, sweep_teacher, toy_gaussian_fit, DistillSettings, SGOStrategy,
    SweepConfig, TabularLM, ToyStudent1D, VARIANCE_CONVENTION,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn parse_direction(s: &str) -> Result<Direction, CliError> {
    s.parse::<Direction>().map_err(CliError::from)
}

fn categorical(values: &[f64], logits: bool, name: &str) -> Result<LogCategorical, CliError> {
    if values.is_empty() {
        return Err(CliError::config(format!("missing --{name}")));
    }
    if !logits {
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CliError::config(format!("{name} sums to {total}, expected 1")));
        }
    }
    let dist = if logits { normalize(values) } else { LogCategorical::from_probs(values) };
    dist.map_err(|e| CliError::config(format!("{name}: {e}")))
}

fn header<C: Serialize>(schema: &str, config: &C) -> serde_json::Value {
    json!({ "schema": schema, "version": VERSION, "config": config })
}

fn with_fields(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (Some(obj), serde_json::Value::Object(more)) = (base.as_object_mut(), extra) {
        obj.extend(more);
    }
    base
}

fn emit_json(sink: &Sink, value: &serde_json::Value) -> Result<(), CliError> {
    sink.write(&to_json(value)?, None)?;
    Ok(())
}

fn diverged_status(diverged: &Option<crate::error::Error>) -> ExitStatus {
    match diverged {
        Some(e) => {
            log::error!("run diverged: {e}");
            ExitStatus::NumericalFailure
        }
        None => ExitStatus::Success,
    }
}

pub(super) fn mixture(a: MixtureArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: MixtureConfig = config::load(a.io.config.as_deref())?;
    if let Some(p) = a.pair.p {
        cfg.p = p;
    }
    if let Some(q) = a.pair.q {
        cfg.q = q;
    }
    cfg.logits |= a.pair.logits;
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);

    let p = categorical(&cfg.p, cfg.logits, "p")?;
    let q = categorical(&cfg.q, cfg.logits, "q")?;
    let params = config::params(cfg.alpha, cfg.lambda)?;
    let result = alpha_mixture(&p, &q, params)?;
    let value = with_fields(
        header("amid.mixture/1", &cfg),
        json!({ "r": result.r.probs(), "log_r": result.r.log_probs(), "log_z": result.log_z }),
    );
    emit_json(&Sink::new(a.io.out), &value)?;
    Ok(ExitStatus::Success)
}

pub(super) fn divergence(a: DivergenceArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: DivergenceConfig = config::load(a.io.config.as_deref())?;
    if let Some(p) = a.pair.p {
        cfg.p = p;
    }
    if let Some(q) = a.pair.q {
        cfg.q = q;
    }
    cfg.logits |= a.pair.logits;
    if let Some(d) = a.divergence {
        cfg.divergence = d;
    }

    let p = categorical(&cfg.p, cfg.logits, "p")?;
    let q = categorical(&cfg.q, cfg.logits, "q")?;
    let div = config::parse_divergence(&cfg.divergence)?;
    let result = match div.eval(&p, &q) {
        Ok(v) => json!({ "value": v, "infinite": false }),
        Err(e) if e.is_support_violation() => json!({ "value": null, "infinite": true, "reason": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let value = with_fields(header("amid.divergence/1", &cfg), result);
    emit_json(&Sink::new(a.io.out), &value)?;
    Ok(ExitStatus::Success)
}

pub(super) fn grad_check(a: GradCheckArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: GradCheckConfig = config::load(a.io.config.as_deref())?;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.lambda_one_only |= a.lambda_one_only;
    cfg.negate_analytic |= a.negate_analytic;

    let cases = if cfg.lambda_one_only { lambda_one_suite(cfg.seed) } else { default_suite(cfg.seed) };
    let outcomes = run_suite(&cases, cfg.negate_analytic);
    let count = |f: fn(&CaseStatus) -> bool| outcomes.iter().filter(|o| f(&o.status)).count();
    let passed = count(|s| matches!(s, CaseStatus::Passed));
    let failed = count(|s| matches!(s, CaseStatus::Failed { .. }));
    let non_finite = count(|s| matches!(s, CaseStatus::NonFinite { .. }));
    let worst_rel_err = outcomes
        .iter()
        .filter(|o| matches!(o.status, CaseStatus::Passed | CaseStatus::Failed { .. }))
        .filter_map(|o| o.report.as_ref().map(|r| r.max_rel_err))
        .fold(0.0f64, f64::max);
    log::info!("grad-check: {passed} passed, {failed} failed, {non_finite} non-finite");
    let value = with_fields(
        header("amid.grad-check/1", &cfg),
        json!({
            "summary": { "cases": outcomes.len(), "passed": passed, "failed": failed,
                         "non_finite": non_finite, "worst_rel_err": worst_rel_err },
            "cases": outcomes,
        }),
    );
    emit_json(&Sink::new(a.io.out), &value)?;
    Ok(if failed == 0 { ExitStatus::Success } else { ExitStatus::VerificationFailure })
}

fn apply_train(train: &TrainArgs, lr: &mut f64, steps: &mut usize) {
    if let Some(v) = train.lr {
        *lr = v;
    }
    if let Some(v) = train.steps {
        *steps = v;
    }
}

pub(super) fn fit_simplex(a: FitSimplexArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: FitSimplexConfig = config::load(a.io.config.as_deref())?;
    apply_train(&a.train, &mut cfg.lr, &mut cfg.steps);
    if let Some(p) = a.p {
        cfg.p = p;
    }
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.teacher_zeros = a.teacher_zeros.unwrap_or(cfg.teacher_zeros);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    if let Some(d) = a.divergence {
        cfg.divergence = d;
    }
    if let Some(d) = a.direction {
        cfg.direction = parse_direction(&d)?;
    }

    let teacher = if cfg.p.is_empty() {
        sweep_teacher(cfg.k, cfg.teacher_zeros, cfg.seed)?
    } else {
        categorical(&cfg.p, false, "p")?
    };
    let theta0 = if cfg.theta0.is_empty() {
        StudentLogits::zeros(teacher.len())?
    } else {
        StudentLogits::new(cfg.theta0.clone())?
    };
    let params = config::params(cfg.alpha, cfg.lambda)?;
    let div = config::parse_divergence(&cfg.divergence)?;
    let opt = cfg.adam()?;
    let fit = fit_simplex_with(&teacher, &theta0, params, &div, cfg.direction, opt)?;

    let mut csv = Csv::new("amid.fit-simplex/1", &["step", "loss", "tv"], &cfg)?;
    for pt in &fit.trajectory {
        csv.row(&[Cell::Int(pt.step), Cell::Float(pt.loss), Cell::Float(pt.tv)]);
    }
    let summary = with_fields(
        header("amid.fit-simplex-summary/1", &cfg),
        json!({
            "teacher": teacher.probs(),
            "final": fit.last(),
            "student": fit.theta.probs().probs(),
            "theta": fit.theta,
            "diverged": fit.diverged.as_ref().map(|e| e.to_string()),
        }),
    );
    Sink::new(a.io.out).write(&csv.into_string(), Some(&to_json(&summary)?))?;
    Ok(diverged_status(&fit.diverged))
}

pub(super) fn toy(a: ToyArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: ToyConfig = config::load(a.io.config.as_deref())?;
    apply_train(&a.train, &mut cfg.lr, &mut cfg.steps);
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);

    let teacher = GaussianMixture1D::new(cfg.teacher.clone())?;
    let init = ToyStudent1D::from_variance(cfg.init_mu, cfg.init_variance)?;
    let params = config::params(cfg.alpha, cfg.lambda)?;
    let fit = toy_gaussian_fit(&teacher, init, params, cfg.grid, cfg.adam()?)?;

    let mut csv = Csv::new("amid.toy/1", &["step", "loss", "mu", "sigma"], &cfg)?;
    for pt in &fit.trajectory {
        csv.row(&[Cell::Int(pt.step), Cell::Float(pt.loss), Cell::Float(pt.mu), Cell::Float(pt.sigma)]);
    }
    let sigma = fit.student.sigma();
    let summary = with_fields(
        header("amid.toy-summary/1", &cfg),
        json!({
            "variance_convention": VARIANCE_CONVENTION,
            "final": {
                "mu": fit.student.mu,
                "sigma": sigma,
                "variance": sigma * sigma,
                "loss": fit.trajectory.last().map(|pt| pt.loss),
            },
            "diverged": fit.diverged.as_ref().map(|e| e.to_string()),
        }),
    );
    Sink::new(a.io.out).write(&csv.into_string(), Some(&to_json(&summary)?))?;
    Ok(diverged_status(&fit.diverged))
}

pub(super) fn sweep(a: SweepArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: SweepFileConfig = config::load(a.io.config.as_deref())?;
    apply_train(&a.train, &mut cfg.lr, &mut cfg.steps);
    if let Some(v) = a.alpha {
        cfg.alphas = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambdas = v;
    }
    if !a.divergence.is_empty() {
        cfg.divergences = a.divergence;
    }
    if let Some(v) = a.direction {
        cfg.directions = v.iter().map(|d| parse_direction(d)).collect::<Result<_, _>>()?;
    }
    cfg.k = a.k.unwrap_or(cfg.k);
    cfg.teachers = a.teachers.unwrap_or(cfg.teachers);
    cfg.teacher_zeros = a.teacher_zeros.unwrap_or(cfg.teacher_zeros);
    cfg.seed = a.seed.unwrap_or(cfg.seed);

    let sweep_cfg = SweepConfig {
        alphas: cfg.alphas.clone(),
        lambdas: cfg.lambdas.clone(),
        divergences: cfg.divergences.iter().map(|d| config::parse_divergence(d)).collect::<Result<_, _>>()?,
        directions: cfg.directions.clone(),
        k: cfg.k,
        teachers: cfg.teachers,
        teacher_zeros: cfg.teacher_zeros,
        seed: cfg.seed,
        opt: cfg.adam()?,
        tv_threshold: cfg.tv_threshold,
    };
    let rows = run_sweep(&sweep_cfg)?;

    let columns =
        ["alpha", "lambda", "divergence", "direction", "final_loss", "final_tv", "steps_to_threshold", "stable_flag"];
    let mut csv = Csv::new("amid.sweep/1", &columns, &cfg)?;
    for row in &rows {
        csv.row(&[
            Cell::Float(row.cell.alpha),
            Cell::Float(row.cell.lambda),
            Cell::Text(row.cell.divergence.to_string()),
            Cell::Text(row.cell.direction.to_string()),
            Cell::Float(row.final_loss),
            Cell::Float(row.final_tv),
            row.steps_to_threshold.map_or(Cell::Empty, Cell::Int),
            Cell::Bool(row.stable_flag),
        ]);
    }
    let unstable = rows.iter().filter(|r| !r.stable_flag).count();
    log::info!("sweep: {} cells, {unstable} unstable", rows.len());
    let summary = with_fields(header("amid.sweep-summary/1", &cfg), json!({ "rows": rows }));
    Sink::new(a.io.out).write(&csv.into_string(), Some(&to_json(&summary)?))?;
    Ok(ExitStatus::Success)
}

fn resolve_strategy(a: &DistillArgs, current: SGOStrategy) -> Result<SGOStrategy, CliError> {
    let mut strategy = match &a.strategy {
        Some(name) => name.parse::<SGOStrategy>()?,
        None => current,
    };
    match &mut strategy {
        SGOStrategy::Mixed { mix_prob } => {
            *mix_prob = a.mix_prob.unwrap_or(*mix_prob);
        }
        SGOStrategy::AdaptiveOffPolicy { buffer_size, refresh_interval } => {
            *buffer_size = a.buffer_size.unwrap_or(*buffer_size);
            *refresh_interval = a.refresh_interval.unwrap_or(*refresh_interval);
        }
        _ => {}
    }
    let mixed_only = a.mix_prob.is_some() && !matches!(strategy, SGOStrategy::Mixed { .. });
    let adaptive_only = (a.buffer_size.is_some() || a.refresh_interval.is_some())
        && !matches!(strategy, SGOStrategy::AdaptiveOffPolicy { .. });
    if mixed_only || adaptive_only {
        return Err(CliError::config(format!("flag does not apply to strategy {strategy}")));
    }
    strategy.validate()?;
    Ok(strategy)
}

pub(super) fn distill(a: DistillArgs) -> Result<ExitStatus, CliError> {
    let mut cfg: DistillConfig = config::load(a.io.config.as_deref())?;
    apply_train(&a.train, &mut cfg.lr, &mut cfg.steps);
    cfg.strategy = resolve_strategy(&a, cfg.strategy)?;
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    if let Some(d) = a.divergence {
        cfg.divergence = d;
    }
    if let Some(d) = a.direction {
        cfg.direction = parse_direction(&d)?;
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.teacher_seed = a.teacher_seed.unwrap_or(cfg.teacher_seed);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    if let Some(init) = a.student_init {
        cfg.student_init = serde_json::from_value(json!(init))
            .map_err(|_| CliError::config(format!("student_init must be uniform or teacher, got {init:?}")))?;
    }

    let teacher = TabularLM::random_teacher(cfg.vocab_size, cfg.max_len, cfg.teacher_seed)?;
    let student0 = match cfg.student_init {
        StudentInit::Uniform => TabularLM::uniform(cfg.vocab_size, cfg.max_len)?,
        StudentInit::Teacher => teacher.clone(),
    };
    let settings = DistillSettings {
        strategy: cfg.strategy,
        params: config::params(cfg.alpha, cfg.lambda)?,
        gen: config::parse_generator(&cfg.divergence)?,
        direction: cfg.direction,
        opt: cfg.adam()?,
        batch: cfg.batch,
        seed: cfg.seed,
    };
    let run = distill_tabular(&teacher, &student0, &settings)?;

    let mut csv = Csv::new("amid.distill/1", &["step", "loss", "mean_tv"], &cfg)?;
    for pt in &run.trajectory {
        csv.row(&[Cell::Int(pt.step), Cell::Float(pt.loss), Cell::Float(pt.mean_tv)]);
    }
    let summary = with_fields(
        header("amid.distill-model/1", &cfg),
        json!({
            "final": run.trajectory.last(),
            "teacher": teacher,
            "student": run.student,
            "diverged": run.diverged.as_ref().map(|e| e.to_string()),
        }),
    );
    Sink::new(a.io.out).write(&csv.into_string(), Some(&to_json(&summary)?))?;
    Ok(diverged_status(&run.diverged))
}
