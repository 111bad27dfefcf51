use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use super::adam::AdamConfig;
use super::simplex_fit::fit_simplex_with;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::grad::{Direction, StudentLogits};
use crate::mixture::AlphaLambda;
use crate::simplex::{dirichlet_probs, rng_from_seed, total_variation, LogCategorical};

/// TV below which a fit counts as converged.
pub const TV_THRESHOLD: f64 = 1e-3;

/// A grid of simplex fits: every divergence, direction, alpha and admissible
/// lambda, each fitted against the same `teachers` random teachers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub divergences: Vec<Divergence>,
    pub directions: Vec<Direction>,
    pub k: usize,
    pub teachers: usize,
    /// Entries of each teacher forced to exactly zero.
    pub teacher_zeros: usize,
    pub seed: u64,
    pub opt: AdamConfig,
    pub tv_threshold: f64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if self.k < 2 {
            return Err(Error::TooShort { min: 2, got: self.k });
        }
        if self.teacher_zeros + 1 >= self.k {
            return Err(Error::InvalidParameter(format!(
                "teacher_zeros must leave at least two nonzero entries (k = {})",
                self.k
            )));
        }
        if self.teachers == 0 {
            return Err(Error::InvalidParameter("teachers must be positive".into()));
        }
        if self.alphas.is_empty()
            || self.lambdas.is_empty()
            || self.divergences.is_empty()
            || self.directions.is_empty()
        {
            return Err(Error::InvalidParameter("every sweep axis needs at least one value".into()));
        }
        for &alpha in &self.alphas {
            for &lambda in &self.lambdas {
                AlphaLambda::new(alpha, lambda)?;
            }
        }
        Ok(())
    }

    /// Cells in row-major order over (divergence, direction, alpha, lambda).
    /// Teacher-side cells need `lambda < 1`, student-side cells `lambda > 0`.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for divergence in &self.divergences {
            for &direction in &self.directions {
                for &alpha in &self.alphas {
                    for &lambda in &self.lambdas {
                        let admissible = match direction {
                            Direction::TeacherSide => lambda < 1.0,
                            Direction::StudentSide => lambda > 0.0,
                        };
                        if admissible {
                            cells.push(SweepCell { divergence: *divergence, direction, alpha, lambda });
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub divergence: Divergence,
    pub direction: Direction,
    pub alpha: f64,
    pub lambda: f64,
}

/// Aggregate of one cell over its teachers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    /// Mean final loss over teachers; `+inf` if any run could not start.
    pub final_loss: f64,
    /// Worst final TV over teachers.
    pub final_tv: f64,
    /// Worst step at which TV first dropped below the threshold.
    pub steps_to_threshold: Option<usize>,
    /// Every run finished finite with its final TV below the threshold.
    pub stable_flag: bool,
    pub failures: Vec<String>,
}

/// Random teacher of size `k` drawn from Dirichlet(1), with `zeros` entries
/// set to exactly zero at random positions.
pub fn sweep_teacher(k: usize, zeros: usize, seed: u64) -> Result<LogCategorical> {
    let mut rng = rng_from_seed(seed);
    let mut probs = dirichlet_probs(&mut rng, k, 1.0, 1e-12);
    for i in index::sample(&mut rng, k, zeros) {
        probs[i] = 0.0;
    }
    LogCategorical::from_probs(&probs)
}

/// Teachers shared by every cell of a sweep.
pub fn sweep_teachers(cfg: &SweepConfig) -> Result<Vec<LogCategorical>> {
    (0..cfg.teachers).map(|t| sweep_teacher(cfg.k, cfg.teacher_zeros, cfg.seed.wrapping_add(t as u64))).collect()
}

/// Fits one cell against every teacher from uniform initial logits.
pub fn run_cell(cell: &SweepCell, teachers: &[LogCategorical], opt: AdamConfig, tv_threshold: f64) -> Result<SweepRow> {
    let params = AlphaLambda::new(cell.alpha, cell.lambda)?;
    let mut losses = 0.0;
    let mut final_tv: f64 = 0.0;
    let mut steps: Option<usize> = Some(0);
    let mut failures = Vec::new();
    for (t, p) in teachers.iter().enumerate() {
        let theta0 = StudentLogits::zeros(p.len())?;
        match fit_simplex_with(p, &theta0, params, &cell.divergence, cell.direction, opt) {
            Ok(fit) => {
                let last = fit.last();
                losses += last.loss;
                final_tv = final_tv.max(last.tv);
                if let Some(e) = &fit.diverged {
                    failures.push(format!("teacher {t}: {e}"));
                }
                let converged = fit.diverged.is_none() && last.tv < tv_threshold;
                let reached = if converged { fit.steps_to_threshold(tv_threshold) } else { None };
                steps = steps.zip(reached).map(|(a, b)| a.max(b));
                if !converged && fit.diverged.is_none() {
                    failures.push(format!("teacher {t}: final tv {:e} >= {tv_threshold:e}", last.tv));
                }
            }
            Err(e) => {
                losses = f64::INFINITY;
                final_tv = final_tv.max(total_variation(p, &theta0.probs())?);
                steps = None;
                failures.push(format!("teacher {t}: {e}"));
            }
        }
    }
    Ok(SweepRow {
        cell: *cell,
        final_loss: losses / teachers.len() as f64,
        final_tv,
        steps_to_threshold: steps,
        stable_flag: failures.is_empty(),
        failures,
    })
}

/// Runs every cell in parallel; rows come back in cell order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let teachers = sweep_teachers(cfg)?;
    cfg.cells().par_iter().map(|cell| run_cell(cell, &teachers, cfg.opt, cfg.tv_threshold)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::FGenerator;

    fn config() -> SweepConfig {
        SweepConfig {
            alphas: vec![-1.0, 1.0],
            lambdas: vec![0.0, 0.5, 1.0],
            divergences: vec![Divergence::Kl],
            directions: vec![Direction::TeacherSide, Direction::StudentSide],
            k: 5,
            teachers: 2,
            teacher_zeros: 0,
            seed: 1,
            opt: AdamConfig::simplex().with_steps(20),
            tv_threshold: TV_THRESHOLD,
        }
    }

    #[test]
    fn admissible_cells_only() {
        let cells = config().cells();
        assert_eq!(cells.len(), 8);
        assert!(cells.iter().all(|c| match c.direction {
            Direction::TeacherSide => c.lambda < 1.0,
            Direction::StudentSide => c.lambda > 0.0,
        }));
    }

    #[test]
    fn teachers_have_requested_zeros() {
        let p = sweep_teacher(10, 3, 4).unwrap();
        assert_eq!(p.support().iter().filter(|s| !**s).count(), 3);
    }

    #[test]
    fn rows_follow_cell_order() {
        let cfg = config();
        let rows = run_sweep(&cfg).unwrap();
        let cells = cfg.cells();
        assert_eq!(rows.iter().map(|r| r.cell).collect::<Vec<_>>(), cells);
    }

    #[test]
    fn infinite_start_marks_the_cell_unstable() {
        let teachers = vec![sweep_teacher(6, 2, 9).unwrap()];
        let cell = SweepCell {
            divergence: Divergence::from(FGenerator::rkl()),
            direction: Direction::TeacherSide,
            alpha: -1.0,
            lambda: 0.5,
        };
        let row = run_cell(&cell, &teachers, AdamConfig::simplex().with_steps(5), TV_THRESHOLD).unwrap();
        assert!(!row.stable_flag);
        assert_eq!(row.final_loss, f64::INFINITY);
        assert_eq!(row.steps_to_threshold, None);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = config();
        cfg.teacher_zeros = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.alphas.clear();
        assert!(cfg.validate().is_err());
    }
}
