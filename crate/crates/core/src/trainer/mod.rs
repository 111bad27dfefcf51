//! Desk-scale training loops.
//!
//! - [`fit_simplex`]: full-gradient Adam on a single categorical student.
//! - [`toy_gaussian_fit`]: a Gaussian student against a two-mode teacher on a grid.
//! - [`distill_tabular`]: token-level distillation between order-1 tabular models.
//! - [`run_sweep`]: parallel grids of simplex fits.
//!
//! Every run is single-threaded and deterministic given its seed.

mod adam;
mod simplex_fit;
mod sweep;
mod tabular;
mod toy;

pub use adam::{Adam, AdamConfig};
pub use simplex_fit::{fit_objective, fit_simplex, fit_simplex_with, SimplexFit, TrainPoint};
pub use sweep::{run_cell, run_sweep, sweep_teacher, sweep_teachers, SweepCell, SweepConfig, SweepRow, TV_THRESHOLD};
pub use tabular::{
    distill_tabular, generate, generate_with, mean_conditional_tv, DistillPoint, DistillRun, DistillSettings,
    SGOStrategy, TabularLM, DEFAULT_BUFFER_SIZE, DEFAULT_MIX_PROB, DEFAULT_REFRESH_INTERVAL, TEACHER_CONCENTRATION,
    TEACHER_FLOOR, TEACHER_POOL_SIZE,
};
pub use toy::{
    default_toy_teacher, toy_gaussian_fit, toy_loss, GridSpec, ToyFit, ToyPoint, ToyStudent1D, TOY_FD_STEP,
    VARIANCE_CONVENTION,
};

/// Losses at or below this value are treated as the global minimum: the
/// update is skipped instead of letting Adam rescale rounding noise into a
/// full-size step.
pub const STATIONARY_LOSS: f64 = 1e-14;

fn serialize_error<S: serde::Serializer>(e: &Option<crate::error::Error>, s: S) -> Result<S::Ok, S::Error> {
    match e {
        Some(e) => s.serialize_some(&e.to_string()),
        None => s.serialize_none(),
    }
}
