//! Grid-search self-tuning of monitor parameters and the calibration-size
//! sensitivity protocol.

mod grid;
mod search;
mod sensitivity;

pub use grid::{default_gammas, Cell, Grid, DEFAULT_METRICS};
pub use search::{evaluate_config, evaluate_grid, self_tune, SkippedCell, TraceRow, TuneOptions, TuneResult};
pub use sensitivity::{
    parameter_histogram, sensitivity_sweep, subsample_indices, tune_and_evaluate, Bin, ParameterHistogram,
    SensitivityRow, SensitivityRun,
};
