//! Monte Carlo verification: path sampling, payoff estimators, martingale
//! diagnostics and deviation tests.

use thiserror::Error;

use crate::strategy::StrategyError;

pub mod diagnostics;
pub mod evaluate;
pub mod experiment;
pub mod level;
pub mod paths;
pub mod rng;
pub mod stats;

pub use diagnostics::{
    build_m_path, deviation_report, deviation_test, estimate_j, martingale_diagnostic,
    martingale_report, CheckKind, CheckpointRow, DeviationRow, DiagnosticsReport, MARGIN,
};
pub use evaluate::{competition_payoff, scaled_control, Evaluator, Monitoring, PathEval, StopPoint};
pub use experiment::{
    default_deviations, deviation_payoff, run_experiment, Deviation, ExperimentConfig, ExperimentResult,
    LevelResult, Probes, ScenarioResult, ValueEstimates,
};
pub use level::{LevelEval, LevelGrid};
pub use paths::{simulate_paths, PathSet};
pub use stats::{EstimatorKind, McEstimate, Moments};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("control on {control} grid points does not match a path of {path} points")]
    GridMismatch { control: usize, path: usize },
    #[error("horizon too short: threshold reached on {reached:.3} of paths, tail bound {bound:e}")]
    HorizonTooShort { reached: f64, bound: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon {horizon} is not a positive multiple of dt = {dt}")]
    InvalidHorizon { horizon: f64, dt: f64 },
    #[error("initial state must be positive, got {0}")]
    InvalidState(f64),
    #[error("need at least two paths and one game")]
    NoPaths,
    #[error("games in one run must share parameters and initial state")]
    IncompatibleGames,
    #[error("grid refinements {0:?} must divide the largest one")]
    InvalidRefinement(Vec<usize>),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}
