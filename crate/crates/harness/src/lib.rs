//! Experiment runner for advisor-in-the-loop actor-critic training: configs,
//! persisted runs, greedy evaluation and the SER / ANR ratio metrics.

pub mod config;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod run;

pub use config::{AdvisorKind, ExperimentConfig};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalResult};
pub use metrics::{compute_anr, compute_ser, first_crossing, read_metrics, Crossing, CROSSING_WINDOW};
pub use run::{run_experiment, run_with_advisor, sweep, sweep_heu_threshold, RunOutput, RunSummary, SavedParams};
