//! Configuration, Monte Carlo trials, parameter sweeps and CSV/JSON export.

pub mod config;
pub mod sweep;
pub mod trial;

pub use config::{ScenarioConfig, SWEEP_AXES};
pub use sweep::{
    crlb_sweep, detect_roc, parse_values, run_trials, summarize, sweep, trial_seed, write_csv, CrlbRow, RocRow, Summary,
    SweepRow, CRLB_COLUMNS, ROC_COLUMNS, SWEEP_COLUMNS,
};
pub use trial::{Experiment, MultiTrialResult, Scene, TargetResult, TrialDetail, TrialResult, Truth};
