//! Experiment runner for morphlearn: configs, presets, training runs,
//! oracle baselines and artifact emission.

pub mod analysis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gen;
pub mod presets;

pub use config::{DataSource, ExperimentConfig, Synth};
pub use error::{ConfigError, ExperimentError, Result, Stage};
pub use experiment::{apply, eval, eval_baseline, run, ExperimentReport, Metrics};
