//! Scenario presets, the Monte Carlo harness and result tables.

pub mod config;
pub mod harness;
pub mod results;

pub use config::{preset, Method, Pipeline, PresetName, ScenarioConfig, TrainingSource};
pub use harness::{csv_comments, run_scenario, run_scenario_with, snr_to_sigma, train_regression_codebook};
pub use results::{emit_csv, ResultRow, ResultTable};
