//! Seeded twin experiments: configuration, execution and output files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, ConfigDocument, ExperimentConfig, InitialEnsembleConfig, OutputConfig, SystemConfig, PRESETS};
pub use output::{csv_string, emit_csv, emit_summary, parse_csv, summary_csv, write_summary, CSV_HEADER};
pub use run::{generate_truth, run_experiment, RunReport, RunStatus};
