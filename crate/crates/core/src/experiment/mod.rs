//! Experiment configuration, orchestration and reports.

mod config;
mod report;
mod run;

pub use config::{
    parse_pairs, read_pairs, BoxRadius, ExperimentConfig, Family, LambdaGrid, OutputFormat, SymbolOp,
    DEFAULT_SYMBOL_RADIUS,
};
pub use report::{format_number, write_report, Metadata, Report, Verdict};
pub use run::{columns, run_experiment, run_experiment_with};
