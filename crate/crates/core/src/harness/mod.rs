//! Configuration, experiment presets, verification suites and result files.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod suites;

pub use config::SimConfig;
pub use emit::{emit, fmt_sig};
pub use experiment::{run_experiment, ExperimentSpec, Format, GridPoint, Preset, ResultRow, ResultTable};
pub use suites::SuiteReport;
