//! Experiment driver: configuration, presets, the staged pipeline and its
//! reports and plots.

pub mod config;
pub mod plots;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use report::RunReport;
pub use run::{run, RunError};
