//! Batch front-end: configuration files, exports and studies.

pub mod app;
pub mod config;
pub mod output;
pub mod studies;

pub use app::{execute, main_with_args, AppError};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use output::{csv_string, emit_csv, emit_vtk, vtk_string};
pub use studies::{compare_runs, compare_table, duality_study, CompareRow, DualityReport};
