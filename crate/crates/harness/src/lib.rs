//! Benchmark harness for the `clusternorm` crate: experiment specs, method
//! pipelines, the synthetic benchmark grid and the CLI subcommands.

pub mod bench;
pub mod commands;
pub mod methods;
pub mod spec;

pub use bench::{run_cell, run_spec, Cell, CellOutput, ResultRow, SummaryRow};
pub use methods::{fit_method, MethodOutput};
pub use spec::{ExperimentSpec, Hyper, Method};
