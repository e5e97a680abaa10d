//! Experiment runner for the `deadcore` solver: JSON configurations in,
//! CSV tables, JSON summaries and SVG plots out.

pub mod plot;
pub mod report;
pub mod run;
pub mod spec;

pub use report::{emit_report, Check, Formats, RunReport, Table};
pub use run::{borderline_run, execute, liouville_sweep, run_experiment, RunError};
pub use spec::{ExperimentSpec, Kind, SpecError};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod guide {}
