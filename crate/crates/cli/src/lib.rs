//! Command-line front end for the `nullprobe` pipeline.
//!
//! `gen` writes toy-model traces, `probe` reports cross-validated probe
//! metrics per layer, `test` adds Monte-Carlo tests against a chance baseline
//! and a null family with corrections across the layer sweep, `scm` runs the
//! identifiability check on finite SCMs, and `report` renders Markdown and
//! plot-ready CSV from a run directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{cmd_gen, cmd_probe, cmd_report, cmd_scm, cmd_test, Input, Pipeline, ScmInput};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use report::{validate_report, LayerSweepReport, ProbeReport};
