//! Statistical testing of interpretability findings.
//!
//! The crate generates computational traces from a seeded toy transformer
//! ([`toynet`]), fits probing estimators on them ([`estimators`]), tests the
//! estimates against randomized-computation null models with Monte-Carlo
//! p-values ([`nulltest`]), and provides exact surrogate-risk and
//! identifiability analysis for finite structural causal models ([`scm`]).
//! Traces move between components through a small directory format
//! ([`trace`]).

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod nulltest;
pub mod rng;
pub mod scm;
pub mod toynet;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{LabelKind, TraceSet};
