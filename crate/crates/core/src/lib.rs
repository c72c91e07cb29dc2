//! Attack graph forecasting and technique-level interpretation.
//!
//! The crate is organized around a single heterogeneous attack-graph data
//! model ([`graph::AttackGraph`]) that serves four roles: scene graphs
//! extracted from threat-intel reports (ASG), provenance graphs supplied by
//! an EDR (APG), forecast graphs produced by the sequence model (AFG), and
//! hand-built technique templates (ATG).
//!
//! - [`graph`] — the graph data model, edge validation, sequence encoding,
//!   serialization, DOT export.
//! - [`asg`] — builds scene graphs from pre-annotated report sentences.
//! - [`align`] — graph alignment with multi-hop equivalent semantics and
//!   technique-level interpretation against template sets.
//! - [`atg`] — template loading, statistics, and synthetic corpus generation.
//! - [`model`] — the autoregressive NodeRNN/EdgeRNN forecast model, generic
//!   over the scalar type.
//! - [`eval`] — perturbation, reconstruction, and scoring experiments.
//! - [`cli`] — the command-line entry point.

pub mod align;
pub mod asg;
pub mod atg;
pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod num;
pub mod testgen;

pub use error::{Error, Result};

pub type ForecastModel32 = model::ForecastModel<f32>;
pub type ForecastModel64 = model::ForecastModel<f64>;
