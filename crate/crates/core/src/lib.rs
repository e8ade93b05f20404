//! Ridesplitting emission analysis: trip reconstruction from order and GPS
//! tables, COPERT emissions, substitute-ride baselines and per-trip features.

pub mod emissions;
pub mod error;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod matching;
pub mod numfmt;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod trips;

pub use error::{Error, Result};
