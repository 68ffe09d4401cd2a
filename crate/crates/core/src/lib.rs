//! Place connectivity from geotagged event logs.
//!
//! The pipeline turns geotagged user events into per-place presence
//! tuples, counts unique and shared users per place pair, and derives the
//! symmetric and directional place connectivity index (PCI), person-day
//! origin-destination movements, inverse-PCI average-linkage communities,
//! and the regression and correlation statistics used to study them.

pub mod aggregate;
pub mod analytics;
pub mod clustering;
pub mod connectivity;
pub mod error;
pub mod exec;
pub mod export;
pub mod geom;
pub mod ingest;
pub mod movement;
mod pairs;
pub mod presence;
pub mod registry;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
