//! Dynamic graph contrastive learning for temporal event prediction.
//!
//! A sample is a sequence of snapshot graphs over a fixed node set with one
//! semantic feature matrix. Two encoders view it differently — a per-node
//! temporal path ([`local`]) and a pooled graph-level trajectory ([`global`]) —
//! and [`head`] ties them together with a negative-free contrastive term
//! alongside the supervised loss.

pub mod artifacts;
pub mod autodiff;
pub mod baseline;
pub mod config;
pub mod data;
pub mod dropout;
pub mod error;
pub mod global;
pub mod graph;
pub mod head;
pub mod local;
pub mod model;
pub mod train;

pub use error::{Error, Result};
