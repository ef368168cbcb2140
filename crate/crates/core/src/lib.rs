//! Causal discovery, uncertainty-aware adjustment-set selection and
//! treatment-effect estimation over tabular data.

pub mod adjustment;
pub mod cli;
pub mod datasets;
pub mod discovery;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod options;
pub mod orientation;
pub mod pipeline;
pub mod service;
pub mod session;

pub use error::{ApiError, Error, ErrorCode, Result};
pub use graph::{CausalGraph, Edge, EdgeMeta, EdgeSource, Vertex};
