//! Nonlinear Dirac equation on metric star graphs: discretization, linear
//! and nonlinear evolution, standing waves and resolvent limits.

pub mod error;
pub mod fields;
pub mod graph;
pub mod linalg;

pub use error::{Error, Result};
pub use fields::{EdgeGrid, Grid, NodeKind, ScalarField, SpinorField, TraceOrder, VertexResidual};
pub use graph::{EdgeLength, Endpoint, MetricGraph, StarSpec};
pub mod operators;
pub mod evolution;
pub mod standing;
pub mod resolvent;
pub mod config;
pub mod commands;
