//! Distributed optimization over a network of agents with local set constraints.
//!
//! Each agent `i` holds a convex objective `f_i` and a compact convex set `Ω_i`.
//! The consensus constraint `x_i = x_j` is replaced by an exact l1 penalty on
//! every edge, and the resulting problem is solved by a projected subgradient
//! flow in which every agent only talks to its neighbours.
//!
//! Module map:
//! - [`sets`]: boxes and balls, projections, tangent-cone projection.
//! - [`objectives`]: objective oracles, subgradient selections, convexity metadata.
//! - [`network`]: undirected communication graphs.
//! - [`penalty`]: the penalized objective and penalty-factor selection.
//! - [`dynamics`]: the agent flow and its time discretizations.
//! - [`diagnostics`]: Lyapunov values, optimality residuals, rate fits, run records.
//! - [`oracle`]: a centralized high-accuracy reference solver.
//! - [`experiment`]: experiment configs and the two reference instance generators.
//! - [`harness`]: end-to-end experiment runs writing CSV/JSON artifacts.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod network;
pub mod objectives;
pub mod oracle;
pub mod penalty;
mod prox;
pub mod sets;

pub use error::{Error, Result};

/// Dense vector type used for every agent state.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used for quadratic objective terms.
pub type Matrix = nalgebra::DMatrix<f64>;
