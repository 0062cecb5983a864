//! Windowed space-time least-squares Petrov-Galerkin (WST-LSPG) model
//! reduction for parameterized nonlinear dynamical systems.
//!
//! The pipeline: march a full-order model over a parameter grid, train
//! windowed space-time bases from the snapshots via tailored higher-order
//! SVDs, then solve a sequence of per-window residual-minimization problems
//! online with Gauss-Newton. GNAT hyper-reduction restricts residual
//! evaluation to a greedily chosen space-time sample mesh. The harness
//! module adds error metrics, error-bound evaluation and Pareto sweeps.

pub mod burgers;
pub mod config;
pub mod densekit;
pub mod error;
pub mod harness;
pub mod hyper;
pub mod io;
pub mod model;
pub mod parallel;
pub mod solver;
pub mod subspaces;
pub mod windows;

pub use error::{Error, Result};
