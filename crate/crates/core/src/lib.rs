//! Adaptive, line-search-free decentralized optimization over undirected graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: communication graphs, Metropolis–Hastings gossip matrices,
//!   the positive-definite shift and spectral diagnostics;
//! - [`objectives`]: local losses (ridge, logistic), data generation and
//!   MNIST ingestion, and a centralized reference solver;
//! - [`stepsize`]: curvature proxies and the adaptive stepsize rules for the
//!   global and the fully local variants;
//! - [`solvers`]: the ADOLF and ADOLF-local engines, the Condat–Vũ oracle and
//!   the EXTRA baseline, plus the run loop;
//! - [`diagnostics`]: saddle points, Lagrangian gaps, Lyapunov and merit
//!   functions, ergodic averages and rate fits;
//! - [`harness`]: experiment configs, runs, comparisons and figure presets.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod solvers;
pub mod stepsize;
pub mod topology;

pub use error::{Error, Result};

/// Dense row-stacked matrix: one row per agent.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
