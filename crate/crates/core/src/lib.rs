//! Exact performance metrics for multi-server pools under balanced fairness.
//!
//! Jobs of each class may be served by a fixed set of servers; servers share
//! their capacity according to balanced fairness (or, equivalently, process
//! jobs in FCFS order with redundant requests or parallel processing). The
//! crate computes the empty-system probability, server and class idle
//! probabilities and mean job counts by recursion over idle servers, plus
//! polynomial-time solvers for structured pools and independent oracles.

pub mod cli;
pub mod document;
pub mod error;
pub mod generic;
pub mod model;
pub mod oracle;
pub mod report;
pub mod structured;
pub mod sweep;

pub use error::{Error, Result};
pub use generic::{GenericSolver, MeanJobs, MetricsReport, SolverConfig};
pub use model::{ClassSpec, PoolModel, RawModel, ReducedPool, ServerSpec, Stability};
