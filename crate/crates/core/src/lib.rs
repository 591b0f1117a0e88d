//! Douglas-Rachford splitting for discrete optimal transport.
//!
//! [`drot::solve`] runs the single-array DROT iteration, either through a
//! straightforward multi-sweep implementation or the tiled [`fused`] kernel.
//! [`reference`] holds the independent oracles (three-matrix splitting,
//! ADMM, Sinkhorn, exact simplex) and [`probgen`] the seeded instance
//! generator.

pub mod drot;
pub mod error;
pub mod fused;
pub mod matrix;
pub mod probgen;
pub mod problem;
pub mod real;
pub mod reference;
pub mod splitting;

pub use drot::{solve, Drot, DrotConfig, DrotState, Engine};
pub use error::{Marginal, OtError};
pub use matrix::Matrix;
pub use problem::{
    objective, optimality_violations, residual_report, DualCertificate, ResidualReport,
    SolveResult, SolveStatus, SolveTrace, Tolerances, TransportPlan, TransportProblem,
};
pub use real::{Precision, Real};
