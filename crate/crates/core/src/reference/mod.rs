//! Independent solvers used as oracles and baselines. None of this code
//! shares a path with the single-array DROT implementation.

mod lp;
mod sinkhorn;
mod splitting;

pub use lp::{lp_exact, lp_exact_with_limit, LpSolution, LP_EXACT_MAX_CELLS};
pub use sinkhorn::{sinkhorn_solve, SinkhornConfig};
pub use splitting::{admm_reference_step, dr_reference_step, AdmmState, DrReferenceState};
