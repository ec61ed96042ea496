//! Continuous SOCP solves and branch-and-bound over the integer columns.

mod bnb;
mod heuristic;
mod ipm;

pub use bnb::{branch_and_bound, branch_and_bound_with_hints, BnbOptions, MiSolution, MiStatus, NodeRecord};
pub use heuristic::{complete_assignment, relaxation_dive, rounding_heuristic};
pub use ipm::{solve_socp, RelaxSolution, RelaxStatus, SocpOptions};

use thiserror::Error;

use crate::miconic::ModelError;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conic solver rejected the problem: {0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid options: {0}")]
    Options(String),
}
