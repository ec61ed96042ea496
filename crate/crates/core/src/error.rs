use thiserror::Error;

use crate::miconic::ModelError;
use crate::netmodel::NetError;
use crate::solver::SolveError;
use crate::validate::ValidateError;

/// Crate-level error; each variant names the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}

impl Error {
    /// Short module tag used as the machine-readable prefix of CLI errors.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Net(_) => "netmodel",
            Error::Model(_) => "model",
            Error::Solve(_) => "solver",
            Error::Validate(_) => "validate",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
