//! Multi-period scheduling of FACTS devices (switched shunts, STATCOMs, on-load
//! tap changers, series compensators) on transmission networks, posed as a
//! mixed-integer second-order cone program that minimizes active losses under
//! a per-period switching budget.

pub mod devices;
pub mod error;
pub mod miconic;
pub mod netmodel;
pub mod schedule;
pub mod scheduling;
pub mod socp_opf;
pub mod solver;
pub mod validate;

pub use error::{Error, Result};
