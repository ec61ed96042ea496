//! Post-solution diagnostics: independent constraint re-checks, relaxation
//! exactness, AC power flow with the discrete decisions fixed, and reports.

mod exactness;
mod powerflow;
mod report;
mod verify;

pub use exactness::{check_exactness, ExactnessDiagnostics, LineExactness};
pub use powerflow::{newton_power_flow, period_power_flow, PfBus, PfOptions, PfProblem, PfSolution};
pub use report::{loss_percent, make_report, DeviceReport, PeriodReport, ReportTotals, ScheduleReport, SolverStats};
pub use verify::{verify_schedule, Violation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("schedule does not match the scenario: {0}")]
    Shape(String),
    #[error("power flow diverged after {iterations} iterations (mismatch {mismatch:.3e})")]
    Divergence { iterations: usize, mismatch: f64 },
    #[error("slack bus {0} has no generator")]
    SlackNotGenerator(u64),
    #[error("singular power-flow jacobian at iteration {0}")]
    Singular(usize),
    #[error("malformed schedule: {0}")]
    Json(#[from] serde_json::Error),
}

/// Relative tolerance of the schedule re-checks.
pub const FEAS_TOL: f64 = 1e-6;
