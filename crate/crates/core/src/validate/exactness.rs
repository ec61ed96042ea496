use serde::{Deserialize, Serialize};

use crate::netmodel::Scenario;
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineExactness {
    pub line: usize,
    pub period: usize,
    /// `|W_ij|^2 / (W_ii W_jj)`; 1 on a rank-one point.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessDiagnostics {
    pub epsilon: f64,
    pub lines: Vec<LineExactness>,
    pub min_rho: f64,
    pub mean_rho: f64,
    /// `min_rho >= 1 - epsilon`.
    pub exact: bool,
    /// Entries below the threshold.
    pub flagged: Vec<LineExactness>,
}

/// Cone tightness ratio of every line and period.
pub fn check_exactness(sc: &Scenario, schedule: &Schedule, epsilon: f64) -> ExactnessDiagnostics {
    let mut lines = Vec::new();
    for (t, period) in schedule.periods.iter().enumerate() {
        for (l, line) in sc.network.lines.iter().enumerate() {
            let st = &period.lines[l];
            let denom = period.buses[line.from].w * period.buses[line.to].w;
            let num = st.w_re * st.w_re + st.w_im * st.w_im;
            let rho = if denom > 0.0 { num / denom } else { 0.0 };
            lines.push(LineExactness { line: l, period: t, rho });
        }
    }
    let min_rho = lines.iter().map(|e| e.rho).fold(f64::INFINITY, f64::min);
    let mean_rho = if lines.is_empty() {
        1.0
    } else {
        lines.iter().map(|e| e.rho).sum::<f64>() / lines.len() as f64
    };
    let flagged: Vec<LineExactness> = lines.iter().copied().filter(|e| e.rho < 1.0 - epsilon).collect();
    ExactnessDiagnostics {
        epsilon,
        min_rho: if lines.is_empty() { 1.0 } else { min_rho },
        mean_rho,
        exact: flagged.is_empty(),
        flagged,
        lines,
    }
}
