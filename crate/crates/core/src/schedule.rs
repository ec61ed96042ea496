//! Solver-independent schedule: the values of a solution per period, stored
//! without reference to column indices so it can be serialized and re-checked.

use serde::{Deserialize, Serialize};

use crate::miconic::{DeviceVars, ModelLayout};
use crate::netmodel::{DeviceKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusState {
    /// Squared voltage magnitude.
    pub w: f64,
    pub p_gen: f64,
    pub q_gen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineState {
    pub w_re: f64,
    pub w_im: f64,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl LineState {
    pub fn loss(&self) -> f64 {
        self.p_from + self.p_to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DeviceState {
    Shunt {
        status: bool,
        blocks: Vec<bool>,
        q: f64,
    },
    Statcom {
        status: bool,
        q: f64,
    },
    Oltc {
        /// 1-based tap index.
        tap: usize,
        u_base: f64,
        u_reg: f64,
    },
    Tcsc {
        status: bool,
        db: f64,
        f_from: f64,
        f_to: f64,
        g_re: f64,
        g_im: f64,
    },
}

impl DeviceState {
    /// On/off status; `None` for OLTCs.
    pub fn status(&self) -> Option<bool> {
        match self {
            DeviceState::Shunt { status, .. }
            | DeviceState::Statcom { status, .. }
            | DeviceState::Tcsc { status, .. } => Some(*status),
            DeviceState::Oltc { .. } => None,
        }
    }

    /// Reactive injection at the host bus (shunts and STATCOMs).
    pub fn q_injection(&self) -> f64 {
        match self {
            DeviceState::Shunt { q, .. } | DeviceState::Statcom { q, .. } => *q,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub buses: Vec<BusState>,
    pub lines: Vec<LineState>,
    pub devices: Vec<DeviceState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub case: String,
    pub base_mva: f64,
    pub budget: u32,
    /// Total loss over the horizon in per unit, as reported by the solver.
    pub objective: f64,
    pub periods: Vec<Period>,
}

impl Schedule {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    /// Sum of line losses in per unit.
    pub fn total_loss(&self) -> f64 {
        self.periods.iter().flat_map(|p| &p.lines).map(LineState::loss).sum()
    }
}

fn bit(v: f64) -> bool {
    v > 0.5
}

/// Reads a solution vector through the column layout.
pub fn extract_schedule(sc: &Scenario, layout: &ModelLayout, x: &[f64], objective: f64) -> Schedule {
    let periods = (0..sc.horizon)
        .map(|t| Period {
            buses: layout.buses[t]
                .iter()
                .map(|b| BusState { w: x[b.w], p_gen: x[b.p_gen], q_gen: x[b.q_gen] })
                .collect(),
            lines: layout.lines[t]
                .iter()
                .map(|l| LineState {
                    w_re: x[l.wr],
                    w_im: x[l.wi],
                    p_from: x[l.p_ft],
                    q_from: x[l.q_ft],
                    p_to: x[l.p_tf],
                    q_to: x[l.q_tf],
                })
                .collect(),
            devices: layout.devices[t]
                .iter()
                .map(|d| match d {
                    DeviceVars::Shunt(v) => DeviceState::Shunt {
                        status: bit(x[v.s]),
                        blocks: v.alpha.iter().map(|&a| bit(x[a])).collect(),
                        q: x[v.q],
                    },
                    DeviceVars::Statcom(v) => DeviceState::Statcom { status: bit(x[v.s]), q: x[v.q] },
                    DeviceVars::Oltc(v) => {
                        let chosen = v
                            .alpha
                            .iter()
                            .enumerate()
                            .max_by(|a, b| x[*a.1].total_cmp(&x[*b.1]))
                            .map_or(1, |(n, _)| n + 1);
                        DeviceState::Oltc { tap: chosen, u_base: x[v.u_base], u_reg: x[v.u_reg] }
                    }
                    DeviceVars::Tcsc(v) => DeviceState::Tcsc {
                        status: bit(x[v.s]),
                        db: x[v.db],
                        f_from: x[v.f_from],
                        f_to: x[v.f_to],
                        g_re: x[v.g_re],
                        g_im: x[v.g_im],
                    },
                })
                .collect(),
        })
        .collect();
    Schedule {
        case: sc.network.name.clone(),
        base_mva: sc.base_mva(),
        budget: sc.budget,
        objective,
        periods,
    }
}

/// Number of status flips and tap moves at period `t`.
pub fn actions_at(sc: &Scenario, schedule: &Schedule, t: usize) -> usize {
    sc.devices
        .iter()
        .filter(|dev| {
            let now = &schedule.periods[t].devices[dev.index];
            let prev = t.checked_sub(1).map(|s| &schedule.periods[s].devices[dev.index]);
            match (now, &dev.kind) {
                (DeviceState::Oltc { tap, .. }, DeviceKind::Oltc { .. }) => {
                    let before = match prev {
                        Some(DeviceState::Oltc { tap, .. }) => *tap,
                        _ => dev.initial.tap,
                    };
                    *tap != before
                }
                _ => {
                    let before = prev.and_then(DeviceState::status).unwrap_or(dev.initial.status);
                    now.status() != Some(before)
                }
            }
        })
        .count()
}
