//! Per-period and horizon totals of a schedule in physical units.

use serde::{Deserialize, Serialize};

use crate::devices::tcsc_reactance_change;
use crate::netmodel::{DeviceKind, Scenario};
use crate::schedule::{actions_at, DeviceState, Schedule};

/// Solve metadata carried into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: String,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_seconds: f64,
    pub vars: usize,
    pub bins: usize,
    pub rows: usize,
    pub cones: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device: usize,
    pub kind: String,
    pub status: Option<bool>,
    pub q_mvar: Option<f64>,
    pub tap: Option<usize>,
    pub ratio: Option<f64>,
    /// Susceptance change in per unit.
    pub delta_b: Option<f64>,
    /// Equivalent series reactance change in per unit.
    pub delta_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    /// 1-based.
    pub period: usize,
    pub p_gen_mw: f64,
    pub p_load_mw: f64,
    /// Sum of `line_loss_mw` in line order.
    pub p_loss_mw: f64,
    pub p_loss_pct: f64,
    pub line_loss_mw: Vec<f64>,
    pub mean_w: f64,
    pub actions: usize,
    pub active_devices: usize,
    pub devices: Vec<DeviceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    pub p_gen_mw: f64,
    /// Sum of the per-period losses.
    pub p_loss_mw: f64,
    pub p_loss_pct: f64,
    /// Mean of `W_ii` over all buses and periods.
    pub mean_w: f64,
    /// Population variance of `W_ii` over all buses and periods.
    pub var_w: f64,
    pub actions: usize,
    pub max_actions_per_period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub case: String,
    pub base_mva: f64,
    pub horizon: usize,
    pub budget: u32,
    /// How the voltage statistics are formed.
    pub voltage_statistics: String,
    pub periods: Vec<PeriodReport>,
    pub totals: ReportTotals,
    pub solver: Option<SolverStats>,
}

/// `100 * p_loss / p_gen`.
pub fn loss_percent(p_loss: f64, p_gen: f64) -> f64 {
    100.0 * p_loss / p_gen
}

pub fn make_report(sc: &Scenario, schedule: &Schedule, solver: Option<SolverStats>) -> ScheduleReport {
    let base = schedule.base_mva;
    let mut periods = Vec::with_capacity(schedule.horizon());
    let mut all_w = Vec::new();
    for (t, period) in schedule.periods.iter().enumerate() {
        let line_loss_mw: Vec<f64> = period.lines.iter().map(|l| l.loss() * base).collect();
        let p_loss_mw: f64 = line_loss_mw.iter().sum();
        let p_gen_mw: f64 = period.buses.iter().map(|b| b.p_gen * base).sum();
        let p_load_mw = sc.demand.total_p(t) * base;
        let ws: Vec<f64> = period.buses.iter().map(|b| b.w).collect();
        let devices: Vec<DeviceReport> = sc
            .devices
            .iter()
            .map(|dev| {
                let state = &period.devices[dev.index];
                let mut r = DeviceReport {
                    device: dev.index,
                    kind: dev.kind.name().to_string(),
                    status: state.status(),
                    q_mvar: None,
                    tap: None,
                    ratio: None,
                    delta_b: None,
                    delta_x: None,
                };
                match (state, &dev.kind) {
                    (DeviceState::Shunt { q, .. } | DeviceState::Statcom { q, .. }, _) => r.q_mvar = Some(q * base),
                    (DeviceState::Oltc { tap, .. }, _) => {
                        r.tap = Some(*tap);
                        r.ratio = dev.tap_ratio(*tap);
                    }
                    (DeviceState::Tcsc { db, .. }, DeviceKind::Tcsc { x_line, .. }) => {
                        r.delta_b = Some(*db);
                        r.delta_x = Some(tcsc_reactance_change(*x_line, *db, sc.flags.tcsc_mode));
                    }
                    _ => {}
                }
                r
            })
            .collect();
        periods.push(PeriodReport {
            period: t + 1,
            p_gen_mw,
            p_load_mw,
            p_loss_mw,
            p_loss_pct: loss_percent(p_loss_mw, p_gen_mw),
            line_loss_mw,
            mean_w: ws.iter().sum::<f64>() / ws.len() as f64,
            actions: actions_at(sc, schedule, t),
            active_devices: devices.iter().filter(|d| d.status == Some(true)).count(),
            devices,
        });
        all_w.extend(ws);
    }
    let p_gen_mw: f64 = periods.iter().map(|p| p.p_gen_mw).sum();
    let p_loss_mw: f64 = periods.iter().map(|p| p.p_loss_mw).sum();
    let n = all_w.len() as f64;
    let mean_w = all_w.iter().sum::<f64>() / n;
    let var_w = all_w.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / n;
    let totals = ReportTotals {
        p_gen_mw,
        p_loss_mw,
        p_loss_pct: loss_percent(p_loss_mw, p_gen_mw),
        mean_w,
        var_w,
        actions: periods.iter().map(|p| p.actions).sum(),
        max_actions_per_period: periods.iter().map(|p| p.actions).max().unwrap_or(0),
    };
    ScheduleReport {
        case: schedule.case.clone(),
        base_mva: base,
        horizon: schedule.horizon(),
        budget: schedule.budget,
        voltage_statistics: "mean and population variance over all buses and periods".into(),
        periods,
        totals,
        solver,
    }
}

impl ScheduleReport {
    /// One row per period: totals, then one column per device quantity.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "period",
            "p_gen_mw",
            "p_load_mw",
            "p_loss_mw",
            "p_loss_pct",
            "mean_w",
            "actions",
            "active_devices",
        ]
        .map(String::from)
        .to_vec();
        if let Some(first) = self.periods.first() {
            for d in &first.devices {
                match d.kind.as_str() {
                    "shunt" | "statcom" => header.push(format!("q_mvar_{}_{}", d.kind, d.device)),
                    "oltc" => header.push(format!("tap_{}", d.device)),
                    _ => header.push(format!("delta_x_tcsc_{}", d.device)),
                }
            }
        }
        w.write_record(&header).expect("in-memory write");
        for p in &self.periods {
            let mut row = vec![
                p.period.to_string(),
                p.p_gen_mw.to_string(),
                p.p_load_mw.to_string(),
                p.p_loss_mw.to_string(),
                p.p_loss_pct.to_string(),
                p.mean_w.to_string(),
                p.actions.to_string(),
                p.active_devices.to_string(),
            ];
            for d in &p.devices {
                let v = d
                    .q_mvar
                    .map(|q| q.to_string())
                    .or(d.tap.map(|t| t.to_string()))
                    .or(d.delta_x.map(|x| x.to_string()))
                    .unwrap_or_default();
                row.push(v);
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}
