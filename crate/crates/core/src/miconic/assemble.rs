//! Builds the full multi-period program from a scenario.
//!
//! Column order: for each bus, its per-period columns; then each line; then
//! each device. Inside an element the periods are contiguous, so the order
//! is bus-major, then line, then device, then period.

use crate::devices::{build_oltc_block, build_shunt_block, build_statcom_block, build_tcsc_block, tcsc_susceptance_bounds};
use crate::netmodel::{DeviceKind, Scenario};
use crate::scheduling::{build_budget_constraint, build_tap_transition, Prev, StatusTrack};
use crate::socp_opf::{
    build_balance, build_injection_limits, build_line_flow, build_objective, build_soc_cone, build_tcsc_flow,
    build_thermal_limit, build_voltage_and_oltc_links, EnvelopeBoxes, Interval, LineEnds, Outflow,
};

use super::{ConicProgram, ModelError, VarId, VarKind, VarMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusVars {
    pub w: VarId,
    pub p_gen: VarId,
    pub q_gen: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineVars {
    /// Real and imaginary part of `W_ij`.
    pub wr: VarId,
    pub wi: VarId,
    pub p_ft: VarId,
    pub q_ft: VarId,
    pub p_tf: VarId,
    pub q_tf: VarId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuntVars {
    pub q: VarId,
    pub alpha: Vec<VarId>,
    pub s: VarId,
    pub change: VarId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatcomVars {
    pub q: VarId,
    pub s: VarId,
    pub change: VarId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OltcVars {
    pub alpha: Vec<VarId>,
    pub gamma: Vec<VarId>,
    /// Squared base-side voltage.
    pub u_base: VarId,
    /// Squared regulated voltage.
    pub u_reg: VarId,
    /// Tap index in `1..=K`.
    pub tap: VarId,
    pub eta: VarId,
    pub o: VarId,
    pub z: VarId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcscVars {
    pub db: VarId,
    pub s: VarId,
    pub change: VarId,
    pub f_from: VarId,
    pub f_to: VarId,
    pub g_re: VarId,
    pub g_im: VarId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceVars {
    Shunt(ShuntVars),
    Statcom(StatcomVars),
    Oltc(OltcVars),
    Tcsc(TcscVars),
}

impl DeviceVars {
    /// On/off status column; OLTCs have none.
    pub fn status(&self) -> Option<VarId> {
        match self {
            DeviceVars::Shunt(v) => Some(v.s),
            DeviceVars::Statcom(v) => Some(v.s),
            DeviceVars::Tcsc(v) => Some(v.s),
            DeviceVars::Oltc(_) => None,
        }
    }

    /// Reactive injection at the host bus for shunts and STATCOMs.
    pub fn q_injection(&self) -> Option<VarId> {
        match self {
            DeviceVars::Shunt(v) => Some(v.q),
            DeviceVars::Statcom(v) => Some(v.q),
            _ => None,
        }
    }
}

/// Column handles, indexed `[t][element]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelLayout {
    pub buses: Vec<Vec<BusVars>>,
    pub lines: Vec<Vec<LineVars>>,
    pub devices: Vec<Vec<DeviceVars>>,
}

impl ModelLayout {
    /// Partial assignment keeping every device in its initial state for the
    /// whole horizon: statuses unchanged, taps unmoved. Feasible whenever the
    /// device-free problem is.
    pub fn hold_initial_state(&self, sc: &Scenario) -> Vec<(VarId, f64)> {
        self.hold_except(sc, None)
    }

    fn hold_except(&self, sc: &Scenario, skip: Option<usize>) -> Vec<(VarId, f64)> {
        let mut out = Vec::new();
        for per in &self.devices {
            for dev in sc.devices.iter().filter(|d| Some(d.index) != skip) {
                let on = f64::from(u8::from(dev.initial.status));
                match &per[dev.index] {
                    DeviceVars::Oltc(v) => {
                        for (n, &a) in v.alpha.iter().enumerate() {
                            out.push((a, if n + 1 == dev.initial.tap { 1.0 } else { 0.0 }));
                        }
                        out.push((v.o, 0.0));
                    }
                    other => out.push((other.status().expect("status column"), on)),
                }
            }
        }
        out
    }

    /// Starting points for the search: the initial state held throughout,
    /// then one per device with every other device held and that device
    /// free (switched on from the first period when it starts off).
    pub fn starting_hints(&self, sc: &Scenario) -> Vec<Vec<(VarId, f64)>> {
        let mut hints = vec![self.hold_initial_state(sc)];
        for dev in sc.devices.iter() {
            let mut hint = self.hold_except(sc, Some(dev.index));
            if !dev.initial.status {
                hint.extend(self.devices.iter().filter_map(|per| per[dev.index].status()).map(|s| (s, 1.0)));
            }
            hints.push(hint);
        }
        hints
    }
}

fn meta(symbol: &'static str, element: usize, period: usize, index: usize) -> VarMeta {
    VarMeta {
        symbol,
        element,
        period,
        index,
    }
}

struct Cols<'a> {
    p: &'a mut ConicProgram,
}

impl Cols<'_> {
    fn c(&mut self, sym: &'static str, el: usize, t: usize) -> VarId {
        self.p.add_var(
            format!("{sym}[{el},{}]", t + 1),
            f64::NEG_INFINITY,
            f64::INFINITY,
            VarKind::Continuous,
            meta(sym, el, t, 0),
        )
    }

    fn nonneg(&mut self, sym: &'static str, el: usize, t: usize) -> VarId {
        let v = self.c(sym, el, t);
        self.p.vars[v].lower = 0.0;
        v
    }

    fn bin(&mut self, sym: &'static str, el: usize, t: usize) -> VarId {
        self.p
            .add_var(format!("{sym}[{el},{}]", t + 1), 0.0, 1.0, VarKind::Binary, meta(sym, el, t, 0))
    }

    fn vec_bin(&mut self, sym: &'static str, el: usize, t: usize, n: usize) -> Vec<VarId> {
        (0..n)
            .map(|k| {
                self.p.add_var(
                    format!("{sym}[{el},{},{}]", k + 1, t + 1),
                    0.0,
                    1.0,
                    VarKind::Binary,
                    meta(sym, el, t, k + 1),
                )
            })
            .collect()
    }

    fn vec_nonneg(&mut self, sym: &'static str, el: usize, t: usize, n: usize) -> Vec<VarId> {
        (0..n)
            .map(|k| {
                self.p.add_var(
                    format!("{sym}[{el},{},{}]", k + 1, t + 1),
                    0.0,
                    f64::INFINITY,
                    VarKind::Continuous,
                    meta(sym, el, t, k + 1),
                )
            })
            .collect()
    }
}

/// Builds the program and the handles of every column.
pub fn assemble(sc: &Scenario) -> Result<(ConicProgram, ModelLayout), ModelError> {
    let net = &sc.network;
    let horizon = sc.horizon;
    let mut prog = ConicProgram::default();
    let mut cols = Cols { p: &mut prog };

    let mut buses = vec![Vec::with_capacity(net.buses.len()); horizon];
    for bus in &net.buses {
        for (t, per) in buses.iter_mut().enumerate() {
            per.push(BusVars {
                w: cols.nonneg("W_diag", bus.id, t),
                p_gen: cols.c("p_gen", bus.id, t),
                q_gen: cols.c("q_gen", bus.id, t),
            });
        }
    }
    let mut lines = vec![Vec::with_capacity(net.lines.len()); horizon];
    for line in &net.lines {
        for (t, per) in lines.iter_mut().enumerate() {
            per.push(LineVars {
                wr: cols.c("W_re", line.id, t),
                wi: cols.c("W_im", line.id, t),
                p_ft: cols.c("p_from", line.id, t),
                q_ft: cols.c("q_from", line.id, t),
                p_tf: cols.c("p_to", line.id, t),
                q_tf: cols.c("q_to", line.id, t),
            });
        }
    }
    let mut devices = vec![Vec::with_capacity(sc.devices.len()); horizon];
    for dev in sc.devices.iter() {
        let d = dev.index;
        for (t, per) in devices.iter_mut().enumerate() {
            let v = match &dev.kind {
                DeviceKind::Shunt { blocks } => DeviceVars::Shunt(ShuntVars {
                    q: cols.nonneg("q_shunt", d, t),
                    alpha: cols.vec_bin("alpha_shunt", d, t, blocks.len()),
                    s: cols.bin("s_shunt", d, t),
                    change: cols.nonneg("w_change", d, t),
                }),
                DeviceKind::Statcom { .. } => DeviceVars::Statcom(StatcomVars {
                    q: cols.c("q_stat", d, t),
                    s: cols.bin("s_stat", d, t),
                    change: cols.nonneg("w_change", d, t),
                }),
                DeviceKind::Oltc { delta_sq, .. } => DeviceVars::Oltc(OltcVars {
                    alpha: cols.vec_bin("alpha_tap", d, t, delta_sq.len()),
                    gamma: cols.vec_nonneg("gamma_tap", d, t, delta_sq.len()),
                    u_base: cols.nonneg("U_base", d, t),
                    u_reg: cols.nonneg("U_tap", d, t),
                    tap: cols.c("u_tap", d, t),
                    eta: cols.nonneg("eta_tap", d, t),
                    o: cols.bin("o_tap", d, t),
                    z: cols.bin("z_tap", d, t),
                }),
                DeviceKind::Tcsc { .. } => DeviceVars::Tcsc(TcscVars {
                    db: cols.c("dB_tcsc", d, t),
                    s: cols.bin("s_tcsc", d, t),
                    change: cols.nonneg("w_change", d, t),
                    f_from: cols.c("f_tcsc", d, t),
                    f_to: cols.c("f_tcsc_to", d, t),
                    g_re: cols.c("g_tcsc_re", d, t),
                    g_im: cols.c("g_tcsc_im", d, t),
                }),
            };
            per.push(v);
        }
    }
    let layout = ModelLayout { buses, lines, devices };

    // bounds of W_ii per bus, needed by the envelope boxes
    let w_bounds: Vec<(f64, f64)> = net
        .buses
        .iter()
        .map(|b| match sc.devices.oltc_at(b.id).map(|d| &d.kind) {
            Some(DeviceKind::Oltc { delta_sq, .. }) => {
                let lo = delta_sq.iter().copied().fold(f64::MAX, f64::min);
                let hi = delta_sq.iter().copied().fold(f64::MIN, f64::max);
                (b.v_min * b.v_min * lo, b.v_max * b.v_max * hi)
            }
            _ => (b.v_min * b.v_min, b.v_max * b.v_max),
        })
        .collect();

    let inc = net.incidence();
    for t in 0..horizon {
        let bv = &layout.buses[t];
        let lv = &layout.lines[t];
        let dv = &layout.devices[t];

        for bus in &net.buses {
            let i = bus.id;
            let oltc = sc.devices.oltc_at(i).map(|d| match &dv[d.index] {
                DeviceVars::Oltc(o) => (o.u_reg, w_bounds[i].0, w_bounds[i].1),
                _ => unreachable!("oltc_at returns OLTCs"),
            });
            prog.add_block(build_voltage_and_oltc_links(bus, t, bv[i].w, oltc));
            prog.add_block(build_injection_limits(bus, bv[i].p_gen, bv[i].q_gen));
            let outflows: Vec<Outflow> = inc[i]
                .iter()
                .map(|&l| {
                    let line = &net.lines[l];
                    if line.from == i {
                        Outflow { p: lv[l].p_ft, q: lv[l].q_ft }
                    } else {
                        Outflow { p: lv[l].p_tf, q: lv[l].q_tf }
                    }
                })
                .collect();
            let device_q: Vec<VarId> = sc
                .devices
                .iter()
                .filter(|d| d.bus == i)
                .filter_map(|d| dv[d.index].q_injection())
                .collect();
            let demand = (sc.demand.p[t][i], sc.demand.q[t][i]);
            prog.add_block(build_balance(bus, t, bv[i].w, bv[i].p_gen, bv[i].q_gen, &outflows, &device_q, demand));
        }

        for line in &net.lines {
            let l = line.id;
            let ends = LineEnds {
                w_from: bv[line.from].w,
                w_to: bv[line.to].w,
            };
            let off = (w_bounds[line.from].1 * w_bounds[line.to].1).sqrt();
            prog.vars[lv[l].wr].lower = -off;
            prog.vars[lv[l].wr].upper = off;
            prog.vars[lv[l].wi].lower = -off;
            prog.vars[lv[l].wi].upper = off;
            match sc.devices.tcsc_on(l) {
                None => prog.add_block(build_line_flow(line, t, &lv[l], ends)),
                Some(dev) => {
                    let DeviceVars::Tcsc(tv) = &dv[dev.index] else {
                        unreachable!("tcsc_on returns TCSCs")
                    };
                    let (b_lo, b_hi) = tcsc_susceptance_bounds(line.x, sc.flags.tcsc_mode)?;
                    let fb = &net.buses[line.from];
                    let w_re = if sc.flags.literal_envelope {
                        Interval::new(fb.v_min * fb.v_min, fb.v_max * fb.v_max)
                    } else {
                        Interval::new(-off, off)
                    };
                    let boxes = EnvelopeBoxes {
                        w_from: Interval::new(w_bounds[line.from].0, w_bounds[line.from].1),
                        w_to: Interval::new(w_bounds[line.to].0, w_bounds[line.to].1),
                        w_re,
                        w_im: Interval::new(-off, off),
                        db: Interval::new(b_lo.min(0.0), b_hi.max(0.0)),
                    };
                    prog.add_block(build_tcsc_flow(line, t, &lv[l], ends, tv, &boxes, sc.flags.tcsc_sign));
                }
            }
            prog.cones.push(build_soc_cone(l, t, &lv[l], ends));
            prog.cones.extend(build_thermal_limit(line, t, &lv[l]));
        }

        let mut tracks = Vec::new();
        let mut switches = Vec::new();
        for dev in sc.devices.iter() {
            let d = dev.index;
            let prev_status = || -> Prev {
                if t == 0 {
                    Prev::Const(f64::from(u8::from(dev.initial.status)))
                } else {
                    Prev::Var(layout.devices[t - 1][d].status().expect("status column"))
                }
            };
            match (&dev.kind, &dv[d]) {
                (DeviceKind::Shunt { blocks }, DeviceVars::Shunt(v)) => {
                    prog.add_block(build_shunt_block(blocks, d, t, v)?);
                    tracks.push(StatusTrack { device: d, status: v.s, prev: prev_status(), change: v.change });
                }
                (DeviceKind::Statcom { q_max }, DeviceVars::Statcom(v)) => {
                    prog.add_block(build_statcom_block(*q_max, d, t, v));
                    tracks.push(StatusTrack { device: d, status: v.s, prev: prev_status(), change: v.change });
                }
                (DeviceKind::Oltc { delta_sq, max_step, .. }, DeviceVars::Oltc(v)) => {
                    let host = &net.buses[dev.bus];
                    prog.add_block(build_oltc_block(delta_sq, host.v_min, host.v_max, d, t, v)?);
                    let prev = match t.checked_sub(1).map(|s| &layout.devices[s][d]) {
                        None => Prev::Const(dev.initial.tap as f64),
                        Some(DeviceVars::Oltc(pv)) => Prev::Var(pv.tap),
                        Some(_) => unreachable!("device kinds are stable across periods"),
                    };
                    prog.add_block(build_tap_transition(delta_sq.len(), *max_step, d, t, v, prev));
                    switches.push(v.o);
                }
                (DeviceKind::Tcsc { line, .. }, DeviceVars::Tcsc(v)) => {
                    let (b_lo, b_hi) = tcsc_susceptance_bounds(net.lines[*line].x, sc.flags.tcsc_mode)?;
                    prog.add_block(build_tcsc_block(b_lo, b_hi, d, t, v));
                    tracks.push(StatusTrack { device: d, status: v.s, prev: prev_status(), change: v.change });
                }
                _ => unreachable!("device columns follow the device kind"),
            }
        }
        prog.add_block(build_budget_constraint(t, sc.budget, &tracks, &switches));
    }

    // decisions first, then tap choice; block selection and move direction
    // follow from those through propagation
    for (var, m) in prog.vars.iter_mut().zip(&prog.meta) {
        var.priority = match m.symbol {
            "s_shunt" | "s_stat" | "s_tcsc" | "o_tap" => 2,
            "alpha_tap" => 1,
            _ => 0,
        };
    }

    prog.objective = build_objective(layout.lines.iter().flatten());
    prog.check()?;
    Ok((prog, layout))
}
