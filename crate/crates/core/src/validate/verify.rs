//! Re-evaluation of every constraint family on a serialized schedule. The
//! arithmetic works on physical quantities (complex flows, device states) and
//! never touches the rows of the assembled program.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ValidateError, FEAS_TOL};
use crate::devices::{TCSC_DX_MAX, TCSC_DX_MIN};
use crate::netmodel::{DeviceKind, Scenario, TcscMode, TcscSign};
use crate::schedule::{actions_at, DeviceState, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `family[element,period]`, periods 1-based.
    pub id: String,
    pub family: String,
    pub element: usize,
    pub period: usize,
    /// Scaled violation amount.
    pub amount: f64,
}

struct Collector {
    out: Vec<Violation>,
}

impl Collector {
    /// Records `excess / scale` when it exceeds the tolerance.
    fn check(&mut self, family: &str, element: usize, period: usize, excess: f64, scale: f64) {
        let amount = excess / scale.abs().max(1.0);
        if amount > FEAS_TOL || amount.is_nan() {
            self.out.push(Violation {
                id: format!("{family}[{element},{}]", period + 1),
                family: family.to_string(),
                element,
                period,
                amount,
            });
        }
    }

    fn window(&mut self, family: &str, element: usize, period: usize, v: f64, lo: f64, hi: f64) {
        self.check(family, element, period, (lo - v).max(v - hi).max(0.0), v);
    }

    fn equal(&mut self, family: &str, element: usize, period: usize, a: f64, b: f64) {
        self.check(family, element, period, (a - b).abs(), a.abs().max(b.abs()));
    }
}

fn shape(sc: &Scenario, s: &Schedule) -> Result<(), ValidateError> {
    let net = &sc.network;
    if s.periods.len() != sc.horizon {
        return Err(ValidateError::Shape(format!("{} periods, scenario has {}", s.periods.len(), sc.horizon)));
    }
    for (t, p) in s.periods.iter().enumerate() {
        if p.buses.len() != net.buses.len() || p.lines.len() != net.lines.len() || p.devices.len() != sc.devices.len() {
            return Err(ValidateError::Shape(format!("element counts differ at period {}", t + 1)));
        }
        for dev in sc.devices.iter() {
            let ok = matches!(
                (&dev.kind, &p.devices[dev.index]),
                (DeviceKind::Shunt { blocks }, DeviceState::Shunt { blocks: chosen, .. }) if blocks.len() == chosen.len()
            ) || matches!(
                (&dev.kind, &p.devices[dev.index]),
                (DeviceKind::Statcom { .. }, DeviceState::Statcom { .. })
                    | (DeviceKind::Oltc { .. }, DeviceState::Oltc { .. })
                    | (DeviceKind::Tcsc { .. }, DeviceState::Tcsc { .. })
            );
            if !ok {
                return Err(ValidateError::Shape(format!("device {} state has the wrong type", dev.index)));
            }
        }
    }
    Ok(())
}

/// Squared-voltage range of each bus, widened at OLTC buses by the ratio grid.
fn w_ranges(sc: &Scenario) -> Vec<(f64, f64)> {
    sc.network
        .buses
        .iter()
        .map(|b| {
            let (lo, hi) = (b.v_min * b.v_min, b.v_max * b.v_max);
            match sc.devices.oltc_at(b.id).map(|d| &d.kind) {
                Some(DeviceKind::Oltc { phi_min, delta_steps, .. }) => {
                    let first = phi_min + delta_steps[0];
                    let last = phi_min + delta_steps[delta_steps.len() - 1];
                    (lo * first * first, hi * last * last)
                }
                _ => (lo, hi),
            }
        })
        .collect()
}

/// McCormick inequalities of `h = w * b` over the given boxes.
fn envelope_excess(h: f64, w: f64, b: f64, wb: (f64, f64), bb: (f64, f64)) -> f64 {
    let under1 = wb.0 * b + bb.0 * w - wb.0 * bb.0;
    let under2 = wb.1 * b + bb.1 * w - wb.1 * bb.1;
    let over1 = wb.1 * b + bb.0 * w - wb.1 * bb.0;
    let over2 = wb.0 * b + bb.1 * w - wb.0 * bb.1;
    [under1 - h, under2 - h, h - over1, h - over2].into_iter().fold(0.0, f64::max)
}

/// Lists every constraint of the scheduling problem violated by `schedule`.
/// An empty list means the schedule is feasible within tolerance.
pub fn verify_schedule(sc: &Scenario, schedule: &Schedule) -> Result<Vec<Violation>, ValidateError> {
    shape(sc, schedule)?;
    let net = &sc.network;
    let ranges = w_ranges(sc);
    let mut c = Collector { out: Vec::new() };
    let sigma = match sc.flags.tcsc_sign {
        TcscSign::Consistent => -1.0,
        TcscSign::Flipped => 1.0,
    };

    for (t, period) in schedule.periods.iter().enumerate() {
        let w: Vec<f64> = period.buses.iter().map(|b| b.w).collect();

        for bus in &net.buses {
            let i = bus.id;
            if sc.devices.oltc_at(i).is_none() {
                c.window("voltage", i, t, w[i], bus.v_min * bus.v_min, bus.v_max * bus.v_max);
            }
            let st = &period.buses[i];
            if bus.gen_flag {
                c.window("gen_p", i, t, st.p_gen, bus.p_min, bus.p_max);
                c.window("gen_q", i, t, st.q_gen, bus.q_min, bus.q_max);
            } else {
                c.equal("gen_p", i, t, st.p_gen, 0.0);
                c.equal("gen_q", i, t, st.q_gen, 0.0);
            }
        }

        // complex flows from W and the TCSC auxiliaries
        let mut out = vec![Complex64::new(0.0, 0.0); net.buses.len()];
        for line in &net.lines {
            let st = &period.lines[line.id];
            let w_ft = Complex64::new(st.w_re, st.w_im);
            let half = Complex64::new(0.0, 0.5 * line.b);
            let mut s_ft = line.y.conj() * (w[line.from] - w_ft) - half * w[line.from];
            let mut s_tf = line.y.conj() * (w[line.to] - w_ft.conj()) - half * w[line.to];
            if let Some(dev) = sc.devices.tcsc_on(line.id) {
                let DeviceState::Tcsc { status, db, f_from, f_to, g_re, g_im } = period.devices[dev.index] else {
                    unreachable!("shape checked")
                };
                let g = Complex64::new(g_re, g_im);
                let j_sigma = Complex64::new(0.0, sigma);
                s_ft += j_sigma * (f_from - g);
                s_tf += j_sigma * (f_to - g.conj());

                let x = line.x;
                let (b_min, b_max) = (-1.0 / (x * (1.0 + TCSC_DX_MIN)), -1.0 / (x * (1.0 + TCSC_DX_MAX)));
                let (b_lo, b_hi) = match sc.flags.tcsc_mode {
                    TcscMode::Variation => (b_min + 1.0 / x, b_max + 1.0 / x),
                    TcscMode::Literal => (b_min, b_max),
                };
                let (b_lo, b_hi) = (b_lo.min(b_hi), b_lo.max(b_hi));
                if status {
                    c.window("tcsc_range", dev.index, t, db, b_lo, b_hi);
                } else {
                    for v in [db, f_from, f_to, g_re, g_im] {
                        c.equal("tcsc_off", dev.index, t, v, 0.0);
                    }
                }
                let bb = (b_lo.min(0.0), b_hi.max(0.0));
                let off = (ranges[line.from].1 * ranges[line.to].1).sqrt();
                let fb = &net.buses[line.from];
                let re_box = if sc.flags.literal_envelope {
                    (fb.v_min * fb.v_min, fb.v_max * fb.v_max)
                } else {
                    (-off, off)
                };
                for (fam, h, wv, wb) in [
                    ("envelope_f_from", f_from, w[line.from], ranges[line.from]),
                    ("envelope_f_to", f_to, w[line.to], ranges[line.to]),
                    ("envelope_g_re", g_re, st.w_re, re_box),
                    ("envelope_g_im", g_im, st.w_im, (-off, off)),
                ] {
                    c.check(fam, line.id, t, envelope_excess(h, wv, db, wb, bb), h);
                }
            }
            c.equal("flow_p_from", line.id, t, st.p_from, s_ft.re);
            c.equal("flow_q_from", line.id, t, st.q_from, s_ft.im);
            c.equal("flow_p_to", line.id, t, st.p_to, s_tf.re);
            c.equal("flow_q_to", line.id, t, st.q_to, s_tf.im);

            let prod = w[line.from] * w[line.to];
            c.check("soc", line.id, t, (w_ft.norm() - prod.max(0.0).sqrt()).max(0.0), prod.sqrt());
            if line.s_max.is_finite() {
                let sf = Complex64::new(st.p_from, st.q_from).norm();
                let stf = Complex64::new(st.p_to, st.q_to).norm();
                c.check("thermal_from", line.id, t, (sf - line.s_max).max(0.0), line.s_max);
                c.check("thermal_to", line.id, t, (stf - line.s_max).max(0.0), line.s_max);
            }
            out[line.from] += Complex64::new(st.p_from, st.q_from);
            out[line.to] += Complex64::new(st.p_to, st.q_to);
        }

        let mut q_dev = vec![0.0; net.buses.len()];
        for dev in sc.devices.iter() {
            let d = dev.index;
            let state = &period.devices[d];
            q_dev[dev.bus] += state.q_injection();
            match (&dev.kind, state) {
                (DeviceKind::Shunt { blocks }, DeviceState::Shunt { status, blocks: chosen, q }) => {
                    let level: f64 = blocks.iter().zip(chosen).filter(|(_, &on)| on).map(|(b, _)| b).sum();
                    if *status {
                        c.equal("shunt_level", d, t, *q, level);
                        if !chosen.iter().any(|&on| on) {
                            c.check("shunt_select", d, t, 1.0, 1.0);
                        }
                    } else {
                        c.equal("shunt_off", d, t, *q, 0.0);
                    }
                }
                (DeviceKind::Statcom { q_max }, DeviceState::Statcom { status, q }) => {
                    let cap = if *status { *q_max } else { 0.0 };
                    c.check("statcom", d, t, (q.abs() - cap).max(0.0), *q_max);
                }
                (DeviceKind::Oltc { delta_sq, max_step, .. }, DeviceState::Oltc { tap, u_base, u_reg }) => {
                    let host = &net.buses[dev.bus];
                    if *tap == 0 || *tap > delta_sq.len() {
                        c.check("oltc_tap", d, t, 1.0, 1.0);
                        continue;
                    }
                    c.window("oltc_base", d, t, *u_base, host.v_min * host.v_min, host.v_max * host.v_max);
                    c.equal("oltc_ratio", d, t, *u_reg, delta_sq[tap - 1] * u_base);
                    c.equal("oltc_link", dev.bus, t, w[dev.bus], *u_reg);
                    let before = match t.checked_sub(1).map(|s| &schedule.periods[s].devices[d]) {
                        Some(DeviceState::Oltc { tap, .. }) => *tap,
                        _ => dev.initial.tap,
                    };
                    let moved = tap.abs_diff(before) as f64;
                    c.check("tap_transition", d, t, (moved - f64::from(*max_step)).max(0.0), 1.0);
                }
                _ => {}
            }
        }

        for bus in &net.buses {
            let i = bus.id;
            let st = &period.buses[i];
            let p = st.p_gen - bus.gs * w[i] - out[i].re - sc.demand.p[t][i];
            let q = st.q_gen + q_dev[i] + bus.bs * w[i] - out[i].im - sc.demand.q[t][i];
            c.check("balance_p", i, t, p.abs(), sc.demand.p[t][i]);
            c.check("balance_q", i, t, q.abs(), sc.demand.q[t][i]);
        }

        let actions = actions_at(sc, schedule, t) as f64;
        c.check("budget", 0, t, (actions - f64::from(sc.budget)).max(0.0), 1.0);
    }

    let total = schedule.total_loss();
    c.check("objective", 0, 0, (schedule.objective - total).abs(), total);
    Ok(c.out)
}
