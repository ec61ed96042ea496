//! Full AC power flow in polar coordinates, solved by Newton's method.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ValidateError;
use crate::netmodel::{BusKind, DeviceKind, Network, Scenario};
use crate::schedule::{DeviceState, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PfBus {
    Slack,
    Pv,
    Pq,
}

/// A power-flow instance. `p_spec`/`q_spec` are net injections (generation
/// minus demand plus device injections); fixed bus shunts live in the
/// admittance matrix. Voltage magnitudes of slack and PV buses are held at
/// `v_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfProblem {
    pub network: Network,
    pub kinds: Vec<PfBus>,
    pub p_spec: Vec<f64>,
    pub q_spec: Vec<f64>,
    pub v_start: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the final power mismatch.
    pub mismatch: f64,
    /// Sum of line losses.
    pub losses: f64,
    /// Net complex injection at every bus.
    pub injections: Vec<Complex64>,
    /// `(from-side, to-side)` complex flows per line.
    pub flows: Vec<(Complex64, Complex64)>,
}

impl PfSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm.iter().zip(&self.va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    }

    /// `W = v v^H`: the diagonal, and `W_ft` per line.
    pub fn lifted(&self, net: &Network) -> (Vec<f64>, Vec<Complex64>) {
        let v = self.voltages();
        let diag = v.iter().map(|x| x.norm_sqr()).collect();
        let off = net.lines.iter().map(|l| v[l.from] * v[l.to].conj()).collect();
        (diag, off)
    }
}

fn admittance_matrix(net: &Network) -> DMatrix<Complex64> {
    let n = net.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for l in &net.lines {
        let sh = Complex64::new(0.0, 0.5 * l.b);
        y[(l.from, l.from)] += l.y + sh;
        y[(l.to, l.to)] += l.y + sh;
        y[(l.from, l.to)] -= l.y;
        y[(l.to, l.from)] -= l.y;
    }
    for b in &net.buses {
        y[(b.id, b.id)] += Complex64::new(b.gs, b.bs);
    }
    y
}

fn line_flows(net: &Network, v: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    net.lines
        .iter()
        .map(|l| {
            let sh = Complex64::new(0.0, 0.5 * l.b);
            let (vf, vt) = (v[l.from], v[l.to]);
            let i_ft = l.y * (vf - vt) + sh * vf;
            let i_tf = l.y * (vt - vf) + sh * vt;
            (vf * i_ft.conj(), vt * i_tf.conj())
        })
        .collect()
}

/// Solves the AC power-flow equations from `problem.v_start` with flat angles.
pub fn newton_power_flow(problem: &PfProblem, opts: &PfOptions) -> Result<PfSolution, ValidateError> {
    let net = &problem.network;
    let n = net.buses.len();
    let slack = problem
        .kinds
        .iter()
        .position(|k| *k == PfBus::Slack)
        .ok_or_else(|| ValidateError::Shape("no slack bus".into()))?;
    if !net.buses[slack].gen_flag {
        return Err(ValidateError::SlackNotGenerator(net.buses[slack].ext_id));
    }
    let ybus = admittance_matrix(net);
    let angle_idx: Vec<usize> = (0..n).filter(|&i| problem.kinds[i] != PfBus::Slack).collect();
    let mag_idx: Vec<usize> = (0..n).filter(|&i| problem.kinds[i] == PfBus::Pq).collect();
    let na = angle_idx.len();
    let dim = na + mag_idx.len();

    let mut vm = problem.v_start.clone();
    let mut va = vec![0.0; n];
    let injections = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        (0..n)
            .map(|i| {
                let cur: Complex64 = (0..n).map(|k| ybus[(i, k)] * v[k]).sum();
                v[i] * cur.conj()
            })
            .collect()
    };

    let mut iterations = 0;
    loop {
        let s = injections(&vm, &va);
        let mut f = DVector::zeros(dim);
        for (r, &i) in angle_idx.iter().enumerate() {
            f[r] = s[i].re - problem.p_spec[i];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            f[na + r] = s[i].im - problem.q_spec[i];
        }
        let mismatch = f.amax();
        if !mismatch.is_finite() {
            return Err(ValidateError::Divergence { iterations, mismatch });
        }
        if mismatch <= opts.tol {
            let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
            let flows = line_flows(net, &v);
            let losses = flows.iter().map(|(a, b)| a.re + b.re).sum();
            return Ok(PfSolution { vm, va, iterations, mismatch, losses, injections: s, flows });
        }
        if iterations >= opts.max_iter {
            return Err(ValidateError::Divergence { iterations, mismatch });
        }

        // partial derivatives of P and Q with respect to angle and magnitude
        let dp_da = |i: usize, k: usize| -> f64 {
            let (g, b) = (ybus[(i, k)].re, ybus[(i, k)].im);
            if i == k {
                -s[i].im - b * vm[i] * vm[i]
            } else {
                let d = va[i] - va[k];
                vm[i] * vm[k] * (g * d.sin() - b * d.cos())
            }
        };
        let dp_dv = |i: usize, k: usize| -> f64 {
            let (g, b) = (ybus[(i, k)].re, ybus[(i, k)].im);
            if i == k {
                s[i].re / vm[i] + g * vm[i]
            } else {
                let d = va[i] - va[k];
                vm[i] * (g * d.cos() + b * d.sin())
            }
        };
        let dq_da = |i: usize, k: usize| -> f64 {
            let (g, b) = (ybus[(i, k)].re, ybus[(i, k)].im);
            if i == k {
                s[i].re - g * vm[i] * vm[i]
            } else {
                let d = va[i] - va[k];
                -vm[i] * vm[k] * (g * d.cos() + b * d.sin())
            }
        };
        let dq_dv = |i: usize, k: usize| -> f64 {
            let (g, b) = (ybus[(i, k)].re, ybus[(i, k)].im);
            if i == k {
                s[i].im / vm[i] - b * vm[i]
            } else {
                let d = va[i] - va[k];
                vm[i] * (g * d.sin() - b * d.cos())
            }
        };
        let mut jac = DMatrix::zeros(dim, dim);
        for (r, &i) in angle_idx.iter().enumerate() {
            for (c, &k) in angle_idx.iter().enumerate() {
                jac[(r, c)] = dp_da(i, k);
            }
            for (c, &k) in mag_idx.iter().enumerate() {
                jac[(r, na + c)] = dp_dv(i, k);
            }
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            for (c, &k) in angle_idx.iter().enumerate() {
                jac[(na + r, c)] = dq_da(i, k);
            }
            for (c, &k) in mag_idx.iter().enumerate() {
                jac[(na + r, na + c)] = dq_dv(i, k);
            }
        }
        let step = jac.lu().solve(&(-f)).ok_or(ValidateError::Singular(iterations))?;
        for (r, &i) in angle_idx.iter().enumerate() {
            va[i] += step[r];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            vm[i] += step[na + r];
        }
        iterations += 1;
    }
}

/// Power-flow instance of period `t` with every device decision of the
/// schedule fixed: shunt and STATCOM outputs as constant reactive injections,
/// TCSC susceptance added to the host line. OLTC buses are load buses.
pub fn period_power_flow(sc: &Scenario, schedule: &Schedule, t: usize) -> PfProblem {
    let mut network = sc.network.clone();
    let period = &schedule.periods[t];
    let n = network.buses.len();
    let mut q_dev = vec![0.0; n];
    for dev in sc.devices.iter() {
        match (&dev.kind, &period.devices[dev.index]) {
            (DeviceKind::Tcsc { line, .. }, DeviceState::Tcsc { status: true, db, .. }) => {
                network.lines[*line].y.im += db;
            }
            (_, st) => q_dev[dev.bus] += st.q_injection(),
        }
    }
    let kinds: Vec<PfBus> = network
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Slack => PfBus::Slack,
            _ if b.gen_flag && sc.devices.oltc_at(b.id).is_none() => PfBus::Pv,
            _ => PfBus::Pq,
        })
        .collect();
    let p_spec = (0..n).map(|i| period.buses[i].p_gen - sc.demand.p[t][i]).collect();
    let q_spec = (0..n).map(|i| period.buses[i].q_gen + q_dev[i] - sc.demand.q[t][i]).collect();
    let v_start = period.buses.iter().map(|b| b.w.max(0.0).sqrt()).collect();
    PfProblem { network, kinds, p_spec, q_spec, v_start }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Bus, Line, Units};

    pub(crate) fn bus(id: usize, kind: BusKind, gen: bool) -> Bus {
        Bus {
            id,
            ext_id: id as u64 + 1,
            kind,
            v_min: 0.9,
            v_max: 1.1,
            p_min: 0.0,
            p_max: if gen { 10.0 } else { 0.0 },
            q_min: if gen { -10.0 } else { 0.0 },
            q_max: if gen { 10.0 } else { 0.0 },
            base_demand_p: 0.0,
            base_demand_q: 0.0,
            gs: 0.0,
            bs: 0.0,
            gen_flag: gen,
        }
    }

    fn two_bus(r: f64, x: f64) -> Network {
        Network {
            name: "two".into(),
            base_mva: 100.0,
            units: Units::PerUnit,
            buses: vec![bus(0, BusKind::Slack, true), bus(1, BusKind::Pq, false)],
            gens: vec![],
            lines: vec![Line::new(0, 0, 1, r, x, 0.0, f64::INFINITY)],
        }
    }

    #[test]
    fn flat_start_without_load() {
        let p = PfProblem {
            network: two_bus(0.0, 0.1),
            kinds: vec![PfBus::Slack, PfBus::Pq],
            p_spec: vec![0.0, 0.0],
            q_spec: vec![0.0, 0.0],
            v_start: vec![1.0, 1.0],
        };
        let s = newton_power_flow(&p, &PfOptions::default()).unwrap();
        assert_eq!(s.iterations, 0);
        assert!(s.losses.abs() < 1e-15 && (s.vm[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn losses_equal_current_squared_times_resistance() {
        let p = PfProblem {
            network: two_bus(0.01, 0.1),
            kinds: vec![PfBus::Slack, PfBus::Pq],
            p_spec: vec![0.0, -0.5],
            q_spec: vec![0.0, -0.1],
            v_start: vec![1.0, 1.0],
        };
        let s = newton_power_flow(&p, &PfOptions::default()).unwrap();
        let v = s.voltages();
        let current = (v[0] - v[1]) * p.network.lines[0].y;
        assert!(s.losses > 0.0);
        assert!((s.losses - current.norm_sqr() * 0.01).abs() < 1e-10);
        assert!((s.injections[1].re + 0.5).abs() < 1e-10);
    }

    #[test]
    fn slack_without_generator_is_rejected() {
        let mut net = two_bus(0.01, 0.1);
        net.buses[0].gen_flag = false;
        let p = PfProblem {
            network: net,
            kinds: vec![PfBus::Slack, PfBus::Pq],
            p_spec: vec![0.0, 0.0],
            q_spec: vec![0.0, 0.0],
            v_start: vec![1.0, 1.0],
        };
        assert!(matches!(
            newton_power_flow(&p, &PfOptions::default()),
            Err(ValidateError::SlackNotGenerator(1))
        ));
    }

    #[test]
    fn impossible_load_diverges() {
        let p = PfProblem {
            network: two_bus(0.01, 0.1),
            kinds: vec![PfBus::Slack, PfBus::Pq],
            p_spec: vec![0.0, -50.0],
            q_spec: vec![0.0, -50.0],
            v_start: vec![1.0, 1.0],
        };
        assert!(newton_power_flow(&p, &PfOptions::default()).is_err());
    }
}
