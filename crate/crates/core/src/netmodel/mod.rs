//! Network and scenario data model.
//!
//! Everything in here is immutable once built. Internal bus ids are dense and
//! 0-based; the ids found in the case file are kept as `ext_id` for reports.

mod config;
mod matpower;
mod profiles;
mod scenario;

pub use config::{load_device_config, Device, DeviceKind, DeviceSet, InitialState};
pub use matpower::{parse_matpower_case, write_matpower_case};
pub use profiles::{load_profiles, DemandSeries};
pub use scenario::{build_scenario, ModelFlags, Scenario, ScenarioOptions, TcscMode, TcscSign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("missing table `mpc.{0}`")]
    MissingTable(&'static str),
    #[error("table `mpc.{table}` row {row}: {msg}")]
    BadRow {
        table: &'static str,
        row: usize,
        msg: String,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u64),
    #[error("unknown bus {bus} referenced by {by}")]
    UnknownBus { bus: u64, by: String },
    #[error("branch {from}-{to}: nonpositive reactance {x}")]
    NonPositiveReactance { from: u64, to: u64, x: f64 },
    #[error("branch {from}-{to}: off-nominal tap ratio {ratio} or shift {shift} not supported (model OLTCs as devices)")]
    OffNominalTap {
        from: u64,
        to: u64,
        ratio: f64,
        shift: f64,
    },
    #[error("bus {0}: invalid voltage bounds [{1}, {2}]")]
    VoltageBounds(u64, f64, f64),
    #[error("network is not connected (bus {0} unreachable)")]
    Disconnected(u64),
    #[error("device config: {0}")]
    DeviceConfig(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

impl BusKind {
    fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

/// Unit system of the quantities stored in a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    /// MW / MVAr / MVA as found in case files.
    Physical,
    /// Normalized on `base_mva`.
    PerUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub ext_id: u64,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    /// Aggregated limits of the in-service generators at the bus (zero when none).
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub base_demand_p: f64,
    pub base_demand_q: f64,
    /// Fixed shunt admittance (consumed power at 1 p.u. voltage).
    pub gs: f64,
    pub bs: f64,
    pub gen_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gen {
    pub bus: usize,
    pub p_gen: f64,
    pub q_gen: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub v_set: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Apparent power limit; `f64::INFINITY` when the case gives no rating.
    pub s_max: f64,
    /// Series admittance 1/(r + jx).
    pub y: Complex64,
}

/// Series admittance of an `r + jx` branch.
pub fn series_admittance(r: f64, x: f64) -> Complex64 {
    let d = r * r + x * x;
    Complex64::new(r / d, -x / d)
}

impl Line {
    pub fn new(id: usize, from: usize, to: usize, r: f64, x: f64, b: f64, s_max: f64) -> Self {
        Line {
            id,
            from,
            to,
            r,
            x,
            b,
            s_max,
            y: series_admittance(r, x),
        }
    }

    pub fn g(&self) -> f64 {
        self.y.re
    }

    pub fn bser(&self) -> f64 {
        self.y.im
    }

    /// The other end of the line as seen from `bus`.
    pub fn other(&self, bus: usize) -> usize {
        if self.from == bus {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub units: Units,
    pub buses: Vec<Bus>,
    pub gens: Vec<Gen>,
    pub lines: Vec<Line>,
}

impl Network {
    pub fn bus_by_ext(&self, ext: u64) -> Option<usize> {
        self.buses.iter().position(|b| b.ext_id == ext)
    }

    /// First line joining the two external bus ids, in either orientation.
    pub fn line_by_ext(&self, a: u64, b: u64) -> Option<usize> {
        let (ia, ib) = (self.bus_by_ext(a)?, self.bus_by_ext(b)?);
        self.lines
            .iter()
            .position(|l| (l.from == ia && l.to == ib) || (l.from == ib && l.to == ia))
    }

    pub fn slack(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Lines incident to each bus.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.buses.len()];
        for l in &self.lines {
            inc[l.from].push(l.id);
            inc[l.to].push(l.id);
        }
        inc
    }

    /// Converts to per-unit on `base_mva`; a per-unit network is returned as is.
    pub fn to_per_unit(&self) -> Network {
        match self.units {
            Units::PerUnit => self.clone(),
            Units::Physical => self.rescale(Units::PerUnit),
        }
    }

    pub fn to_physical(&self) -> Network {
        match self.units {
            Units::Physical => self.clone(),
            Units::PerUnit => self.rescale(Units::Physical),
        }
    }

    fn rescale(&self, units: Units) -> Network {
        // Division for the per-unit direction keeps parse results equal to
        // `value / base` bit for bit.
        let base = self.base_mva;
        let conv = |v: f64| -> f64 {
            if units == Units::PerUnit {
                v / base
            } else {
                scale_back(v, base)
            }
        };
        let mut n = self.clone();
        n.units = units;
        for b in &mut n.buses {
            b.p_min = conv(b.p_min);
            b.p_max = conv(b.p_max);
            b.q_min = conv(b.q_min);
            b.q_max = conv(b.q_max);
            b.base_demand_p = conv(b.base_demand_p);
            b.base_demand_q = conv(b.base_demand_q);
            b.gs = conv(b.gs);
            b.bs = conv(b.bs);
        }
        for g in &mut n.gens {
            g.p_gen = conv(g.p_gen);
            g.q_gen = conv(g.q_gen);
            g.q_max = conv(g.q_max);
            g.q_min = conv(g.q_min);
            g.p_max = conv(g.p_max);
            g.p_min = conv(g.p_min);
        }
        for l in &mut n.lines {
            if l.s_max.is_finite() {
                l.s_max = conv(l.s_max);
            }
        }
        n
    }

    pub(crate) fn aggregate_gens(&mut self) {
        for b in &mut self.buses {
            b.p_min = 0.0;
            b.p_max = 0.0;
            b.q_min = 0.0;
            b.q_max = 0.0;
            b.gen_flag = false;
        }
        for g in self.gens.iter().filter(|g| g.in_service) {
            let b = &mut self.buses[g.bus];
            b.p_min += g.p_min;
            b.p_max += g.p_max;
            b.q_min += g.q_min;
            b.q_max += g.q_max;
            b.gen_flag = true;
        }
    }

    pub(crate) fn check_connected(&self) -> Result<(), NetError> {
        if self.buses.is_empty() {
            return Ok(());
        }
        let inc = self.incidence();
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &l in &inc[i] {
                let j = self.lines[l].other(i);
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(NetError::Disconnected(self.buses[i].ext_id)),
            None => Ok(()),
        }
    }
}

/// Finds `m` with `m / base == pu` exactly, starting from `pu * base`.
fn scale_back(pu: f64, base: f64) -> f64 {
    let guess = pu * base;
    if guess / base == pu || !guess.is_finite() {
        return guess;
    }
    let mut lo = guess;
    let mut hi = guess;
    for _ in 0..8 {
        lo = next_down(lo);
        hi = next_up(hi);
        if hi / base == pu {
            return hi;
        }
        if lo / base == pu {
            return lo;
        }
    }
    guess
}

fn next_up(v: f64) -> f64 {
    if v == 0.0 {
        return f64::from_bits(1);
    }
    let bits = v.to_bits();
    if v > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

fn next_down(v: f64) -> f64 {
    -next_up(-v)
}
