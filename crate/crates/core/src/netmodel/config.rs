//! Device configuration documents (TOML or JSON).
//!
//! ```toml
//! [[device]]
//! type = "shunt"
//! bus = 5
//! blocks = [0.10, 0.20, 0.40]
//!
//! [[device]]
//! type = "oltc"
//! bus = 7
//! phi_min = 0.9
//! step = 0.0125
//! taps = 17
//! max_step = 3
//!
//! [[device]]
//! type = "tcsc"
//! line = [4, 5]
//! ```
//!
//! Bus ids are the ones used in the case file. Reactive quantities are per
//! unit on the system base.

use serde::{Deserialize, Serialize};

use super::{NetError, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DeviceKind {
    Shunt {
        /// Discrete reactive blocks, all `>= 0`.
        blocks: Vec<f64>,
    },
    Statcom {
        /// Symmetric capability: `|q| <= q_max`.
        q_max: f64,
    },
    Oltc {
        phi_min: f64,
        /// Ratio increment of each tap over `phi_min`, strictly increasing.
        delta_steps: Vec<f64>,
        /// `(phi_min + delta_steps[n])^2`.
        delta_sq: Vec<f64>,
        max_step: u32,
    },
    Tcsc {
        line: usize,
        x_line: f64,
    },
}

impl DeviceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DeviceKind::Shunt { .. } => "shunt",
            DeviceKind::Statcom { .. } => "statcom",
            DeviceKind::Oltc { .. } => "oltc",
            DeviceKind::Tcsc { .. } => "tcsc",
        }
    }
}

/// Device state at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialState {
    pub status: bool,
    /// 1-based tap index; meaningful for OLTCs only.
    pub tap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub index: usize,
    /// Host bus; the from-bus of the host line for a TCSC.
    pub bus: usize,
    pub kind: DeviceKind,
    pub initial: InitialState,
}

impl Device {
    pub fn is_oltc(&self) -> bool {
        matches!(self.kind, DeviceKind::Oltc { .. })
    }

    /// Number of taps (OLTC) or blocks (shunt); zero otherwise.
    pub fn grid_len(&self) -> usize {
        match &self.kind {
            DeviceKind::Shunt { blocks } => blocks.len(),
            DeviceKind::Oltc { delta_steps, .. } => delta_steps.len(),
            _ => 0,
        }
    }

    /// Tap ratio of 1-based tap `n`.
    pub fn tap_ratio(&self, n: usize) -> Option<f64> {
        match &self.kind {
            DeviceKind::Oltc {
                phi_min,
                delta_steps,
                ..
            } => delta_steps.get(n.checked_sub(1)?).map(|d| phi_min + d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceSet {
    pub devices: Vec<Device>,
}

impl DeviceSet {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Device> {
        self.devices.iter()
    }

    pub fn oltc_at(&self, bus: usize) -> Option<&Device> {
        self.devices.iter().find(|d| d.is_oltc() && d.bus == bus)
    }

    pub fn tcsc_on(&self, line: usize) -> Option<&Device> {
        self.devices
            .iter()
            .find(|d| matches!(d.kind, DeviceKind::Tcsc { line: l, .. } if l == line))
    }

    /// Keeps only the devices accepted by `keep`, re-indexing densely.
    pub fn filter(&self, mut keep: impl FnMut(&Device) -> bool) -> DeviceSet {
        let devices = self
            .devices
            .iter()
            .filter(|d| keep(d))
            .cloned()
            .enumerate()
            .map(|(k, mut d)| {
                d.index = k;
                d
            })
            .collect();
        DeviceSet { devices }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(default)]
    device: Vec<RawDevice>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    #[serde(rename = "type")]
    kind: String,
    bus: Option<u64>,
    line: Option<[u64; 2]>,
    blocks: Option<Vec<f64>>,
    q_max: Option<f64>,
    phi_min: Option<f64>,
    delta_steps: Option<Vec<f64>>,
    step: Option<f64>,
    taps: Option<usize>,
    max_step: Option<u32>,
    initial_tap: Option<usize>,
    initial_status: Option<bool>,
}

fn cfg_err(k: usize, msg: impl std::fmt::Display) -> NetError {
    NetError::DeviceConfig(format!("device {}: {msg}", k + 1))
}

/// Parses a TOML or JSON device document against `net`.
pub fn load_device_config(text: &str, net: &Network) -> Result<DeviceSet, NetError> {
    let doc: RawDoc = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| NetError::DeviceConfig(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| NetError::DeviceConfig(e.to_string()))?
    };
    let mut devices = Vec::with_capacity(doc.device.len());
    for (k, raw) in doc.device.into_iter().enumerate() {
        devices.push(convert(k, raw, net)?);
    }
    let set = DeviceSet { devices };
    for d in set.iter().filter(|d| d.is_oltc()) {
        if set.iter().any(|e| e.is_oltc() && e.bus == d.bus && e.index < d.index) {
            return Err(cfg_err(
                d.index,
                format!("second OLTC on bus {}", net.buses[d.bus].ext_id),
            ));
        }
    }
    Ok(set)
}

fn host_bus(k: usize, raw: &RawDevice, net: &Network) -> Result<usize, NetError> {
    let ext = raw.bus.ok_or_else(|| cfg_err(k, "missing `bus`"))?;
    net.bus_by_ext(ext).ok_or_else(|| NetError::UnknownBus {
        bus: ext,
        by: format!("device {}", k + 1),
    })
}

fn convert(k: usize, raw: RawDevice, net: &Network) -> Result<Device, NetError> {
    let status = raw.initial_status.unwrap_or(false);
    let (bus, kind, tap) = match raw.kind.as_str() {
        "shunt" => {
            let bus = host_bus(k, &raw, net)?;
            let blocks = raw.blocks.clone().unwrap_or_default();
            if blocks.is_empty() {
                return Err(cfg_err(k, "shunt block list is empty"));
            }
            if blocks.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(cfg_err(k, "shunt blocks must be nonnegative"));
            }
            (bus, DeviceKind::Shunt { blocks }, 0)
        }
        "statcom" => {
            let bus = host_bus(k, &raw, net)?;
            let q_max = raw.q_max.ok_or_else(|| cfg_err(k, "missing `q_max`"))?;
            if !(q_max > 0.0 && q_max.is_finite()) {
                return Err(cfg_err(k, "statcom `q_max` must be positive"));
            }
            (bus, DeviceKind::Statcom { q_max }, 0)
        }
        "oltc" => {
            let bus = host_bus(k, &raw, net)?;
            let phi_min = raw.phi_min.ok_or_else(|| cfg_err(k, "missing `phi_min`"))?;
            if !(phi_min > 0.0) {
                return Err(cfg_err(k, "`phi_min` must be positive"));
            }
            let delta_steps = match (&raw.delta_steps, raw.step, raw.taps) {
                (Some(d), None, None) => d.clone(),
                (None, Some(step), Some(taps)) => {
                    (0..taps).map(|n| n as f64 * step).collect::<Vec<_>>()
                }
                (None, None, None) => return Err(cfg_err(k, "OLTC tap grid is empty")),
                _ => {
                    return Err(cfg_err(
                        k,
                        "give either `delta_steps` or both `step` and `taps`",
                    ))
                }
            };
            if delta_steps.is_empty() {
                return Err(cfg_err(k, "OLTC tap grid is empty"));
            }
            if delta_steps.len() < 2 {
                return Err(cfg_err(k, "OLTC needs at least two taps"));
            }
            if delta_steps[0] < 0.0 || delta_steps.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(cfg_err(k, "tap increments must be nonnegative and strictly increasing"));
            }
            let ratios: Vec<f64> = delta_steps.iter().map(|d| phi_min + d).collect();
            let unity = ratios
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
                .map(|(n, _)| n + 1)
                .unwrap_or(1);
            if (ratios[unity - 1] - 1.0).abs() > 1e-9 {
                return Err(cfg_err(k, "OLTC tap grid has no unity ratio"));
            }
            let tap = raw.initial_tap.unwrap_or(unity);
            if tap == 0 || tap > ratios.len() {
                return Err(cfg_err(k, format!("initial tap {tap} outside 1..={}", ratios.len())));
            }
            let delta_sq = ratios.iter().map(|r| r * r).collect();
            let max_step = raw.max_step.unwrap_or(1);
            if max_step == 0 {
                return Err(cfg_err(k, "`max_step` must be at least 1"));
            }
            (
                bus,
                DeviceKind::Oltc {
                    phi_min,
                    delta_steps,
                    delta_sq,
                    max_step,
                },
                tap,
            )
        }
        "tcsc" => {
            let [a, b] = raw.line.ok_or_else(|| cfg_err(k, "tcsc without host `line`"))?;
            let line = net
                .line_by_ext(a, b)
                .ok_or_else(|| cfg_err(k, format!("no line between buses {a} and {b}")))?;
            let l = &net.lines[line];
            (
                l.from,
                DeviceKind::Tcsc {
                    line,
                    x_line: l.x,
                },
                0,
            )
        }
        other => return Err(cfg_err(k, format!("unknown device type `{other}`"))),
    };
    Ok(Device {
        index: k,
        bus,
        kind,
        initial: InitialState { status, tap },
    })
}
