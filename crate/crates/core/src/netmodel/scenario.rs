use serde::{Deserialize, Serialize};

use super::{DemandSeries, DeviceKind, DeviceSet, NetError, Network};

/// How the TCSC susceptance variable is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TcscMode {
    /// Deviation from the line's own susceptance `-1/x`.
    #[default]
    Variation,
    /// Total modified susceptance, bounds `[-1/(0.2x), -1/(1.2x)]`.
    Literal,
}

/// Sign of the TCSC correction term in the branch flow equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TcscSign {
    /// `-j(f - g)`, from conjugating `j dB`.
    #[default]
    Consistent,
    /// `+j(f - g)`.
    Flipped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub tcsc_mode: TcscMode,
    pub tcsc_sign: TcscSign,
    /// Box the real part of `W_ij` by `[v_min_i^2, v_max_i^2]` in the TCSC
    /// envelopes instead of `+-v_max_i v_max_j`.
    pub literal_envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub horizon: usize,
    /// Maximum actions per period; negative values are rejected.
    pub budget: i64,
    pub flags: ModelFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: Network,
    pub devices: DeviceSet,
    pub demand: DemandSeries,
    pub horizon: usize,
    pub budget: u32,
    pub flags: ModelFlags,
}

impl Scenario {
    pub fn base_mva(&self) -> f64 {
        self.network.base_mva
    }

    /// Same scenario with devices replaced (re-validated).
    pub fn with_devices(&self, devices: DeviceSet) -> Result<Scenario, NetError> {
        build_scenario(
            self.network.clone(),
            devices,
            self.demand.clone(),
            ScenarioOptions {
                horizon: self.horizon,
                budget: self.budget as i64,
                flags: self.flags,
            },
        )
    }
}

pub fn build_scenario(
    network: Network,
    devices: DeviceSet,
    demand: DemandSeries,
    options: ScenarioOptions,
) -> Result<Scenario, NetError> {
    let network = network.to_per_unit();
    if options.horizon == 0 {
        return Err(NetError::Scenario("horizon must be at least 1".into()));
    }
    if demand.periods() != options.horizon {
        return Err(NetError::Scenario(format!(
            "demand covers {} periods but the horizon is {}",
            demand.periods(),
            options.horizon
        )));
    }
    if options.budget < 0 {
        return Err(NetError::Scenario(format!(
            "action budget must be nonnegative, got {}",
            options.budget
        )));
    }
    let nb = network.buses.len();
    if demand.p.iter().chain(&demand.q).any(|row| row.len() != nb) {
        return Err(NetError::Scenario("demand rows do not match the bus count".into()));
    }
    if network.slack().is_none() {
        return Err(NetError::Scenario("network has no slack bus".into()));
    }
    for (k, d) in devices.iter().enumerate() {
        if d.index != k {
            return Err(NetError::Scenario(format!("device {k} has index {}", d.index)));
        }
        if d.bus >= nb {
            return Err(NetError::Scenario(format!("device {k} references bus {}", d.bus)));
        }
        match &d.kind {
            DeviceKind::Tcsc { line, .. } => {
                if *line >= network.lines.len() {
                    return Err(NetError::Scenario(format!("device {k} references line {line}")));
                }
                if devices.tcsc_on(*line).map(|o| o.index) != Some(k) {
                    return Err(NetError::Scenario(format!("second TCSC on line {line}")));
                }
            }
            DeviceKind::Oltc { delta_steps, .. } => {
                if devices.oltc_at(d.bus).map(|o| o.index) != Some(k) {
                    return Err(NetError::Scenario(format!(
                        "second OLTC on bus {}",
                        network.buses[d.bus].ext_id
                    )));
                }
                if d.initial.tap == 0 || d.initial.tap > delta_steps.len() {
                    return Err(NetError::Scenario(format!("device {k} initial tap out of range")));
                }
            }
            _ => {}
        }
    }
    Ok(Scenario {
        network,
        devices,
        demand,
        horizon: options.horizon,
        budget: options.budget as u32,
        flags: options.flags,
    })
}
