use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NetError, Network};

/// Demand per period and bus, per unit. Indexed `[t][bus]` with `t` 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl DemandSeries {
    /// Base demand repeated over `periods`.
    pub fn constant(net: &Network, periods: usize) -> Self {
        let p: Vec<f64> = net.buses.iter().map(|b| b.base_demand_p).collect();
        let q: Vec<f64> = net.buses.iter().map(|b| b.base_demand_q).collect();
        DemandSeries {
            p: vec![p; periods],
            q: vec![q; periods],
        }
    }

    pub fn periods(&self) -> usize {
        self.p.len()
    }

    /// First `periods` periods.
    pub fn truncated(&self, periods: usize) -> Self {
        DemandSeries {
            p: self.p.iter().take(periods).cloned().collect(),
            q: self.q.iter().take(periods).cloned().collect(),
        }
    }

    /// Total active demand of period `t`.
    pub fn total_p(&self, t: usize) -> f64 {
        self.p[t].iter().sum()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    t: usize,
    bus: u64,
    p_mult: f64,
    q_mult: f64,
}

/// Reads `t,bus,p_mult,q_mult` rows; unlisted `(bus, t)` pairs keep multiplier 1.
pub fn load_profiles(text: &str, net: &Network) -> Result<DemandSeries, NetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut mult: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut periods = std::collections::BTreeSet::new();
    for (k, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| NetError::Profile(format!("row {}: {e}", k + 1)))?;
        let bus = net.bus_by_ext(row.bus).ok_or_else(|| NetError::UnknownBus {
            bus: row.bus,
            by: format!("profile row {}", k + 1),
        })?;
        if !(row.p_mult >= 0.0 && row.q_mult >= 0.0) {
            return Err(NetError::Profile(format!(
                "row {}: negative multiplier at t={}, bus {}",
                k + 1,
                row.t,
                row.bus
            )));
        }
        if row.t == 0 {
            return Err(NetError::Profile(format!("row {}: periods start at 1", k + 1)));
        }
        periods.insert(row.t);
        mult.insert((row.t - 1, bus), (row.p_mult, row.q_mult));
    }
    let horizon = periods.iter().next_back().copied().unwrap_or(0);
    if horizon == 0 {
        return Err(NetError::Profile("no rows".into()));
    }
    if let Some(gap) = (1..=horizon).find(|t| !periods.contains(t)) {
        return Err(NetError::Profile(format!("period {gap} missing (t must be contiguous)")));
    }
    let mut series = DemandSeries::constant(net, horizon);
    for ((t, bus), (pm, qm)) in mult {
        series.p[t][bus] *= pm;
        series.q[t][bus] *= qm;
    }
    Ok(series)
}
