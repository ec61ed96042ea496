//! Run configuration: an optional TOML/JSON file overlaid by command-line
//! flags. Relative paths in a file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use factsched::netmodel::{
    build_scenario, load_device_config, load_profiles, parse_matpower_case, DemandSeries, DeviceSet, ModelFlags,
    NetError, Scenario, ScenarioOptions, TcscMode, TcscSign,
};
use factsched::solver::{BnbOptions, SocpOptions};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub gap: Option<f64>,
    pub node_limit: Option<usize>,
    pub time_limit: Option<f64>,
    pub workers: Option<usize>,
    pub feas_tol: Option<f64>,
    pub int_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub tcsc_mode: Option<TcscMode>,
    pub tcsc_sign: Option<TcscSign>,
    pub literal_envelope: Option<bool>,
}

/// Everything a command needs. Every field is optional so that a file and the
/// flags can each supply part of it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub devices: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub horizon: Option<usize>,
    pub budget: Option<i64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = read_text(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: RunConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.case, &mut cfg.devices, &mut cfg.profile, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fields set in `flags` win.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        RunConfig {
            case: flags.case.or(self.case),
            devices: flags.devices.or(self.devices),
            profile: flags.profile.or(self.profile),
            output: flags.output.or(self.output),
            horizon: flags.horizon.or(self.horizon),
            budget: flags.budget.or(self.budget),
            solver: SolverConfig {
                gap: flags.solver.gap.or(self.solver.gap),
                node_limit: flags.solver.node_limit.or(self.solver.node_limit),
                time_limit: flags.solver.time_limit.or(self.solver.time_limit),
                workers: flags.solver.workers.or(self.solver.workers),
                feas_tol: flags.solver.feas_tol.or(self.solver.feas_tol),
                int_tol: flags.solver.int_tol.or(self.solver.int_tol),
            },
            model: ModelConfig {
                tcsc_mode: flags.model.tcsc_mode.or(self.model.tcsc_mode),
                tcsc_sign: flags.model.tcsc_sign.or(self.model.tcsc_sign),
                literal_envelope: flags.model.literal_envelope.or(self.model.literal_envelope),
            },
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("factsched-out"))
    }

    pub fn bnb_options(&self) -> Result<BnbOptions, CliError> {
        let d = BnbOptions::default();
        let s = &self.solver;
        let opts = BnbOptions {
            gap: s.gap.unwrap_or(d.gap),
            node_limit: s.node_limit.unwrap_or(d.node_limit),
            time_limit: s.time_limit.unwrap_or(d.time_limit),
            workers: s.workers.unwrap_or(d.workers),
            int_tol: s.int_tol.unwrap_or(d.int_tol),
            record_nodes: false,
            socp: SocpOptions { accept_feas: s.feas_tol.unwrap_or(d.socp.accept_feas), ..d.socp },
        };
        if !(opts.gap >= 0.0) {
            return Err(CliError::config(format!("gap must be nonnegative, got {}", opts.gap)));
        }
        if opts.workers == 0 {
            return Err(CliError::config("workers must be at least 1"));
        }
        if !(opts.int_tol > 0.0 && opts.int_tol < 0.5) || !(opts.socp.accept_feas > 0.0) {
            return Err(CliError::config("tolerances must be positive (integrality below 0.5)"));
        }
        Ok(opts)
    }

    /// Parses the referenced files and builds the validated scenario.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let case = self.case.as_ref().ok_or_else(|| CliError::config("no case file given"))?;
        let net = parse_matpower_case(&read_text(case)?).map_err(|e| CliError::located(case, e))?;
        let devices = match &self.devices {
            Some(p) => load_device_config(&read_text(p)?, &net).map_err(|e| CliError::located(p, e))?,
            None => DeviceSet::default(),
        };
        let demand = match &self.profile {
            Some(p) => load_profiles(&read_text(p)?, &net).map_err(|e| CliError::located(p, e))?,
            None => DemandSeries::constant(&net, self.horizon.unwrap_or(1)),
        };
        let horizon = self.horizon.unwrap_or(demand.periods());
        if demand.periods() < horizon {
            return Err(CliError::from(NetError::Profile(format!(
                "profile covers {} periods, horizon is {horizon}",
                demand.periods()
            ))));
        }
        let flags = ModelFlags {
            tcsc_mode: self.model.tcsc_mode.unwrap_or_default(),
            tcsc_sign: self.model.tcsc_sign.unwrap_or_default(),
            literal_envelope: self.model.literal_envelope.unwrap_or(false),
        };
        let options = ScenarioOptions { horizon, budget: self.budget.unwrap_or(1), flags };
        Ok(build_scenario(net, devices, demand.truncated(horizon), options)?)
    }
}
