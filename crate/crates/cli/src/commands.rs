use std::path::Path;

use serde::Serialize;

use factsched::miconic::{self, assemble, ProgramStats};
use factsched::netmodel::Scenario;
use factsched::schedule::{extract_schedule, Schedule};
use factsched::solver::{branch_and_bound_with_hints, BnbOptions, MiStatus};
use factsched::validate::{
    check_exactness, make_report, newton_power_flow, period_power_flow, verify_schedule, ExactnessDiagnostics,
    PfOptions, SolverStats, ValidateError, Violation,
};

use crate::config::{read_text, RunConfig};
use crate::{CliError, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_VIOLATIONS};

const EXACTNESS_EPSILON: f64 = 1e-5;

#[derive(Debug, Serialize)]
struct SolveSummary {
    status: MiStatus,
    exit_code: u8,
    /// Total loss over the horizon in MW (sum of per-period losses).
    objective_mw: Option<f64>,
    best_bound_mw: Option<f64>,
    root_bound_mw: Option<f64>,
    note: Option<String>,
    solver: SolverStats,
    program: ProgramStats,
    options: BnbOptions,
}

#[derive(Debug, Serialize)]
struct PowerFlowCheck {
    /// 1-based.
    period: usize,
    converged: bool,
    iterations: Option<usize>,
    mismatch: Option<f64>,
    losses_mw: Option<f64>,
    relaxed_losses_mw: f64,
    /// Largest `|V_i|^2 - W_ii` over the buses.
    max_w_deviation: Option<f64>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    violations: Vec<Violation>,
    exactness: ExactnessDiagnostics,
    power_flow: Vec<PowerFlowCheck>,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("io", e.to_string()))?;
    write(path, &(text + "\n"))
}

fn output_dir(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn mw(value: f64, base: f64) -> Option<f64> {
    value.is_finite().then_some(value * base)
}

fn diagnose(sc: &Scenario, schedule: &Schedule) -> Result<Diagnostics, CliError> {
    let violations = verify_schedule(sc, schedule)?;
    let exactness = check_exactness(sc, schedule, EXACTNESS_EPSILON);
    let base = schedule.base_mva;
    let power_flow = (0..schedule.horizon())
        .map(|t| {
            let relaxed_losses_mw = schedule.periods[t].lines.iter().map(|l| l.loss()).sum::<f64>() * base;
            match newton_power_flow(&period_power_flow(sc, schedule, t), &PfOptions::default()) {
                Ok(pf) => {
                    let dev = pf
                        .vm
                        .iter()
                        .zip(&schedule.periods[t].buses)
                        .map(|(vm, b)| (vm * vm - b.w).abs())
                        .fold(0.0, f64::max);
                    PowerFlowCheck {
                        period: t + 1,
                        converged: true,
                        iterations: Some(pf.iterations),
                        mismatch: Some(pf.mismatch),
                        losses_mw: Some(pf.losses * base),
                        relaxed_losses_mw,
                        max_w_deviation: Some(dev),
                        error: None,
                    }
                }
                Err(e) => PowerFlowCheck {
                    period: t + 1,
                    converged: false,
                    iterations: None,
                    mismatch: None,
                    losses_mw: None,
                    relaxed_losses_mw,
                    max_w_deviation: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(Diagnostics { violations, exactness, power_flow })
}

fn load_schedule(path: &Path) -> Result<Schedule, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::located(path, ValidateError::Json(e)))
}

pub fn solve(cfg: &RunConfig) -> Result<u8, CliError> {
    let sc = cfg.scenario()?;
    let opts = cfg.bnb_options()?;
    let dir = output_dir(cfg)?;
    let (program, layout) = assemble(&sc)?;
    let stats = program.stats();
    log::info!("program: {stats:?}");
    let sol = branch_and_bound_with_hints(&program, &opts, &layout.starting_hints(&sc))?;
    let base = sc.base_mva();
    let solver = SolverStats {
        status: format!("{:?}", sol.status).to_lowercase(),
        objective: sol.objective,
        best_bound: sol.best_bound,
        gap: sol.gap,
        nodes: sol.nodes,
        wall_seconds: sol.wall_seconds,
        vars: stats.vars,
        bins: stats.bins,
        rows: stats.rows,
        cones: stats.cones,
    };
    let (code, note) = match sol.status {
        MiStatus::Optimal => (0, None),
        MiStatus::Feasible => (EXIT_LIMIT, Some("limit reached before the gap closed".to_string())),
        MiStatus::NoSolution => (EXIT_LIMIT, Some("limit reached without an incumbent".to_string())),
        MiStatus::Infeasible if sol.nodes <= 1 => (
            EXIT_INFEASIBLE,
            Some("root relaxation infeasible (interior-point infeasibility certificate)".to_string()),
        ),
        MiStatus::Infeasible => (EXIT_INFEASIBLE, Some("every integer assignment is infeasible".to_string())),
        MiStatus::Unbounded => return Err(CliError::new("solver", "relaxation is unbounded")),
    };
    let summary = SolveSummary {
        status: sol.status,
        exit_code: code,
        objective_mw: mw(sol.objective, base),
        best_bound_mw: mw(sol.best_bound, base),
        root_bound_mw: mw(sol.root_bound, base),
        note: note.clone(),
        solver,
        program: stats,
        options: opts,
    };
    if let Some(x) = &sol.x {
        let schedule = extract_schedule(&sc, &layout, x, sol.objective);
        write_json(&dir.join("schedule.json"), &schedule)?;
        let report = make_report(&sc, &schedule, None);
        write(&dir.join("report.csv"), &report.to_csv())?;
        write_json(&dir.join("report.json"), &report)?;
        write_json(&dir.join("diagnostics.json"), &diagnose(&sc, &schedule)?)?;
    }
    write_json(&dir.join("solve_summary.json"), &summary)?;
    match &note {
        Some(n) => println!("{:?}: {n}", sol.status),
        None => println!(
            "optimal: loss {:.6} MW over {} periods, gap {:.2e}, {} nodes",
            sol.objective * base,
            sc.horizon,
            sol.gap,
            sol.nodes
        ),
    }
    Ok(code)
}

pub fn export_cbf(cfg: &RunConfig, target: Option<&Path>) -> Result<u8, CliError> {
    let sc = cfg.scenario()?;
    let (program, _) = assemble(&sc)?;
    let path = match target {
        Some(p) => p.to_path_buf(),
        None => output_dir(cfg)?.join("program.cbf"),
    };
    write(&path, &miconic::export_cbf(&program))?;
    println!("{}", path.display());
    Ok(0)
}

pub fn validate(cfg: &RunConfig, schedule_path: &Path) -> Result<u8, CliError> {
    let sc = cfg.scenario()?;
    let schedule = load_schedule(schedule_path)?;
    let diag = diagnose(&sc, &schedule)?;
    let dir = output_dir(cfg)?;
    write_json(&dir.join("diagnostics.json"), &diag)?;
    for v in &diag.violations {
        println!("violation {} amount {:.3e}", v.id, v.amount);
    }
    println!(
        "exactness: min rho {:.9}, {}",
        diag.exactness.min_rho,
        if diag.exactness.exact { "exact" } else { "inexact" }
    );
    for pf in &diag.power_flow {
        match (&pf.error, pf.iterations) {
            (None, Some(it)) => println!("power flow period {}: converged in {it} iterations", pf.period),
            _ => println!("power flow period {}: {}", pf.period, pf.error.as_deref().unwrap_or("failed")),
        }
    }
    Ok(if diag.violations.is_empty() { 0 } else { EXIT_VIOLATIONS })
}

pub fn report(cfg: &RunConfig, schedule_path: &Path) -> Result<u8, CliError> {
    let sc = cfg.scenario()?;
    let schedule = load_schedule(schedule_path)?;
    // rejects schedules of the wrong shape before indexing into them
    verify_schedule(&sc, &schedule)?;
    let report = make_report(&sc, &schedule, None);
    let dir = output_dir(cfg)?;
    write(&dir.join("report.csv"), &report.to_csv())?;
    write_json(&dir.join("report.json"), &report)?;
    println!("total loss {:.6} MW ({:.3}%)", report.totals.p_loss_mw, report.totals.p_loss_pct);
    Ok(0)
}
