#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::Rng;

use factsched::miconic::{assemble, ConicProgram, ModelLayout, Row, Sense, VarId, VarKind};
use factsched::netmodel::{
    build_scenario, load_device_config, load_profiles, parse_matpower_case, BusKind, DemandSeries, DeviceSet,
    ModelFlags, Scenario, ScenarioOptions,
};
use factsched::schedule::{extract_schedule, Schedule};
use factsched::solver::{branch_and_bound_with_hints, solve_socp, BnbOptions, MiSolution, MiStatus, RelaxStatus, SocpOptions};
use factsched::validate::{newton_power_flow, PfBus, PfOptions, PfProblem, PfSolution};

pub fn data(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "data", name].iter().collect();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Bundled scenario; `devices = None` gives the device-free baseline.
pub fn scenario(case: &str, devices: Option<&str>, profile: &str, horizon: usize, budget: i64) -> Scenario {
    let net = parse_matpower_case(&data(case)).expect("case parses");
    let devs = match devices {
        Some(d) => load_device_config(&data(d), &net).expect("devices parse"),
        None => DeviceSet::default(),
    };
    let demand = load_profiles(&data(profile), &net).expect("profile parses").truncated(horizon);
    build_scenario(net, devs, demand, ScenarioOptions { horizon, budget, flags: ModelFlags::default() })
        .expect("scenario builds")
}

/// Solves with the layout's starting hints; `None` unless the search proves
/// optimality.
pub fn try_solve(sc: &Scenario, opts: &BnbOptions) -> (MiSolution, Option<Schedule>) {
    let (prog, layout) = assemble(sc).expect("assembles");
    let sol = branch_and_bound_with_hints(&prog, opts, &layout.starting_hints(sc)).expect("solves");
    let schedule = match (&sol.status, &sol.x) {
        (MiStatus::Optimal, Some(x)) => Some(extract_schedule(sc, &layout, x, sol.objective)),
        _ => None,
    };
    (sol, schedule)
}

pub fn solve(sc: &Scenario, opts: &BnbOptions) -> (MiSolution, Schedule) {
    let (sol, schedule) = try_solve(sc, opts);
    let schedule = schedule.unwrap_or_else(|| panic!("status {:?} after {} nodes", sol.status, sol.nodes));
    (sol, schedule)
}

/// Minimum over every 0/1 pattern of the binary columns, each solved as a
/// continuous program. Patterns breaking a one-hot group are skipped without
/// a solve since they cannot satisfy the group's equality row. Returns the
/// optimum and the number of conic solves.
pub fn enumerate_optimum(program: &ConicProgram) -> (f64, usize) {
    let bins = program.integer_vars();
    assert!(bins.iter().all(|&j| program.vars[j].kind == VarKind::Binary));
    assert!(bins.len() <= 16, "{} binaries", bins.len());
    let mut best = f64::INFINITY;
    let mut solves = 0;
    for mask in 0u32..(1 << bins.len()) {
        let assignment: Vec<(VarId, f64)> =
            bins.iter().enumerate().map(|(k, &j)| (j, f64::from((mask >> k) & 1))).collect();
        let value = |j: VarId| assignment.iter().find(|a| a.0 == j).map_or(0.0, |a| a.1);
        if program.one_hot.iter().any(|g| g.iter().map(|&j| value(j)).sum::<f64>() != 1.0) {
            continue;
        }
        let fixed = program.fix_binaries(&assignment).expect("binary columns").relaxed();
        let sol = solve_socp(&fixed, &SocpOptions::default()).expect("conic solve");
        solves += 1;
        if sol.status == RelaxStatus::Optimal {
            best = best.min(sol.objective);
        }
    }
    (best, solves)
}

/// Interval bounds implied by the selected linear rows once `fixed` columns
/// are pinned, by repeated single-row activity arguments.
pub fn implied_bounds(
    program: &ConicProgram,
    select: impl Fn(&Row) -> bool,
    fixed: &[(VarId, f64)],
) -> (Vec<f64>, Vec<f64>) {
    let mut lo: Vec<f64> = program.vars.iter().map(|v| v.lower).collect();
    let mut hi: Vec<f64> = program.vars.iter().map(|v| v.upper).collect();
    for &(j, v) in fixed {
        lo[j] = v;
        hi[j] = v;
    }
    for _ in 0..100 {
        let mut changed = false;
        for row in program.rows.iter().filter(|r| select(r)) {
            for (k, &(j, a)) in row.terms.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                // range of the rest of the row
                let (mut rest_lo, mut rest_hi) = (0.0, 0.0);
                for (m, &(i, c)) in row.terms.iter().enumerate() {
                    if m != k && c != 0.0 {
                        let (p, q) = (c * lo[i], c * hi[i]);
                        rest_lo += p.min(q);
                        rest_hi += p.max(q);
                    }
                }
                // a x_j in [row_lo - rest_hi, row_hi - rest_lo]
                let (row_lo, row_hi) = match row.sense {
                    Sense::Le => (f64::NEG_INFINITY, row.rhs),
                    Sense::Ge => (row.rhs, f64::INFINITY),
                    Sense::Eq => (row.rhs, row.rhs),
                };
                let (t_lo, t_hi) = (row_lo - rest_hi, row_hi - rest_lo);
                let (mut new_lo, mut new_hi) = if a > 0.0 { (t_lo / a, t_hi / a) } else { (t_hi / a, t_lo / a) };
                if new_lo.is_nan() {
                    new_lo = f64::NEG_INFINITY;
                }
                if new_hi.is_nan() {
                    new_hi = f64::INFINITY;
                }
                if new_lo > lo[j] + 1e-15 {
                    lo[j] = new_lo;
                    changed = true;
                }
                if new_hi < hi[j] - 1e-15 {
                    hi[j] = new_hi;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (lo, hi)
}

/// Dispatch of a generated network: `(bus index, p_gen MW, voltage setpoint)`
/// for each generator bus.
pub struct RandomCase {
    pub text: String,
    pub dispatch: Vec<(usize, f64, f64)>,
}

/// Meshed network with `n` buses: a random spanning tree plus a few chords,
/// a slack generator at bus 1 and optionally a PV generator.
pub fn random_case(rng: &mut impl Rng, n: usize) -> RandomCase {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for _ in 0..rng.gen_range(0..=2) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }
    let pv = (n > 3 && rng.gen_bool(0.5)).then(|| rng.gen_range(1..n));
    let mut text = String::from("function mpc = random_case\nmpc.version = '2';\nmpc.baseMVA = 100;\nmpc.bus = [\n");
    let mut total_load = 0.0;
    for i in 0..n {
        let kind = if i == 0 {
            3
        } else if Some(i) == pv {
            2
        } else {
            1
        };
        let (pd, qd) = if i == 0 { (0.0, 0.0) } else { (rng.gen_range(5.0..40.0), rng.gen_range(-5.0..15.0)) };
        total_load += pd;
        let gs = if rng.gen_bool(0.2) { rng.gen_range(0.0..2.0) } else { 0.0 };
        let bs = if rng.gen_bool(0.3) { rng.gen_range(-5.0..15.0) } else { 0.0 };
        writeln!(text, "\t{}\t{kind}\t{pd}\t{qd}\t{gs}\t{bs}\t1\t1\t0\t230\t1\t1.1\t0.9;", i + 1).unwrap();
    }
    text.push_str("];\nmpc.gen = [\n");
    let mut dispatch = vec![(0, 0.0, rng.gen_range(0.99..1.05))];
    if let Some(b) = pv {
        dispatch.push((b, 0.3 * total_load, rng.gen_range(0.98..1.04)));
    }
    for &(b, pg, vg) in &dispatch {
        writeln!(text, "\t{}\t{pg}\t0\t500\t-500\t{vg}\t100\t1\t1000\t0;", b + 1).unwrap();
    }
    text.push_str("];\nmpc.branch = [\n");
    for (a, b) in edges {
        let r = rng.gen_range(0.005..0.04);
        let x = rng.gen_range(0.03..0.2);
        let c = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.05) } else { 0.0 };
        writeln!(text, "\t{}\t{}\t{r}\t{x}\t{c}\t0\t0\t0\t0\t0\t1;", a + 1, b + 1).unwrap();
    }
    text.push_str("];\n");
    RandomCase { text, dispatch }
}

/// One-period, device-free scenario of a generated case.
pub fn random_scenario(case: &RandomCase) -> Scenario {
    let net = parse_matpower_case(&case.text).expect("generated case parses");
    let demand = DemandSeries::constant(&net, 1);
    build_scenario(net, DeviceSet::default(), demand, ScenarioOptions { horizon: 1, budget: 0, flags: ModelFlags::default() })
        .expect("generated scenario builds")
}

/// Newton power flow of a generated case at its dispatch.
pub fn random_power_flow(sc: &Scenario, case: &RandomCase) -> PfSolution {
    let net = &sc.network;
    let base = sc.base_mva();
    let n = net.buses.len();
    let mut p_spec: Vec<f64> = (0..n).map(|i| -sc.demand.p[0][i]).collect();
    let q_spec: Vec<f64> = (0..n).map(|i| -sc.demand.q[0][i]).collect();
    let mut v_start = vec![1.0; n];
    for &(b, pg, vg) in &case.dispatch {
        p_spec[b] += pg / base;
        v_start[b] = vg;
    }
    let kinds = net
        .buses
        .iter()
        .map(|b| match b.kind {
            BusKind::Slack => PfBus::Slack,
            BusKind::Pv => PfBus::Pv,
            BusKind::Pq => PfBus::Pq,
        })
        .collect();
    let problem = PfProblem { network: net.clone(), kinds, p_spec, q_spec, v_start };
    newton_power_flow(&problem, &PfOptions::default()).expect("power flow converges")
}

/// Program point built from a power-flow solution: `W = v v^H`, flows from
/// the solution, generation from the injections plus demand.
pub fn lift_point(sc: &Scenario, layout: &ModelLayout, nvars: usize, pf: &PfSolution) -> Vec<f64> {
    let (diag, off) = pf.lifted(&sc.network);
    let mut x = vec![0.0; nvars];
    for (i, b) in layout.buses[0].iter().enumerate() {
        x[b.w] = diag[i];
        x[b.p_gen] = pf.injections[i].re + sc.demand.p[0][i];
        x[b.q_gen] = pf.injections[i].im + sc.demand.q[0][i];
    }
    for (l, v) in layout.lines[0].iter().enumerate() {
        x[v.wr] = off[l].re;
        x[v.wi] = off[l].im;
        let (from, to) = pf.flows[l];
        x[v.p_ft] = from.re;
        x[v.q_ft] = from.im;
        x[v.p_tf] = to.re;
        x[v.q_tf] = to.im;
    }
    x
}
