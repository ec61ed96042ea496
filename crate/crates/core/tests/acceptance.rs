//! End-to-end acceptance run: every criterion at its pinned tolerance, one
//! PASS/FAIL line each, all in one test so the lines print together.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{enumerate_optimum, implied_bounds, lift_point, random_case, random_power_flow, random_scenario, scenario, solve, try_solve};
use factsched::miconic::{assemble, export_cbf, import_cbf, ConeKind, ConicProgram, DeviceVars, ModelLayout, Row, VarId};
use factsched::netmodel::{DeviceKind, Scenario};
use factsched::schedule::{actions_at, extract_schedule, DeviceState, Schedule};
use factsched::solver::{branch_and_bound, branch_and_bound_with_hints, BnbOptions, MiStatus};
use factsched::validate::{loss_percent, verify_schedule};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Every schedule solved along the run, re-checked by the compliance and
/// voltage criteria.
#[derive(Default)]
struct Solved {
    runs: Vec<(String, Scenario, Schedule)>,
}

const NINE_BUS_BUDGET: i64 = 2;
/// The whole bundled profile.
const DOMINANCE_HORIZON: usize = 24;

fn nine_bus(devices: bool, horizon: usize) -> Scenario {
    let devs = devices.then_some("case9_devices.toml");
    scenario("case9.m", devs, "case9_profile.csv", horizon, NINE_BUS_BUDGET)
}

fn oracle_equivalence(solved: &mut Solved) -> Outcome {
    let start = Instant::now();
    let toys = [
        ("toy2 shunt", "toy2.m", "toy2_devices.toml", "toy2_profile.csv", 1),
        ("toy3 shunt+statcom", "toy3.m", "toy3_shunt_statcom.toml", "toy3_profile.csv", 1),
        ("toy3 oltc+tcsc", "toy3.m", "toy3_oltc_tcsc.toml", "toy3_profile.csv", 1),
    ];
    let mut detail = Vec::new();
    for (name, case, devs, profile, budget) in toys {
        let sc = scenario(case, Some(devs), profile, 2, budget);
        let (prog, _) = assemble(&sc).map_err(|e| e.to_string())?;
        let bins = prog.integer_vars().len();
        ensure!(bins <= 12, "{name}: {bins} binaries");
        let (reference, solves) = enumerate_optimum(&prog);
        ensure!(reference.is_finite(), "{name}: enumeration found no feasible pattern");
        let (sol, schedule) = solve(&sc, &BnbOptions { gap: 1e-9, ..BnbOptions::default() });
        let rel = (sol.objective - reference).abs() / reference.abs();
        ensure!(rel <= 1e-6, "{name}: search {} vs enumeration {reference} (rel {rel:.2e})", sol.objective);
        detail.push(format!("{name} {bins} bins/{solves} solves rel {rel:.1e}"));
        solved.runs.push((name.to_string(), sc, schedule));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{}; {secs:.1} s", detail.join(", ")))
}

fn ac_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_row, mut worst_rho) = (0.0f64, 0.0f64);
    for k in 0..5 {
        let n = rng.gen_range(3..=9);
        let case = random_case(&mut rng, n);
        let sc = random_scenario(&case);
        let (prog, layout) = assemble(&sc).map_err(|e| e.to_string())?;
        let pf = random_power_flow(&sc, &case);
        let x = lift_point(&sc, &layout, prog.num_vars(), &pf);
        for row in &prog.rows {
            let fam = row.label.family;
            if fam.starts_with("flow_") || fam.starts_with("balance_") {
                let r = row.violation(&x);
                ensure!(r <= 1e-8, "network {k}: {fam}[{}] residual {r:.2e}", row.label.element);
                worst_row = worst_row.max(r);
            }
        }
        for cone in prog.cones.iter().filter(|c| c.label.family == "soc") {
            ensure!(cone.kind == ConeKind::Rotated, "soc cone is not rotated");
            let m: Vec<f64> = cone.members.iter().map(|e| e.eval(&x)).collect();
            // members (W_ii, W_jj, sqrt2 Re, sqrt2 Im)
            let rho = 0.5 * (m[2] * m[2] + m[3] * m[3]) / (m[0] * m[1]);
            ensure!((rho - 1.0).abs() <= 1e-10, "network {k}: rho {rho} on line {}", cone.label.element);
            worst_rho = worst_rho.max((rho - 1.0).abs());
        }
    }
    Ok(format!("5 networks, max row residual {worst_row:.1e}, max |rho - 1| {worst_rho:.1e}"))
}

fn envelope_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut products = 0;
    for sc in [nine_bus(true, 2), scenario("toy3.m", Some("toy3_oltc_tcsc.toml"), "toy3_profile.csv", 2, 1)] {
        let (prog, layout) = assemble(&sc).map_err(|e| e.to_string())?;
        for dev in sc.devices.iter() {
            let DeviceKind::Tcsc { line, .. } = dev.kind else { continue };
            let l = &sc.network.lines[line];
            for t in 0..sc.horizon {
                let DeviceVars::Tcsc(tv) = &layout.devices[t][dev.index] else { unreachable!() };
                let (bv, lv) = (&layout.buses[t], &layout.lines[t][line]);
                for (fam, h, w) in [
                    ("envelope_f_from", tv.f_from, bv[l.from].w),
                    ("envelope_f_to", tv.f_to, bv[l.to].w),
                    ("envelope_g_re", tv.g_re, lv.wr),
                    ("envelope_g_im", tv.g_im, lv.wi),
                ] {
                    let select = |r: &Row| r.label.family == fam && r.label.element == line && r.label.period == t;
                    let rows: Vec<&Row> = prog.rows.iter().filter(|r| select(r)).collect();
                    ensure!(rows.len() == 4, "{fam}[{line},{t}]: {} rows", rows.len());
                    let (wv, bvar) = (&prog.vars[w], &prog.vars[tv.db]);
                    ensure!(
                        [wv.lower, wv.upper, bvar.lower, bvar.upper].iter().all(|v| v.is_finite()),
                        "{fam}: unbounded factor"
                    );
                    let mut x = vec![0.0; prog.num_vars()];
                    for _ in 0..1000 {
                        let (a, b) = (rng.gen_range(wv.lower..=wv.upper), rng.gen_range(bvar.lower..=bvar.upper));
                        x[w] = a;
                        x[tv.db] = b;
                        x[h] = a * b;
                        for r in &rows {
                            let v = r.violation(&x);
                            ensure!(v <= 1e-9, "{fam}[{line},{t}] violated by {v:.2e} at ({a}, {b})");
                        }
                    }
                    for a in [wv.lower, wv.upper] {
                        for b in [bvar.lower, bvar.upper] {
                            let (lo, hi) = implied_bounds(&prog, select, &[(w, a), (tv.db, b)]);
                            let p = a * b;
                            ensure!(
                                (lo[h] - p).abs() <= 1e-9 && (hi[h] - p).abs() <= 1e-9,
                                "{fam}[{line},{t}] corner ({a}, {b}): [{}, {}] vs {p}",
                                lo[h],
                                hi[h]
                            );
                        }
                    }
                    products += 1;
                }
            }
        }
    }
    ensure!(products > 0, "no TCSC envelopes found");
    Ok(format!("{products} products x 1000 samples, corners pinned"))
}

fn device_exactness() -> Outcome {
    let scenarios = [
        nine_bus(true, 2),
        scenario("toy3.m", Some("toy3_oltc_tcsc.toml"), "toy3_profile.csv", 2, 1),
        scenario("toy3.m", Some("toy3_shunt_statcom.toml"), "toy3_profile.csv", 2, 1),
    ];
    let (mut taps, mut subsets, mut tcsc) = (0, 0, 0);
    let mut worst = 0.0f64;
    for sc in &scenarios {
        let (prog, layout) = assemble(sc).map_err(|e| e.to_string())?;
        for dev in sc.devices.iter() {
            let d = dev.index;
            for t in 0..sc.horizon {
                let own = |prefix: &'static str| {
                    move |r: &Row| r.label.family.starts_with(prefix) && r.label.element == d && r.label.period == t
                };
                match (&dev.kind, &layout.devices[t][d]) {
                    (DeviceKind::Oltc { .. }, DeviceVars::Oltc(v)) => {
                        let (ulo, uhi) = (prog.vars[v.u_base].lower, prog.vars[v.u_base].upper);
                        for n in 1..=v.alpha.len() {
                            let ratio = dev.tap_ratio(n).ok_or("tap ratio")?;
                            for u in [ulo, 0.5 * (ulo + uhi), uhi] {
                                let mut fixed: Vec<_> =
                                    v.alpha.iter().enumerate().map(|(k, &a)| (a, f64::from(k + 1 == n))).collect();
                                fixed.push((v.u_base, u));
                                let (lo, hi) = implied_bounds(&prog, own("oltc_"), &fixed);
                                let want = u * ratio * ratio;
                                let err = (lo[v.u_reg] - want).abs().max((hi[v.u_reg] - want).abs());
                                ensure!(err <= 1e-9, "oltc {d} tap {n} at U {u}: [{}, {}] vs {want}", lo[v.u_reg], hi[v.u_reg]);
                                worst = worst.max(err);
                            }
                            taps += 1;
                        }
                    }
                    (DeviceKind::Shunt { blocks }, DeviceVars::Shunt(v)) => {
                        for mask in 0u32..(1 << blocks.len()) {
                            let on = |k: usize| (mask >> k) & 1 == 1;
                            let mut fixed: Vec<_> = v.alpha.iter().enumerate().map(|(k, &a)| (a, f64::from(u8::from(on(k))))).collect();
                            fixed.push((v.s, f64::from(u8::from(mask != 0))));
                            let (lo, hi) = implied_bounds(&prog, own("shunt_"), &fixed);
                            let want: f64 = blocks.iter().enumerate().filter(|&(k, _)| on(k)).map(|(_, q)| q).sum();
                            let err = (lo[v.q] - want).abs().max((hi[v.q] - want).abs());
                            ensure!(err <= 1e-9, "shunt {d} subset {mask:b}: [{}, {}] vs {want}", lo[v.q], hi[v.q]);
                            worst = worst.max(err);
                            subsets += 1;
                        }
                    }
                    (DeviceKind::Tcsc { .. }, DeviceVars::Tcsc(v)) => {
                        let (lo, hi) = implied_bounds(&prog, own("tcsc_"), &[(v.s, 0.0)]);
                        ensure!(lo[v.db] == 0.0 && hi[v.db] == 0.0, "tcsc {d} off: dB in [{}, {}]", lo[v.db], hi[v.db]);
                        tcsc += 1;
                    }
                    _ => {}
                }
            }
        }
    }
    ensure!(taps > 0 && subsets > 0 && tcsc > 0, "missing device kinds");
    Ok(format!("{taps} taps, {subsets} shunt subsets, {tcsc} TCSC off states; max error {worst:.1e}"))
}

/// Every column of a device at one period, in a fixed order per kind.
fn device_columns(v: &DeviceVars) -> Vec<VarId> {
    match v {
        DeviceVars::Shunt(v) => [vec![v.q, v.s, v.change], v.alpha.clone()].concat(),
        DeviceVars::Statcom(v) => vec![v.q, v.s, v.change],
        DeviceVars::Oltc(v) => [vec![v.u_base, v.u_reg, v.tap, v.eta, v.o, v.z], v.alpha.clone(), v.gamma.clone()].concat(),
        DeviceVars::Tcsc(v) => vec![v.db, v.s, v.change, v.f_from, v.f_to, v.g_re, v.g_im],
    }
}

/// The integer part of a single-device solution, placed on device `k` of the
/// all-devices program with every other device held in its initial state.
fn embed_single(
    all: &Scenario,
    all_layout: &ModelLayout,
    k: usize,
    single: &ConicProgram,
    single_layout: &ModelLayout,
    x: &[f64],
) -> Vec<(VarId, f64)> {
    let mut own = std::collections::BTreeSet::new();
    let mut hint = Vec::new();
    for t in 0..all.horizon {
        let (to, from) = (device_columns(&all_layout.devices[t][k]), device_columns(&single_layout.devices[t][0]));
        for (&j, &i) in to.iter().zip(&from) {
            own.insert(j);
            if single.is_integral_var(i) {
                hint.push((j, x[i].round()));
            }
        }
    }
    hint.extend(all_layout.hold_initial_state(all).into_iter().filter(|(j, _)| !own.contains(j)));
    hint
}

/// Optimal values are compared through bounds, so open gaps still prove
/// the ordering: a single-device incumbent is an upper bound on that optimum
/// and its search bound a lower one. The all-devices search is seeded with
/// each single-device incumbent embedded with the other devices held.
fn coordination_dominance(solved: &mut Solved) -> Outcome {
    let all = nine_bus(true, DOMINANCE_HORIZON);
    let opts = BnbOptions { time_limit: 60.0, ..BnbOptions::default() };
    // IPM noise allowance on objectives compared across programs
    let tol = opts.gap;
    let mw = |v: f64| v * all.base_mva();
    let base_sc = all.with_devices(Default::default()).map_err(|e| e.to_string())?;
    let (base_sol, base) = solve(&base_sc, &opts);
    let (all_prog, all_layout) = assemble(&all).map_err(|e| e.to_string())?;
    let mut hints = all_layout.starting_hints(&all);
    let mut singles = Vec::new();
    for k in 0..all.devices.len() {
        let mut i = 0;
        let single = all.devices.filter(|_| {
            i += 1;
            i - 1 == k
        });
        let name = single.iter().next().map(|d| d.kind.name()).unwrap_or("?");
        let sc = all.with_devices(single).map_err(|e| e.to_string())?;
        let (prog, layout) = assemble(&sc).map_err(|e| e.to_string())?;
        let sol = branch_and_bound_with_hints(&prog, &opts, &layout.starting_hints(&sc)).map_err(|e| e.to_string())?;
        let x = sol.x.as_ref().ok_or_else(|| format!("{name}: {:?}", sol.status))?;
        ensure!(
            sol.objective <= base_sol.best_bound + tol,
            "{name} {} above baseline {}",
            mw(sol.objective),
            mw(base_sol.best_bound)
        );
        hints.push(embed_single(&all, &all_layout, k, &prog, &layout, x));
        singles.push((name, sol.objective, sol.best_bound, sol.status));
        solved.runs.push((format!("9-bus {name} only"), sc.clone(), extract_schedule(&sc, &layout, x, sol.objective)));
    }
    let all_sol = branch_and_bound_with_hints(&all_prog, &BnbOptions { time_limit: 120.0, ..opts }, &hints)
        .map_err(|e| e.to_string())?;
    let x = all_sol.x.as_ref().ok_or_else(|| format!("all devices: {:?}", all_sol.status))?;
    for &(name, _, bound, _) in &singles {
        ensure!(all_sol.objective <= bound + tol, "all {} above {name} bound {}", mw(all_sol.objective), mw(bound));
    }
    let improvement = (base_sol.best_bound - all_sol.objective) / base_sol.best_bound;
    ensure!(improvement >= 1e-3, "all-devices improvement {:.4}%", 100.0 * improvement);
    solved.runs.push(("9-bus baseline".into(), base_sc, base));
    let schedule = extract_schedule(&all, &all_layout, x, all_sol.objective);
    solved.runs.push(("9-bus all devices".into(), all.clone(), schedule));
    let listed: Vec<String> = singles
        .iter()
        .map(|(n, v, b, st)| if *st == MiStatus::Optimal { format!("{n} {:.4}", mw(*v)) } else { format!("{n} [{:.4}, {:.4}]", mw(*b), mw(*v)) })
        .collect();
    Ok(format!(
        "T={DOMINANCE_HORIZON}: baseline {:.4} MW >= {} >= all {:.4} MW (bound {:.4}); {:.2}% better",
        mw(base_sol.objective),
        listed.join(", "),
        mw(all_sol.objective),
        mw(all_sol.best_bound),
        100.0 * improvement
    ))
}

fn budget_compliance(solved: &mut Solved) -> Outcome {
    // one action allowed and a shunt worth switching in: the optimum spends
    // the whole budget in the first period
    let sc = scenario("toy2.m", Some("toy2_devices.toml"), "toy2_profile.csv", 2, 1);
    let (_, schedule) = solve(&sc, &BnbOptions::default());
    let at_budget = (0..sc.horizon).filter(|&t| actions_at(&sc, &schedule, t) == sc.budget as usize).count();
    ensure!(at_budget > 0, "boundary scenario never uses the full budget");
    solved.runs.push(("boundary".into(), sc, schedule));
    for (name, sc, schedule) in &solved.runs {
        let violations = verify_schedule(sc, schedule).map_err(|e| e.to_string())?;
        ensure!(violations.is_empty(), "{name}: {} violations, first {}", violations.len(), violations[0].id);
        for t in 0..sc.horizon {
            let a = actions_at(sc, schedule, t);
            ensure!(a <= sc.budget as usize, "{name}: {a} actions at period {}", t + 1);
        }
    }
    Ok(format!("{} schedules clean; boundary uses the full budget in {at_budget} period(s)", solved.runs.len()))
}

fn voltage_window(solved: &Solved) -> Outcome {
    let mut checked = 0;
    for (name, sc, schedule) in &solved.runs {
        for (t, period) in schedule.periods.iter().enumerate() {
            for (i, bus) in period.buses.iter().enumerate() {
                match sc.devices.oltc_at(i) {
                    None => {
                        ensure!(bus.w >= 0.81 - 1e-6 && bus.w <= 1.21 + 1e-6, "{name}: W[{i}] = {} at period {}", bus.w, t + 1);
                    }
                    Some(dev) => {
                        let DeviceState::Oltc { u_reg, .. } = &period.devices[dev.index] else { unreachable!() };
                        ensure!((bus.w - u_reg).abs() <= 1e-6, "{name}: OLTC bus {i} W {} vs U {u_reg}", bus.w);
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} bus-periods"))
}

fn cross_solver() -> Outcome {
    let sc = nine_bus(true, 2);
    let (prog, _) = assemble(&sc).map_err(|e| e.to_string())?;
    let text = export_cbf(&prog);
    let back = import_cbf(&text).map_err(|e| e.to_string())?;
    ensure!(export_cbf(&back) == text, "re-export differs");
    let opts = BnbOptions::default();
    let direct = branch_and_bound(&prog, &opts).map_err(|e| e.to_string())?;
    let parsed = branch_and_bound(&back, &opts).map_err(|e| e.to_string())?;
    ensure!(direct.status == MiStatus::Optimal && parsed.status == MiStatus::Optimal, "statuses {:?} / {:?}", direct.status, parsed.status);
    let rel = (direct.objective - parsed.objective).abs() / direct.objective.abs();
    ensure!(rel <= 1e-5, "objectives {} vs {}", direct.objective, parsed.objective);
    Ok(format!("no external solver configured; self round-trip identical, objectives agree (rel {rel:.1e})"))
}

fn performance(solved: &mut Solved) -> Outcome {
    let opts = BnbOptions { gap: 1e-4, ..BnbOptions::default() };
    let mut detail = Vec::new();
    for (name, sc, limit) in [
        ("9-bus T=4", nine_bus(true, 4), 300.0),
        ("30-bus T=2", scenario("case30.m", Some("case30_devices.toml"), "case30_profile.csv", 2, 2), 900.0),
    ] {
        let start = Instant::now();
        let (sol, schedule) = try_solve(&sc, &opts);
        let secs = start.elapsed().as_secs_f64();
        ensure!(sol.status == MiStatus::Optimal, "{name}: {:?} after {secs:.1} s", sol.status);
        ensure!(secs <= limit, "{name}: {secs:.1} s > {limit} s");
        detail.push(format!("{name} {secs:.1} s ({} nodes)", sol.nodes));
        if let Some(schedule) = schedule {
            solved.runs.push((name.to_string(), sc, schedule));
        }
    }
    Ok(detail.join(", "))
}

fn report_arithmetic() -> Outcome {
    let pct = loss_percent(30.59, 1009.51);
    ensure!((pct - 3.030).abs() < 5e-4, "loss percent {pct}");
    ensure!((pct - 3.031).abs() <= 0.002, "{pct:.4} not within 0.002 of 3.031");
    Ok(format!("{pct:.4}%"))
}

fn run(number: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(msg) => println!("criterion {number:>2} PASS {name}: {msg} [{secs:.1} s]"),
        Err(msg) => println!("criterion {number:>2} FAIL {name}: {msg} [{secs:.1} s]"),
    }
    outcome.is_ok()
}

#[test]
fn acceptance() {
    let mut solved = Solved::default();
    let results = [
        run(1, "oracle equivalence", || oracle_equivalence(&mut solved)),
        run(2, "AC consistency", ac_consistency),
        run(3, "envelope soundness and tightness", envelope_soundness),
        run(4, "device linearization exactness", device_exactness),
        run(5, "coordination dominance", || coordination_dominance(&mut solved)),
        run(9, "desk-scale performance", || performance(&mut solved)),
        run(6, "budget and transition compliance", || budget_compliance(&mut solved)),
        run(7, "voltage window", || voltage_window(&solved)),
        run(8, "cross-solver check", cross_solver),
        run(10, "report arithmetic", report_arithmetic),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
