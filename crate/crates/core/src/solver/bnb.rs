//! Best-first branch-and-bound over the integer columns of a [`ConicProgram`].
//!
//! Every node relaxation is a continuous SOCP. Nodes are processed in batches
//! of `workers`; results are merged in pop order so the search is independent
//! of thread timing.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::heuristic::{complete_assignment, relaxation_dive, rounding_heuristic};
use super::ipm::{solve_socp, RelaxSolution, RelaxStatus, SocpOptions};
use super::SolveError;
use crate::miconic::{propagate_bounds, ConicProgram, Propagation, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    pub node_limit: usize,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    pub workers: usize,
    pub int_tol: f64,
    /// Keep a [`NodeRecord`] per processed node.
    pub record_nodes: bool,
    pub socp: SocpOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            gap: 1e-4,
            node_limit: 100_000,
            time_limit: 3600.0,
            workers: 1,
            int_tol: 1e-6,
            record_nodes: false,
            socp: SocpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiStatus {
    /// Incumbent within the gap of the proven bound.
    Optimal,
    /// A limit was hit with an incumbent in hand.
    Feasible,
    Infeasible,
    /// A limit was hit before any incumbent was found.
    NoSolution,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bound: f64,
    pub outcome: String,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSolution {
    pub status: MiStatus,
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub root_bound: f64,
    pub nodes: usize,
    pub wall_seconds: f64,
    pub node_log: Vec<NodeRecord>,
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    /// Bounds of the integer columns, aligned with `Search::ints`.
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound: f64,
    /// Branching that created the node: integer position, up side, and the
    /// distance the parent's value was pushed.
    branched: Option<(usize, bool, f64)>,
}

/// Per-column average bound gain per unit of rounding distance, learned from
/// processed children.
#[derive(Debug, Clone)]
struct Pseudocosts {
    sum: Vec<[f64; 2]>,
    count: Vec<[u32; 2]>,
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Pseudocosts { sum: vec![[0.0; 2]; n], count: vec![[0; 2]; n] }
    }

    fn record(&mut self, k: usize, up: bool, distance: f64, gain: f64) {
        if distance > 1e-9 && gain.is_finite() {
            let side = usize::from(up);
            self.sum[k][side] += gain.max(0.0) / distance;
            self.count[k][side] += 1;
        }
    }

    /// Average over every observed column, 1 when nothing is known yet.
    fn fallback(&self, side: usize) -> f64 {
        let (s, n) = self
            .sum
            .iter()
            .zip(&self.count)
            .filter(|(_, c)| c[side] > 0)
            .fold((0.0, 0u32), |(s, n), (v, c)| (s + v[side] / f64::from(c[side]), n + 1));
        if n == 0 {
            1.0
        } else {
            s / f64::from(n)
        }
    }

    fn estimate(&self, k: usize, side: usize, fallback: [f64; 2]) -> f64 {
        match self.count[k][side] {
            0 => fallback[side],
            c => self.sum[k][side] / f64::from(c),
        }
    }
}

struct Child {
    lower: Vec<f64>,
    upper: Vec<f64>,
    branched: Option<(usize, bool, f64)>,
}

enum Outcome {
    Pruned(&'static str),
    /// Relaxation is integral; `polished` holds the re-solve with fixed integers.
    Integral { bound: f64, polished: Option<RelaxSolution> },
    Branch { bound: f64, children: Vec<Child> },
    /// Numerical failure with every integer fixed: the node cannot be closed.
    Unresolved { bound: f64 },
}

struct Search<'a> {
    program: &'a ConicProgram,
    ints: Vec<VarId>,
    /// Position of each column in `ints`.
    pos: HashMap<VarId, usize>,
    /// One-hot group index per integer position.
    group_of: Vec<Option<usize>>,
    opts: &'a BnbOptions,
}

fn gap_of(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

impl<'a> Search<'a> {
    fn new(program: &'a ConicProgram, opts: &'a BnbOptions) -> Self {
        let ints = program.integer_vars();
        let pos: HashMap<VarId, usize> = ints.iter().enumerate().map(|(k, &j)| (j, k)).collect();
        let mut group_of = vec![None; ints.len()];
        for (g, group) in program.one_hot.iter().enumerate() {
            for j in group {
                if let Some(&k) = pos.get(j) {
                    group_of[k] = Some(g);
                }
            }
        }
        Search { program, ints, pos, group_of, opts }
    }

    fn node_program(&self, lower: &[f64], upper: &[f64]) -> ConicProgram {
        let mut p = self.program.relaxed();
        for (k, &j) in self.ints.iter().enumerate() {
            p.vars[j].lower = lower[k];
            p.vars[j].upper = upper[k];
        }
        p
    }

    /// Propagates the node bounds. Only integer tightenings are kept.
    fn tighten(&self, lower: &mut [f64], upper: &mut [f64]) -> bool {
        let mut lo: Vec<f64> = self.program.vars.iter().map(|v| v.lower).collect();
        let mut hi: Vec<f64> = self.program.vars.iter().map(|v| v.upper).collect();
        for (k, &j) in self.ints.iter().enumerate() {
            lo[j] = lower[k];
            hi[j] = upper[k];
        }
        if let Propagation::Infeasible { .. } = propagate_bounds(self.program, &mut lo, &mut hi, 8) {
            return false;
        }
        for (k, &j) in self.ints.iter().enumerate() {
            lower[k] = lo[j].round();
            upper[k] = hi[j].round();
            if lower[k] > upper[k] {
                return false;
            }
        }
        true
    }

    /// Solves a node. The second value is the node's relaxation objective
    /// when one was obtained.
    fn process(&self, node: &Node, cutoff: f64, costs: &Pseudocosts) -> Result<(Outcome, Option<f64>), SolveError> {
        let mut solved = None;
        let outcome = self.process_inner(node, cutoff, costs, &mut solved)?;
        Ok((outcome, solved))
    }

    fn process_inner(
        &self,
        node: &Node,
        cutoff: f64,
        costs: &Pseudocosts,
        solved: &mut Option<f64>,
    ) -> Result<Outcome, SolveError> {
        let mut lower = node.lower.clone();
        let mut upper = node.upper.clone();
        if !self.tighten(&mut lower, &mut upper) {
            return Ok(Outcome::Pruned("propagation"));
        }
        let relax = solve_socp(&self.node_program(&lower, &upper), &self.opts.socp)?;
        let bound = match relax.status {
            RelaxStatus::Infeasible => return Ok(Outcome::Pruned("infeasible")),
            RelaxStatus::Unbounded => return Err(SolveError::Options("relaxation is unbounded".into())),
            RelaxStatus::Optimal => {
                *solved = Some(relax.objective);
                let tol = 1e-6 * node.bound.abs().max(1.0);
                if relax.objective < node.bound - tol {
                    log::warn!(
                        "node {} relaxation {:.9e} below parent bound {:.9e}",
                        node.id,
                        relax.objective,
                        node.bound
                    );
                }
                relax.objective.max(node.bound)
            }
            RelaxStatus::NumericalFailure => node.bound,
        };
        if bound >= cutoff {
            return Ok(Outcome::Pruned("bound"));
        }
        let all_fixed = lower.iter().zip(&upper).all(|(l, u)| l == u);
        if relax.status == RelaxStatus::NumericalFailure {
            if all_fixed {
                return Ok(Outcome::Unresolved { bound });
            }
            // branch on the widest domain without relaxation guidance
            let k = (0..self.ints.len()).find(|&k| lower[k] < upper[k]).expect("free column");
            let mid = 0.5 * (lower[k] + upper[k]);
            return Ok(Outcome::Branch { bound, children: self.split(k, mid, &lower, &upper, None) });
        }

        // best pseudocost score in the highest priority class; ties go to
        // the more fractional, then the lower index
        let x = &relax.x;
        let fallback = [costs.fallback(0), costs.fallback(1)];
        let mut pick: Option<(usize, u8, f64, f64)> = None;
        for (k, &j) in self.ints.iter().enumerate() {
            let down = x[j] - x[j].floor();
            let up = x[j].ceil() - x[j];
            let frac = down.min(up);
            if frac <= self.opts.int_tol {
                continue;
            }
            let prio = self.program.vars[j].priority;
            let score = (costs.estimate(k, 0, fallback) * down).max(1e-9)
                * (costs.estimate(k, 1, fallback) * up).max(1e-9);
            let better = match pick {
                None => true,
                Some((_, p, sc, f)) => {
                    prio > p || (prio == p && (score > sc * (1.0 + 1e-9) || (score >= sc * (1.0 - 1e-9) && frac > f + 1e-12)))
                }
            };
            if better {
                pick = Some((k, prio, score, frac));
            }
        }
        match pick {
            None => {
                let fix: Vec<(VarId, f64)> = self.ints.iter().map(|&j| (j, x[j].round())).collect();
                let fixed = self.program.fix_binaries(&fix)?;
                let polished = solve_socp(&fixed.relaxed(), &self.opts.socp)?;
                let polished = (polished.status == RelaxStatus::Optimal
                    && polished.primal_residual <= self.opts.socp.accept_feas)
                    .then_some(polished);
                Ok(Outcome::Integral { bound, polished })
            }
            Some((k, _, _, _)) => {
                let j = self.ints[k];
                Ok(Outcome::Branch { bound, children: self.split(k, x[j], &lower, &upper, Some(x)) })
            }
        }
    }

    /// Children of a node. Members of a one-hot group are split SOS1-style
    /// around the relaxation's mass; other columns get floor/ceil children.
    fn split(&self, k: usize, value: f64, lower: &[f64], upper: &[f64], x: Option<&Vec<f64>>) -> Vec<Child> {
        if let (Some(g), Some(x)) = (self.group_of[k], x) {
            let free: Vec<usize> = self.program.one_hot[g]
                .iter()
                .filter_map(|j| self.pos.get(j).copied())
                .filter(|&q| lower[q] < upper[q])
                .collect();
            if free.len() >= 2 {
                let total: f64 = free.iter().map(|&q| x[self.ints[q]]).sum();
                let mut acc = 0.0;
                let mut cut = 1;
                for (i, &q) in free.iter().enumerate().take(free.len() - 1) {
                    acc += x[self.ints[q]];
                    cut = i + 1;
                    if acc >= 0.5 * total {
                        break;
                    }
                }
                let (left, right) = free.split_at(cut);
                let zeroed = |off: &[usize]| {
                    let mut hi = upper.to_vec();
                    for &q in off {
                        hi[q] = 0.0;
                    }
                    // zeroing the picked column moves it down, otherwise up
                    let branched = if off.contains(&k) { (k, false, value) } else { (k, true, 1.0 - value) };
                    Child { lower: lower.to_vec(), upper: hi, branched: Some(branched) }
                };
                return vec![zeroed(right), zeroed(left)];
            }
        }
        let guided = x.is_some();
        let mut down = Child {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            branched: guided.then_some((k, false, value - value.floor())),
        };
        down.upper[k] = value.floor().max(lower[k]);
        let mut up = Child {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            branched: guided.then_some((k, true, value.floor() + 1.0 - value)),
        };
        up.lower[k] = (value.floor() + 1.0).min(upper[k]);
        // explore the nearer side first
        if value - value.floor() > 0.5 {
            vec![up, down]
        } else {
            vec![down, up]
        }
    }
}

/// Minimizes `program` with integrality enforced on its binary and integer
/// columns.
pub fn branch_and_bound(program: &ConicProgram, opts: &BnbOptions) -> Result<MiSolution, SolveError> {
    branch_and_bound_with_hints(program, opts, &[])
}

/// As [`branch_and_bound`], seeding the incumbent with partial assignments
/// that are completed by rounding the root relaxation.
pub fn branch_and_bound_with_hints(
    program: &ConicProgram,
    opts: &BnbOptions,
    hints: &[Vec<(VarId, f64)>],
) -> Result<MiSolution, SolveError> {
    if opts.workers == 0 {
        return Err(SolveError::Options("at least one worker is required".into()));
    }
    if !(opts.gap >= 0.0) {
        return Err(SolveError::Options("gap must be nonnegative".into()));
    }
    program.check()?;
    let start = Instant::now();
    let search = Search::new(program, opts);
    let mut log_nodes = Vec::new();
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut unresolved = f64::INFINITY;
    let mut next_id = 1;

    let root = Node {
        id: 0,
        parent: None,
        depth: 0,
        lower: search.ints.iter().map(|&j| program.vars[j].lower).collect(),
        upper: search.ints.iter().map(|&j| program.vars[j].upper).collect(),
        bound: f64::NEG_INFINITY,
        branched: None,
    };
    let mut costs = Pseudocosts::new(search.ints.len());
    let mut root_bound = f64::NEG_INFINITY;

    // root relaxation also seeds the rounding heuristic
    let root_relax = solve_socp(&program.relaxed(), &opts.socp)?;
    match root_relax.status {
        RelaxStatus::Infeasible => {
            return Ok(MiSolution {
                status: MiStatus::Infeasible,
                x: None,
                objective: f64::INFINITY,
                best_bound: f64::INFINITY,
                gap: f64::INFINITY,
                root_bound: f64::INFINITY,
                nodes: 1,
                wall_seconds: start.elapsed().as_secs_f64(),
                node_log: log_nodes,
            })
        }
        RelaxStatus::Unbounded => {
            return Ok(MiSolution {
                status: MiStatus::Unbounded,
                x: None,
                objective: f64::NEG_INFINITY,
                best_bound: f64::NEG_INFINITY,
                gap: f64::INFINITY,
                root_bound: f64::NEG_INFINITY,
                nodes: 1,
                wall_seconds: start.elapsed().as_secs_f64(),
                node_log: log_nodes,
            })
        }
        RelaxStatus::Optimal => {
            root_bound = root_relax.objective;
            let mut offer = |h: Option<RelaxSolution>, what: &str| {
                if let Some(h) = h {
                    log::info!("{what} incumbent {:.9e}", h.objective);
                    if incumbent.as_ref().is_none_or(|i| h.objective < i.1) {
                        incumbent = Some((h.x, h.objective));
                    }
                }
            };
            offer(rounding_heuristic(program, &root_relax.x, &opts.socp)?, "rounding");
            for up_from in [0.5, 0.05] {
                offer(relaxation_dive(program, &root_relax.x, up_from, &opts.socp)?, "dive");
            }
            for hint in hints {
                offer(complete_assignment(program, hint, &root_relax.x, &opts.socp)?, "hint");
            }
        }
        RelaxStatus::NumericalFailure => log::warn!("root relaxation failed numerically: {}", root_relax.message),
    }

    let mut open = vec![root];
    let mut processed = 0;
    let mut limit_hit = false;
    // hints do not end the initial dive; only a leaf reached by the search does
    let mut diving = true;
    let dive_limit = 2 * search.ints.len() + 10;
    while !open.is_empty() {
        let inc_val = incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
        let best_open = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        if gap_of(inc_val, best_open.min(unresolved)) <= opts.gap {
            break;
        }
        if processed >= opts.node_limit || start.elapsed().as_secs_f64() >= opts.time_limit {
            limit_hit = true;
            break;
        }
        // dive (deepest first) until the search reaches a leaf; then best-first
        let dive = diving && processed < dive_limit;
        let key = |n: &Node| {
            if dive {
                (-(n.depth as f64), n.bound, n.id)
            } else {
                (0.0, n.bound, n.id)
            }
        };
        let take = opts.workers.min(open.len());
        let mut batch = Vec::with_capacity(take);
        for _ in 0..take {
            let (i, _) = open
                .iter()
                .enumerate()
                .min_by(|a, b| key(a.1).partial_cmp(&key(b.1)).expect("finite keys"))
                .expect("nonempty");
            batch.push(open.swap_remove(i));
        }
        let cutoff = if inc_val.is_finite() {
            inc_val - opts.gap * inc_val.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        let outcomes: Vec<Result<(Outcome, Option<f64>), SolveError>> = if batch.len() == 1 {
            vec![search.process(&batch[0], cutoff, &costs)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|node| {
                        let (search, costs) = (&search, &costs);
                        s.spawn(move || search.process(node, cutoff, costs))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("node worker panicked")).collect()
            })
        };
        for (node, outcome) in batch.into_iter().zip(outcomes) {
            processed += 1;
            let (outcome, solved) = outcome?;
            if let (Some((k, up, distance)), Some(obj)) = (node.branched, solved) {
                if node.bound.is_finite() {
                    costs.record(k, up, distance, obj - node.bound);
                }
            }
            let inc_before = incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
            let (bound, label) = match outcome {
                Outcome::Pruned(why) => (node.bound, why.to_string()),
                Outcome::Unresolved { bound } => {
                    unresolved = unresolved.min(bound);
                    (bound, "unresolved".to_string())
                }
                Outcome::Integral { bound, polished } => {
                    diving = false;
                    let label = match polished {
                        Some(p) if p.objective < inc_before => {
                            incumbent = Some((p.x, p.objective));
                            "incumbent"
                        }
                        Some(_) => "integral",
                        None => {
                            unresolved = unresolved.min(bound);
                            "polish-failed"
                        }
                    };
                    (bound, label.to_string())
                }
                Outcome::Branch { bound, children } => {
                    for child in children {
                        open.push(Node {
                            id: next_id,
                            parent: Some(node.id),
                            depth: node.depth + 1,
                            lower: child.lower,
                            upper: child.upper,
                            bound,
                            branched: child.branched,
                        });
                        next_id += 1;
                    }
                    (bound, "branched".to_string())
                }
            };
            let inc_now = incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
            if node.id == 0 && bound.is_finite() {
                root_bound = root_bound.max(bound);
            }
            log::debug!("node {} depth {} bound {:.9e} {} incumbent {:.9e}", node.id, node.depth, bound, label, inc_now);
            if opts.record_nodes {
                log_nodes.push(NodeRecord {
                    id: node.id,
                    parent: node.parent,
                    depth: node.depth,
                    bound,
                    outcome: label,
                    incumbent: inc_now,
                });
            }
        }
        // drop nodes the new incumbent dominates
        let inc_val = incumbent.as_ref().map_or(f64::INFINITY, |i| i.1);
        if inc_val.is_finite() {
            let cut = inc_val - opts.gap * inc_val.abs().max(1.0);
            open.retain(|n| n.bound < cut);
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let wall_seconds = start.elapsed().as_secs_f64();
    let (status, x, objective) = match incumbent {
        Some((x, obj)) => {
            let bound = open_bound.min(unresolved).min(obj);
            let status = if gap_of(obj, bound) <= opts.gap { MiStatus::Optimal } else { MiStatus::Feasible };
            (status, Some(x), obj)
        }
        None if limit_hit || unresolved.is_finite() => (MiStatus::NoSolution, None, f64::INFINITY),
        None => (MiStatus::Infeasible, None, f64::INFINITY),
    };
    let best_bound = open_bound.min(unresolved).min(objective);
    log::info!(
        "branch-and-bound: {:?} after {} nodes, objective {:.9e}, bound {:.9e}",
        status,
        processed,
        objective,
        best_bound
    );
    Ok(MiSolution {
        status,
        gap: gap_of(objective, best_bound),
        x,
        objective,
        best_bound,
        root_bound,
        nodes: processed,
        wall_seconds,
        node_log: log_nodes,
    })
}
