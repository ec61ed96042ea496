//! Fix-and-propagate rounding of a relaxation point.

use super::ipm::{solve_socp, RelaxSolution, RelaxStatus, SocpOptions};
use super::SolveError;
use crate::miconic::{propagate_bounds, ConicProgram, Propagation, VarId};

/// Integer columns in rounding order with their preferred values: one-hot
/// groups take their largest member, other columns round up from a
/// fractional part of `up_from` (nearest at 0.5). Higher
/// branching priority first, then most confident.
fn rounding_order(program: &ConicProgram, x: &[f64], up_from: f64) -> Vec<(VarId, f64)> {
    let mut order: Vec<(VarId, f64, f64)> = Vec::new();
    let mut grouped = vec![false; program.vars.len()];
    for group in &program.one_hot {
        let Some(&best) = group.iter().max_by(|&&a, &&b| x[a].total_cmp(&x[b])) else {
            continue;
        };
        order.push((best, 1.0, 2.0 + x[best]));
        for &j in group {
            grouped[j] = true;
        }
    }
    for j in program.integer_vars() {
        if !grouped[j] {
            let r = if x[j] - x[j].floor() >= up_from { x[j].ceil() } else { x[j].floor() };
            order.push((j, r, 1.0 - (x[j] - r).abs()));
        }
    }
    let priority = |j: VarId| program.vars[j].priority;
    order.sort_by(|a, b| priority(b.0).cmp(&priority(a.0)).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(j, v, _)| (j, v)).collect()
}

fn fix(program: &ConicProgram, j: VarId, value: f64, lower: &mut Vec<f64>, upper: &mut Vec<f64>) -> bool {
    if value < lower[j] || value > upper[j] {
        return false;
    }
    let (mut lo, mut hi) = (lower.clone(), upper.clone());
    lo[j] = value;
    hi[j] = value;
    match propagate_bounds(program, &mut lo, &mut hi, 4) {
        Propagation::Infeasible { .. } => false,
        Propagation::Feasible { .. } => {
            *lower = lo;
            *upper = hi;
            true
        }
    }
}

/// Fixes `required` exactly, then rounds the remaining integers along `guide`
/// (trying the opposite value when a rounding is refuted by propagation) and
/// solves the SOCP left over. `None` when the assignment dead-ends or the
/// final SOCP is not solved to feasibility.
pub fn complete_assignment(
    program: &ConicProgram,
    required: &[(VarId, f64)],
    guide: &[f64],
    opts: &SocpOptions,
) -> Result<Option<RelaxSolution>, SolveError> {
    let mut lower: Vec<f64> = program.vars.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = program.vars.iter().map(|v| v.upper).collect();
    for &(j, value) in required {
        if lower[j] == value && upper[j] == value {
            continue;
        }
        if !fix(program, j, value, &mut lower, &mut upper) {
            log::debug!("required value {value} of `{}` is infeasible", program.vars[j].name);
            return Ok(None);
        }
    }
    for (j, value) in rounding_order(program, guide, 0.5) {
        if lower[j] == upper[j] || fix(program, j, value, &mut lower, &mut upper) {
            continue;
        }
        let alt = if value >= upper[j] { value - 1.0 } else { value + 1.0 };
        if !fix(program, j, alt, &mut lower, &mut upper) {
            log::debug!("rounding dead-ends at `{}`", program.vars[j].name);
            return Ok(None);
        }
    }
    let assignment: Vec<(VarId, f64)> = program
        .integer_vars()
        .into_iter()
        .map(|j| (j, lower[j].round()))
        .collect();
    let fixed = program.fix_binaries(&assignment)?.relaxed();
    let sol = solve_socp(&fixed, opts)?;
    Ok((sol.status == RelaxStatus::Optimal && sol.primal_residual <= opts.accept_feas).then_some(sol))
}

/// Rounds the integer columns of a relaxation point `x`, most confident
/// first, and re-solves with all integers fixed.
pub fn rounding_heuristic(
    program: &ConicProgram,
    x: &[f64],
    opts: &SocpOptions,
) -> Result<Option<RelaxSolution>, SolveError> {
    complete_assignment(program, &[], x, opts)
}

/// Relaxation dive: fixes the most confident quarter of the free integers
/// along the current relaxation, re-solves, and repeats until every integer
/// is fixed. A chunk whose relaxation is infeasible is halved and retried; a
/// single refuted column takes its other value once before the dive gives up.
/// Columns round up from a fractional part of `up_from`.
pub fn relaxation_dive(
    program: &ConicProgram,
    x: &[f64],
    up_from: f64,
    opts: &SocpOptions,
) -> Result<Option<RelaxSolution>, SolveError> {
    let mut lower: Vec<f64> = program.vars.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = program.vars.iter().map(|v| v.upper).collect();
    let mut guide = x.to_vec();
    let mut node = program.relaxed();
    loop {
        let free: Vec<(VarId, f64)> =
            rounding_order(program, &guide, up_from).into_iter().filter(|&(j, _)| lower[j] < upper[j]).collect();
        if free.is_empty() {
            break;
        }
        let mut chunk = free.len().div_ceil(4);
        let mut flipped = false;
        loop {
            let (mut lo, mut hi) = (lower.clone(), upper.clone());
            let mut ok = true;
            for (k, &(j, value)) in free.iter().take(chunk).enumerate() {
                if lo[j] == hi[j] {
                    continue;
                }
                let value = if flipped && k == 0 { if value >= hi[j] { value - 1.0 } else { value + 1.0 } } else { value };
                if !fix(program, j, value, &mut lo, &mut hi) {
                    let alt = if value >= hi[j] { value - 1.0 } else { value + 1.0 };
                    if !fix(program, j, alt, &mut lo, &mut hi) {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                for (v, (&l, &h)) in node.vars.iter_mut().zip(lo.iter().zip(&hi)) {
                    v.lower = l;
                    v.upper = h;
                }
                let sol = solve_socp(&node, opts)?;
                if sol.status == RelaxStatus::Optimal {
                    lower = lo;
                    upper = hi;
                    guide = sol.x;
                    break;
                }
            }
            if chunk > 1 {
                chunk /= 2;
            } else if !flipped {
                flipped = true;
            } else {
                log::debug!("relaxation dive dead-ends with {} free integers", free.len());
                return Ok(None);
            }
        }
    }
    let assignment: Vec<(VarId, f64)> =
        program.integer_vars().into_iter().map(|j| (j, lower[j].round())).collect();
    let fixed = program.fix_binaries(&assignment)?.relaxed();
    let sol = solve_socp(&fixed, opts)?;
    Ok((sol.status == RelaxStatus::Optimal && sol.primal_residual <= opts.accept_feas).then_some(sol))
}
