//! Activity-based bound propagation over the linear rows.

use super::{ConicProgram, Sense, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Bounds are consistent; `changed` integer bounds moved.
    Feasible { changed: usize },
    /// Row `row` cannot be satisfied within the bounds.
    Infeasible { row: usize },
}

const FEAS_TOL: f64 = 1e-7;

/// Tightens `lower`/`upper` in place. Integer bounds are rounded; continuous
/// bounds are relaxed by a small safety margin so that propagation never cuts
/// off points the conic solver would accept.
pub fn propagate_bounds(
    program: &ConicProgram,
    lower: &mut [f64],
    upper: &mut [f64],
    max_passes: usize,
) -> Propagation {
    let mut changed_total = 0;
    for _ in 0..max_passes {
        let mut changed = 0;
        for (r, row) in program.rows.iter().enumerate() {
            let dirs: &[f64] = match row.sense {
                Sense::Le => &[1.0],
                Sense::Ge => &[-1.0],
                Sense::Eq => &[1.0, -1.0],
            };
            for &sgn in dirs {
                // sgn * (a . x) <= sgn * rhs
                let rhs = sgn * row.rhs;
                let mut min_act = 0.0;
                let mut inf_count = 0;
                let mut inf_var = usize::MAX;
                let mut scale = rhs.abs().max(1.0);
                for &(j, a) in &row.terms {
                    let a = sgn * a;
                    let m = if a > 0.0 { a * lower[j] } else { a * upper[j] };
                    if m.is_finite() {
                        min_act += m;
                        scale = scale.max(m.abs());
                    } else if a != 0.0 {
                        inf_count += 1;
                        inf_var = j;
                    }
                }
                if inf_count == 0 && min_act > rhs + FEAS_TOL * scale {
                    return Propagation::Infeasible { row: r };
                }
                if inf_count > 1 {
                    continue;
                }
                for &(j, a) in &row.terms {
                    let a = sgn * a;
                    if a == 0.0 || (inf_count == 1 && j != inf_var) {
                        continue;
                    }
                    let own = if a > 0.0 { a * lower[j] } else { a * upper[j] };
                    let rest = if inf_count == 1 { min_act } else { min_act - own };
                    let limit = (rhs - rest) / a;
                    let integral = program.vars[j].kind != VarKind::Continuous;
                    if a > 0.0 {
                        let mut hi = limit;
                        if integral {
                            hi = (hi + 1e-6).floor();
                        } else {
                            hi += 1e-7 * (1.0 + hi.abs());
                        }
                        if improves(upper[j], hi, -1.0) {
                            upper[j] = hi;
                            if integral {
                                changed += 1;
                            }
                        }
                    } else {
                        let mut lo = limit;
                        if integral {
                            lo = (lo - 1e-6).ceil();
                        } else {
                            lo -= 1e-7 * (1.0 + lo.abs());
                        }
                        if improves(lower[j], lo, 1.0) {
                            lower[j] = lo;
                            if integral {
                                changed += 1;
                            }
                        }
                    }
                    if lower[j] > upper[j] + FEAS_TOL * (1.0 + upper[j].abs()) {
                        return Propagation::Infeasible { row: r };
                    }
                    if lower[j] > upper[j] {
                        // crossed within tolerance: collapse
                        let mid = 0.5 * (lower[j] + upper[j]);
                        lower[j] = mid;
                        upper[j] = mid;
                    }
                }
            }
        }
        changed_total += changed;
        if changed == 0 {
            break;
        }
    }
    Propagation::Feasible {
        changed: changed_total,
    }
}

/// Whether `new` moves bound `old` inward (direction `dir`) by a real margin.
fn improves(old: f64, new: f64, dir: f64) -> bool {
    if !old.is_finite() {
        return new.is_finite();
    }
    dir * (new - old) > 1e-9 * (1.0 + old.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miconic::{Label, Row, VarMeta};

    fn meta() -> VarMeta {
        VarMeta {
            symbol: "x",
            element: 0,
            period: 0,
            index: 0,
        }
    }

    #[test]
    fn one_hot_fixing_propagates() {
        let mut p = ConicProgram::default();
        let a: Vec<_> = (0..3)
            .map(|k| p.add_var(format!("a{k}"), 0.0, 1.0, VarKind::Binary, meta()))
            .collect();
        p.rows.push(Row::new(
            a.iter().map(|&j| (j, 1.0)).collect(),
            Sense::Eq,
            1.0,
            Label::new("onehot", 0, 0),
        ));
        let mut lo = vec![0.0, 1.0, 0.0];
        let mut hi = vec![1.0; 3];
        assert!(matches!(
            propagate_bounds(&p, &mut lo, &mut hi, 5),
            Propagation::Feasible { changed: 2 }
        ));
        assert_eq!(hi, vec![0.0, 1.0, 0.0]);
        let mut lo = vec![1.0, 1.0, 0.0];
        let mut hi = vec![1.0; 3];
        assert!(matches!(
            propagate_bounds(&p, &mut lo, &mut hi, 5),
            Propagation::Infeasible { row: 0 }
        ));
    }
}
