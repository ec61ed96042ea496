//! Time coupling: the per-period action budget and OLTC tap transitions.

use crate::miconic::{ConstraintBlock, Label, OltcVars, Sense, VarId};

/// Value of a quantity in the previous period: a column, or a constant taken
/// from the initial state when `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prev {
    Var(VarId),
    Const(f64),
}

impl Prev {
    /// `coef * prev` split into a term list and a constant.
    fn split(self, coef: f64) -> (Option<(VarId, f64)>, f64) {
        match self {
            Prev::Var(v) => (Some((v, coef)), 0.0),
            Prev::Const(c) => (None, coef * c),
        }
    }
}

/// On/off status of one non-OLTC device at `t` with its change epigraph `change`.
#[derive(Debug, Clone, Copy)]
pub struct StatusTrack {
    pub device: usize,
    pub status: VarId,
    pub prev: Prev,
    pub change: VarId,
}

/// `change >= |s^t - s^{t-1}|` per device and
/// `sum(change) + sum(tap switches) <= budget`.
pub fn build_budget_constraint(
    t: usize,
    budget: u32,
    tracks: &[StatusTrack],
    tap_switches: &[VarId],
) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    for tr in tracks {
        let lab = Label::new("status_change", tr.device, t);
        for sign in [1.0, -1.0] {
            // change - sign*(s - prev) >= 0
            let mut terms = vec![(tr.change, 1.0), (tr.status, -sign)];
            let (pv, pc) = tr.prev.split(sign);
            terms.extend(pv);
            b.row(terms, Sense::Ge, -pc, lab);
        }
        b.bounds.push((tr.change, 0.0, 1.0));
    }
    let mut terms: Vec<(VarId, f64)> = tracks.iter().map(|tr| (tr.change, 1.0)).collect();
    terms.extend(tap_switches.iter().map(|&o| (o, 1.0)));
    if !terms.is_empty() {
        b.row(terms, Sense::Le, budget as f64, Label::new("budget", 0, t));
    }
    b
}

/// Tap index `u = sum(n alpha_n)` and the switch logic
/// `o <= |u - u_prev| = eta <= o * max_step`, linearized with direction `z`.
pub fn build_tap_transition(
    taps: usize,
    max_step: u32,
    device: usize,
    t: usize,
    v: &OltcVars,
    prev: Prev,
) -> ConstraintBlock {
    let lab = |f| Label::new(f, device, t);
    let mut b = ConstraintBlock::default();
    let reach = (max_step as f64).min(taps as f64 - 1.0);
    let m = 2.0 * reach;

    let mut enc = vec![(v.tap, 1.0)];
    enc.extend(v.alpha.iter().enumerate().map(|(n, &a)| (a, -((n + 1) as f64))));
    b.row(enc, Sense::Eq, 0.0, lab("tap_index"));

    // delta = u - prev written as terms plus constant: u + (-1)*prev
    let delta = |sign: f64| {
        let mut terms = vec![(v.tap, sign)];
        let (pv, pc) = prev.split(-sign);
        terms.extend(pv);
        (terms, pc)
    };
    for sign in [1.0, -1.0] {
        // eta - sign*delta >= 0
        let (d, c) = delta(-sign);
        let mut terms = vec![(v.eta, 1.0)];
        terms.extend(d);
        b.row(terms, Sense::Ge, -c, lab("tap_magnitude"));
    }
    let why = "twice the largest reachable tap move";
    // eta <= delta + M(1 - z)  ->  eta - delta + M z <= M
    let (d, c) = delta(-1.0);
    let mut terms = vec![(v.eta, 1.0), (v.z, m)];
    terms.extend(d);
    b.big_m_row(terms, Sense::Le, m - c, lab("tap_direction_up"), m, why);
    // eta <= -delta + M z  ->  eta + delta - M z <= 0
    let (d, c) = delta(1.0);
    let mut terms = vec![(v.eta, 1.0), (v.z, -m)];
    terms.extend(d);
    b.big_m_row(terms, Sense::Le, -c, lab("tap_direction_down"), m, why);

    b.row(vec![(v.o, 1.0), (v.eta, -1.0)], Sense::Le, 0.0, lab("tap_switch_lo"));
    b.row(vec![(v.eta, 1.0), (v.o, -(max_step as f64))], Sense::Le, 0.0, lab("tap_switch_hi"));
    b.bounds.push((v.eta, 0.0, reach));
    b.bounds.push((v.tap, 1.0, taps as f64));
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oltc(k: usize) -> OltcVars {
        // alpha 0..k, then tap, eta, o, z
        OltcVars {
            alpha: (0..k).collect(),
            gamma: vec![],
            u_base: usize::MAX,
            u_reg: usize::MAX,
            tap: k,
            eta: k + 1,
            o: k + 2,
            z: k + 3,
        }
    }

    fn point(k: usize, tap: usize, eta: f64, o: f64, z: f64) -> Vec<f64> {
        let mut x = vec![0.0; k + 4];
        x[tap - 1] = 1.0;
        x[k] = tap as f64;
        x[k + 1] = eta;
        x[k + 2] = o;
        x[k + 3] = z;
        x
    }

    #[test]
    fn two_step_move_is_feasible_with_switch() {
        let b = build_tap_transition(9, 3, 0, 1, &oltc(9), Prev::Const(5.0));
        assert!(b.max_violation(&point(9, 7, 2.0, 1.0, 1.0)) < 1e-12);
        assert!(b.max_violation(&point(9, 7, 2.0, 0.0, 1.0)) > 0.5);
        assert!(b.max_violation(&point(9, 7, 1.0, 1.0, 1.0)) > 0.5);
        assert!(b.max_violation(&point(9, 5, 0.0, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn budget_counts_flips() {
        let tracks = [
            StatusTrack { device: 0, status: 0, prev: Prev::Const(0.0), change: 2 },
            StatusTrack { device: 1, status: 1, prev: Prev::Const(1.0), change: 3 },
        ];
        let b1 = build_budget_constraint(0, 1, &tracks, &[]);
        assert!(b1.max_violation(&[1.0, 1.0, 1.0, 0.0]) < 1e-12);
        assert!(b1.max_violation(&[1.0, 1.0, 0.0, 0.0]) > 0.5);
        let b0 = build_budget_constraint(0, 0, &tracks, &[]);
        assert!(b0.max_violation(&[1.0, 1.0, 1.0, 0.0]) > 0.5);
    }
}
