//! Mixed-integer constraint blocks for the four device types, one block per
//! device and period. Every big-M is derived from the bounds of the variables
//! it guards.

use crate::miconic::{ConstraintBlock, Label, ModelError, OltcVars, Sense, ShuntVars, StatcomVars, TcscVars};
use crate::netmodel::TcscMode;

/// Reactance range of a TCSC as fractions of the line reactance.
pub const TCSC_DX_MIN: f64 = -0.8;
pub const TCSC_DX_MAX: f64 = 0.2;

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::HandleMismatch { what, expected, got })
    }
}

/// Shunt with blocks `q_n`: `s <= sum(alpha) <= N`, `q = sum(alpha_n q_n)` when
/// on, `q = 0` when off. `M = sum(q_n)`.
pub fn build_shunt_block(
    blocks: &[f64],
    device: usize,
    t: usize,
    v: &ShuntVars,
) -> Result<ConstraintBlock, ModelError> {
    check_len("shunt blocks", blocks.len(), v.alpha.len())?;
    let n = blocks.len() as f64;
    let m: f64 = blocks.iter().sum();
    let lab = |f| Label::new(f, device, t);
    let mut b = ConstraintBlock::default();

    let mut sel = vec![(v.s, 1.0)];
    sel.extend(v.alpha.iter().map(|&a| (a, -1.0)));
    b.row(sel, Sense::Le, 0.0, lab("shunt_select_min"));
    b.row(v.alpha.iter().map(|&a| (a, 1.0)).collect(), Sense::Le, n, lab("shunt_select_max"));

    let sum_terms = |extra: f64| {
        let mut t = vec![(v.q, 1.0)];
        t.extend(v.alpha.iter().zip(blocks).map(|(&a, &q)| (a, -q)));
        t.push((v.s, extra));
        t
    };
    let why = "sum of shunt blocks";
    b.big_m_row(sum_terms(-m), Sense::Ge, -m, lab("shunt_level_lo"), m, why);
    b.big_m_row(sum_terms(m), Sense::Le, m, lab("shunt_level_hi"), m, why);
    b.big_m_row(vec![(v.q, 1.0), (v.s, -m)], Sense::Le, 0.0, lab("shunt_cap"), m, why);
    b.bounds.push((v.q, 0.0, m));
    Ok(b)
}

/// STATCOM: `-q_max s <= q <= q_max s`.
pub fn build_statcom_block(q_max: f64, device: usize, t: usize, v: &StatcomVars) -> ConstraintBlock {
    let lab = |f| Label::new(f, device, t);
    let mut b = ConstraintBlock::default();
    let why = "statcom capability";
    b.big_m_row(vec![(v.q, 1.0), (v.s, -q_max)], Sense::Le, 0.0, lab("statcom_hi"), q_max, why);
    b.big_m_row(vec![(v.q, 1.0), (v.s, q_max)], Sense::Ge, 0.0, lab("statcom_lo"), q_max, why);
    b.bounds.push((v.q, -q_max, q_max));
    b
}

/// OLTC tap selection: one-hot `alpha`, `gamma_n = U~ delta_n` for the chosen
/// tap and 0 otherwise, `U = sum(gamma)`. `M = v_max^2 max(delta)`.
pub fn build_oltc_block(
    delta_sq: &[f64],
    v_min: f64,
    v_max: f64,
    device: usize,
    t: usize,
    v: &OltcVars,
) -> Result<ConstraintBlock, ModelError> {
    check_len("oltc taps", delta_sq.len(), v.alpha.len())?;
    check_len("oltc gamma", delta_sq.len(), v.gamma.len())?;
    let dmax = delta_sq.iter().copied().fold(f64::MIN, f64::max);
    let dmin = delta_sq.iter().copied().fold(f64::MAX, f64::min);
    let m = v_max * v_max * dmax;
    let lab = |f| Label::new(f, device, t);
    let mut b = ConstraintBlock::default();
    let why = "v_max^2 * max squared ratio";

    b.row(v.alpha.iter().map(|&a| (a, 1.0)).collect(), Sense::Eq, 1.0, lab("oltc_onehot"));
    b.one_hot.push(v.alpha.clone());
    b.bounds.push((v.u_base, v_min * v_min, v_max * v_max));
    for ((&g, &a), &d) in v.gamma.iter().zip(&v.alpha).zip(delta_sq) {
        b.big_m_row(vec![(g, 1.0), (a, -m)], Sense::Le, 0.0, lab("oltc_gamma_cap"), m, why);
        b.big_m_row(
            vec![(g, 1.0), (v.u_base, -d), (a, -m)],
            Sense::Ge,
            -m,
            lab("oltc_gamma_lo"),
            m,
            why,
        );
        b.big_m_row(
            vec![(g, 1.0), (v.u_base, -d), (a, m)],
            Sense::Le,
            m,
            lab("oltc_gamma_hi"),
            m,
            why,
        );
        b.bounds.push((g, 0.0, m));
    }
    let mut sum = vec![(v.u_reg, 1.0)];
    sum.extend(v.gamma.iter().map(|&g| (g, -1.0)));
    b.row(sum, Sense::Eq, 0.0, lab("oltc_sum"));
    b.bounds.push((v.u_reg, v_min * v_min * dmin, m));
    Ok(b)
}

/// Bounds on the TCSC susceptance variable when the device is on.
pub fn tcsc_susceptance_bounds(x_line: f64, mode: TcscMode) -> Result<(f64, f64), ModelError> {
    if !(x_line > 0.0) {
        return Err(ModelError::NonPositiveReactance(x_line));
    }
    // total susceptance -1/(x + dx) at the two reactance extremes
    let at_min = -1.0 / (x_line * (1.0 + TCSC_DX_MIN));
    let at_max = -1.0 / (x_line * (1.0 + TCSC_DX_MAX));
    let (a, b) = match mode {
        TcscMode::Variation => (at_min + 1.0 / x_line, at_max + 1.0 / x_line),
        TcscMode::Literal => (at_min, at_max),
    };
    Ok((a.min(b), a.max(b)))
}

/// TCSC: `dB in [b_lo, b_hi]` when on, `dB = 0` when off.
/// `M = max(|b_lo|, |b_hi|)`.
pub fn build_tcsc_block(b_lo: f64, b_hi: f64, device: usize, t: usize, v: &TcscVars) -> ConstraintBlock {
    let m = b_lo.abs().max(b_hi.abs());
    let lab = |f| Label::new(f, device, t);
    let mut b = ConstraintBlock::default();
    let why = "largest susceptance magnitude";
    b.big_m_row(vec![(v.db, 1.0), (v.s, -m)], Sense::Ge, b_lo - m, lab("tcsc_range_lo"), m, why);
    b.big_m_row(vec![(v.db, 1.0), (v.s, m)], Sense::Le, b_hi + m, lab("tcsc_range_hi"), m, why);
    b.big_m_row(vec![(v.db, 1.0), (v.s, m)], Sense::Ge, 0.0, lab("tcsc_active_lo"), m, why);
    b.big_m_row(vec![(v.db, 1.0), (v.s, -m)], Sense::Le, 0.0, lab("tcsc_active_hi"), m, why);
    b.bounds.push((v.db, b_lo.min(0.0), b_hi.max(0.0)));
    b
}

/// Reactance change equivalent to a susceptance value `db`.
pub fn tcsc_reactance_change(x_line: f64, db: f64, mode: TcscMode) -> f64 {
    let total = match mode {
        TcscMode::Variation => -1.0 / x_line + db,
        TcscMode::Literal => db,
    };
    if db == 0.0 {
        return 0.0;
    }
    -1.0 / total - x_line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn susceptance_bounds_closed_forms() {
        let (lo, hi) = tcsc_susceptance_bounds(0.1, TcscMode::Variation).unwrap();
        assert!((lo + 40.0).abs() < 1e-9 && (hi - 5.0 / 3.0).abs() < 1e-9);
        let (lo, hi) = tcsc_susceptance_bounds(0.1, TcscMode::Literal).unwrap();
        assert!((lo + 50.0).abs() < 1e-9 && (hi + 25.0 / 3.0).abs() < 1e-9);
        let (lo, hi) = tcsc_susceptance_bounds(1.0, TcscMode::Variation).unwrap();
        assert!((lo + 4.0).abs() < 1e-12 && (hi - 1.0 / 6.0).abs() < 1e-12);
        assert!(tcsc_susceptance_bounds(0.0, TcscMode::Variation).is_err());
    }

    #[test]
    fn reactance_change_inverts_susceptance() {
        let x = 0.1;
        let (lo, hi) = tcsc_susceptance_bounds(x, TcscMode::Variation).unwrap();
        assert!((tcsc_reactance_change(x, lo, TcscMode::Variation) - TCSC_DX_MIN * x).abs() < 1e-12);
        assert!((tcsc_reactance_change(x, hi, TcscMode::Variation) - TCSC_DX_MAX * x).abs() < 1e-12);
        assert_eq!(tcsc_reactance_change(x, 0.0, TcscMode::Variation), 0.0);
    }

    #[test]
    fn statcom_rows_measure_violation() {
        let v = StatcomVars { q: 0, s: 1, change: 2 };
        let b = build_statcom_block(0.5, 0, 0, &v);
        assert!((b.max_violation(&[0.6, 1.0, 0.0]) - 0.1).abs() < 1e-12);
        assert_eq!(b.max_violation(&[-0.5, 1.0, 0.0]), 0.0);
        assert!(b.max_violation(&[0.01, 0.0, 0.0]) > 0.0);
    }

    #[test]
    fn shunt_rows_at_candidate_points() {
        let v = ShuntVars { q: 0, alpha: vec![1, 2, 3], s: 4, change: 5 };
        let b = build_shunt_block(&[0.1, 0.2, 0.4], 0, 0, &v).unwrap();
        assert!(b.max_violation(&[0.5, 1.0, 0.0, 1.0, 1.0, 0.0]) < 1e-15);
        assert!(b.max_violation(&[0.4, 1.0, 0.0, 1.0, 1.0, 0.0]) > 0.09);
        // on with nothing selected
        assert!(b.max_violation(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]) >= 1.0);
        assert!(build_shunt_block(&[0.1], 0, 0, &v).is_err());
    }
}
