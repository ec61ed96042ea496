//! SOC-relaxed branch flow, TCSC envelopes, limits, balances and the loss
//! objective.
//!
//! With `W_ij = c + j s` and series admittance `G + jB`, the from-side flow
//! of a line with total charging `b` is
//! `p = G(W_ii - c) - B s`, `q = -B(W_ii - c) - G s - (b/2) W_ii`,
//! and the to-side flow swaps `W_ii` for `W_jj` and the sign of `s`.

use crate::miconic::{AffExpr, Cone, ConeKind, ConstraintBlock, Label, LineVars, Sense, TcscVars, VarId};
use crate::netmodel::{Bus, Line, TcscSign};

/// Box `[lo, hi]` of one factor of a bilinear term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Boxes used by the TCSC envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeBoxes {
    pub w_from: Interval,
    pub w_to: Interval,
    pub w_re: Interval,
    pub w_im: Interval,
    pub db: Interval,
}

/// Four McCormick rows for `h = w * b` over `w_box x b_box`.
pub fn mccormick(
    h: VarId,
    w: VarId,
    b: VarId,
    w_box: Interval,
    b_box: Interval,
    label: Label,
) -> ConstraintBlock {
    let (wl, wu, bl, bu) = (w_box.lo, w_box.hi, b_box.lo, b_box.hi);
    let mut blk = ConstraintBlock::default();
    // h >= wl b + bl w - wl bl
    blk.row(vec![(h, 1.0), (b, -wl), (w, -bl)], Sense::Ge, -wl * bl, label);
    // h >= wu b + bu w - wu bu
    blk.row(vec![(h, 1.0), (b, -wu), (w, -bu)], Sense::Ge, -wu * bu, label);
    // h <= wu b + bl w - wu bl
    blk.row(vec![(h, 1.0), (b, -wu), (w, -bl)], Sense::Le, -wu * bl, label);
    // h <= wl b + bu w - wl bu
    blk.row(vec![(h, 1.0), (b, -wl), (w, -bu)], Sense::Le, -wl * bu, label);
    blk
}

/// Endpoints of the flow expressions of one line: the diagonal entries at the
/// two ends.
#[derive(Debug, Clone, Copy)]
pub struct LineEnds {
    pub w_from: VarId,
    pub w_to: VarId,
}

fn flow_rows(line: &Line, t: usize, v: &LineVars, ends: LineEnds) -> [Vec<(VarId, f64)>; 4] {
    let (g, bs, half) = (line.g(), line.bser(), 0.5 * line.b);
    let (wi, wj) = (ends.w_from, ends.w_to);
    let _ = t;
    [
        // p_ft - G wi + G c + B s = 0
        vec![(v.p_ft, 1.0), (wi, -g), (v.wr, g), (v.wi, bs)],
        // q_ft + B wi - B c + G s + half wi = 0
        vec![(v.q_ft, 1.0), (wi, bs + half), (v.wr, -bs), (v.wi, g)],
        // p_tf - G wj + G c - B s = 0
        vec![(v.p_tf, 1.0), (wj, -g), (v.wr, g), (v.wi, -bs)],
        // q_tf + B wj - B c - G s + half wj = 0
        vec![(v.q_tf, 1.0), (wj, bs + half), (v.wr, -bs), (v.wi, -g)],
    ]
}

const FLOW_FAMILIES: [&str; 4] = ["flow_p_from", "flow_q_from", "flow_p_to", "flow_q_to"];

/// Branch flow equalities of a line without TCSC.
pub fn build_line_flow(line: &Line, t: usize, v: &LineVars, ends: LineEnds) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    for (terms, fam) in flow_rows(line, t, v, ends).into_iter().zip(FLOW_FAMILIES) {
        b.row(terms, Sense::Eq, 0.0, Label::new(fam, line.id, t));
    }
    b
}

/// Branch flow of a TCSC line with the envelope relaxation of the bilinear
/// terms `f = W_ii dB`, `f_to = W_jj dB`, `g = W_ij dB`.
pub fn build_tcsc_flow(
    line: &Line,
    t: usize,
    v: &LineVars,
    ends: LineEnds,
    tv: &TcscVars,
    boxes: &EnvelopeBoxes,
    sign: TcscSign,
) -> ConstraintBlock {
    let sigma = match sign {
        TcscSign::Consistent => -1.0,
        TcscSign::Flipped => 1.0,
    };
    let lab = |f| Label::new(f, line.id, t);
    let mut b = ConstraintBlock::default();
    b.extend(mccormick(tv.f_from, ends.w_from, tv.db, boxes.w_from, boxes.db, lab("envelope_f_from")));
    b.extend(mccormick(tv.f_to, ends.w_to, tv.db, boxes.w_to, boxes.db, lab("envelope_f_to")));
    b.extend(mccormick(tv.g_re, v.wr, tv.db, boxes.w_re, boxes.db, lab("envelope_g_re")));
    b.extend(mccormick(tv.g_im, v.wi, tv.db, boxes.w_im, boxes.db, lab("envelope_g_im")));

    // when off (dB = 0) every product vanishes
    let why = "largest product magnitude over the envelope box";
    for (h, wb, fam) in [
        (tv.f_from, boxes.w_from, "envelope_off_f_from"),
        (tv.f_to, boxes.w_to, "envelope_off_f_to"),
        (tv.g_re, boxes.w_re, "envelope_off_g_re"),
        (tv.g_im, boxes.w_im, "envelope_off_g_im"),
    ] {
        let m = wb.max_abs() * boxes.db.max_abs();
        b.big_m_row(vec![(h, 1.0), (tv.s, -m)], Sense::Le, 0.0, lab(fam), m, why);
        b.big_m_row(vec![(h, 1.0), (tv.s, m)], Sense::Ge, 0.0, lab(fam), m, why);
        b.bounds.push((h, -m, m));
    }

    let extra: [Vec<(VarId, f64)>; 4] = [
        vec![(tv.g_im, sigma)],
        vec![(tv.f_from, sigma), (tv.g_re, -sigma)],
        vec![(tv.g_im, -sigma)],
        vec![(tv.f_to, sigma), (tv.g_re, -sigma)],
    ];
    for ((mut terms, add), fam) in flow_rows(line, t, v, ends).into_iter().zip(extra).zip(FLOW_FAMILIES) {
        // flow = base + add  ->  flow - base - add = 0
        terms.extend(add.into_iter().map(|(j, a)| (j, -a)));
        b.row(terms, Sense::Eq, 0.0, lab(fam));
    }
    b
}

/// `|W_ij|^2 <= W_ii W_jj` as a rotated cone.
pub fn build_soc_cone(line: usize, t: usize, v: &LineVars, ends: LineEnds) -> Cone {
    let r2 = std::f64::consts::SQRT_2;
    Cone {
        kind: ConeKind::Rotated,
        members: vec![
            AffExpr::var(ends.w_from, 1.0),
            AffExpr::var(ends.w_to, 1.0),
            AffExpr::var(v.wr, r2),
            AffExpr::var(v.wi, r2),
        ],
        label: Label::new("soc", line, t),
    }
}

/// Voltage window `v_min^2 <= W_ii <= v_max^2`, or `W_ii = U` at an OLTC bus
/// where `u_bounds` are the bounds of the regulated voltage.
pub fn build_voltage_and_oltc_links(
    bus: &Bus,
    t: usize,
    w: VarId,
    oltc: Option<(VarId, f64, f64)>,
) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    match oltc {
        None => b.bounds.push((w, bus.v_min * bus.v_min, bus.v_max * bus.v_max)),
        Some((u_reg, lo, hi)) => {
            b.row(vec![(w, 1.0), (u_reg, -1.0)], Sense::Eq, 0.0, Label::new("oltc_link", bus.id, t));
            b.bounds.push((w, lo, hi));
        }
    }
    b
}

/// `||(p, q)|| <= S_max` for both orientations; nothing for unrated lines.
pub fn build_thermal_limit(line: &Line, t: usize, v: &LineVars) -> Vec<Cone> {
    if !line.s_max.is_finite() {
        return Vec::new();
    }
    [(v.p_ft, v.q_ft, "thermal_from"), (v.p_tf, v.q_tf, "thermal_to")]
        .into_iter()
        .map(|(p, q, fam)| Cone {
            kind: ConeKind::Quadratic,
            members: vec![
                AffExpr::constant(line.s_max),
                AffExpr::var(p, 1.0),
                AffExpr::var(q, 1.0),
            ],
            label: Label::new(fam, line.id, t),
        })
        .collect()
}

/// Terms of the bus balance contributed by one incident line end.
#[derive(Debug, Clone, Copy)]
pub struct Outflow {
    pub p: VarId,
    pub q: VarId,
}

/// Nodal balance with injections positive:
/// `p_gen - gs W - sum(p_out) = p_dem` and
/// `q_gen + sum(q_dev) + bs W - sum(q_out) = q_dem`.
#[allow(clippy::too_many_arguments)]
pub fn build_balance(
    bus: &Bus,
    t: usize,
    w: VarId,
    p_gen: VarId,
    q_gen: VarId,
    outflows: &[Outflow],
    device_q: &[VarId],
    demand: (f64, f64),
) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    let mut p = vec![(p_gen, 1.0)];
    if bus.gs != 0.0 {
        p.push((w, -bus.gs));
    }
    p.extend(outflows.iter().map(|o| (o.p, -1.0)));
    b.row(p, Sense::Eq, demand.0, Label::new("balance_p", bus.id, t));

    let mut q = vec![(q_gen, 1.0)];
    q.extend(device_q.iter().map(|&d| (d, 1.0)));
    if bus.bs != 0.0 {
        q.push((w, bus.bs));
    }
    q.extend(outflows.iter().map(|o| (o.q, -1.0)));
    b.row(q, Sense::Eq, demand.1, Label::new("balance_q", bus.id, t));
    b
}

/// Generator output limits; zero at buses without a generator.
pub fn build_injection_limits(bus: &Bus, p_gen: VarId, q_gen: VarId) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    if bus.gen_flag {
        b.bounds.push((p_gen, bus.p_min, bus.p_max));
        b.bounds.push((q_gen, bus.q_min, bus.q_max));
    } else {
        b.bounds.push((p_gen, 0.0, 0.0));
        b.bounds.push((q_gen, 0.0, 0.0));
    }
    b
}

/// Total loss `sum over t and lines of p_ft + p_tf`.
pub fn build_objective<'a>(lines: impl IntoIterator<Item = &'a LineVars>) -> AffExpr {
    let mut e = AffExpr::default();
    for v in lines {
        e.terms.push((v.p_ft, 1.0));
        e.terms.push((v.p_tf, 1.0));
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv() -> LineVars {
        LineVars { wr: 2, wi: 3, p_ft: 4, q_ft: 5, p_tf: 6, q_tf: 7 }
    }

    fn eval(b: &ConstraintBlock, x: &[f64]) -> Vec<f64> {
        b.rows.iter().map(|r| r.activity(x) - r.rhs).collect()
    }

    #[test]
    fn flat_voltage_carries_no_flow() {
        let line = Line::new(0, 0, 1, 0.0, 1.0, 0.0, 1.0);
        let b = build_line_flow(&line, 0, &lv(), LineEnds { w_from: 0, w_to: 1 });
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(eval(&b, &x).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn lossless_line_flow_expansion() {
        // (W_ii - W_ij) conj(-j) = (0.02 - 0.05j) j = 0.05 + 0.02j
        let line = Line::new(0, 0, 1, 0.0, 1.0, 0.0, 1.0);
        let b = build_line_flow(&line, 0, &lv(), LineEnds { w_from: 0, w_to: 1 });
        let mut x = [1.0, 1.0, 0.98, 0.05, 0.05, 0.02, 0.0, 0.0];
        // to side: (W_jj - conj W_ij) j = (0.02 + 0.05j) j = -0.05 + 0.02j
        x[6] = -0.05;
        x[7] = 0.02;
        for r in eval(&b, &x) {
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn mccormick_pins_corners() {
        let b = mccormick(2, 0, 1, Interval::new(0.81, 1.21), Interval::new(-50.0, 1.0), Label::new("e", 0, 0));
        assert!(b.max_violation(&[0.81, -50.0, -40.5]) < 1e-12);
        assert!(b.max_violation(&[0.81, -50.0, -40.4]) > 0.05);
        let x = [1.0, -10.0, -10.0];
        assert!(b.max_violation(&x) < 1e-12);
    }

    #[test]
    fn thermal_cone_violation() {
        let line = Line::new(0, 0, 1, 0.0, 1.0, 0.0, 1.0);
        let cones = build_thermal_limit(&line, 0, &lv());
        let mut x = [0.0; 8];
        x[4] = 0.6;
        x[5] = 0.8;
        assert!(cones[0].violation(&x) < 1e-15);
        x[4] = 0.9;
        x[5] = 0.5;
        assert!((cones[0].violation(&x) - (0.9f64.hypot(0.5) - 1.0)).abs() < 1e-12);
        let unrated = Line::new(0, 0, 1, 0.0, 1.0, 0.0, f64::INFINITY);
        assert!(build_thermal_limit(&unrated, 0, &lv()).is_empty());
    }

    #[test]
    fn soc_cone_boundary_cases() {
        let c = build_soc_cone(0, 0, &lv(), LineEnds { w_from: 0, w_to: 1 });
        let mut x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(c.violation(&x) < 1e-15);
        x[2] = 1.01;
        assert!(c.violation(&x) > 0.0);
        let y = [1.21, 0.81, 0.99, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(c.violation(&y) < 1e-12);
    }

    #[test]
    fn statcom_compensates_local_demand() {
        let bus = Bus {
            id: 0,
            ext_id: 1,
            kind: crate::netmodel::BusKind::Pq,
            v_min: 0.9,
            v_max: 1.1,
            p_min: 0.0,
            p_max: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            base_demand_p: 0.0,
            base_demand_q: 0.3,
            gs: 0.0,
            bs: 0.0,
            gen_flag: false,
        };
        // w, p_gen, q_gen, p_out, q_out, q_statcom
        let b = build_balance(&bus, 0, 0, 1, 2, &[Outflow { p: 3, q: 4 }], &[5], (0.0, 0.3));
        assert!(b.max_violation(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.3]) < 1e-15);
    }
}
