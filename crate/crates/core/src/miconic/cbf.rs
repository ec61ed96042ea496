//! Conic Benchmark Format (version 3) export and import.
//!
//! Variable bounds have no native CBF section, so they are written as
//! single-variable rows after the model rows. A comment line
//! `# factsched rows=R bounds=B` records the split; when present the
//! importer turns those rows back into bounds, otherwise every row is kept
//! as a row and variables are free.

use std::fmt::Write as _;

use super::{AffExpr, Cone, ConeKind, ConicProgram, Label, ModelError, Row, Sense, VarKind, VarMeta};

const MARKER: &str = "# factsched";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

enum Dom {
    Zero,
    Nonneg,
    Nonpos,
    Quad,
    Rot,
}

impl Dom {
    fn tag(&self) -> &'static str {
        match self {
            Dom::Zero => "L=",
            Dom::Nonneg => "L+",
            Dom::Nonpos => "L-",
            Dom::Quad => "Q",
            Dom::Rot => "QR",
        }
    }
}

/// Writes `program` as CBF text. Output is a pure function of the program.
pub fn export_cbf(program: &ConicProgram) -> String {
    // each constraint "row" is an affine expression a.x + b placed in a domain
    let mut blocks: Vec<(Dom, Vec<AffExpr>)> = Vec::new();
    let mut push = |dom: Dom, e: Vec<AffExpr>| match (blocks.last_mut(), &dom) {
        (Some((d, v)), Dom::Zero | Dom::Nonneg | Dom::Nonpos) if d.tag() == dom.tag() => v.extend(e),
        _ => blocks.push((dom, e)),
    };
    for r in &program.rows {
        let dom = match r.sense {
            Sense::Eq => Dom::Zero,
            Sense::Ge => Dom::Nonneg,
            Sense::Le => Dom::Nonpos,
        };
        push(
            dom,
            vec![AffExpr {
                terms: r.terms.clone(),
                constant: -r.rhs,
            }],
        );
    }
    let mut nbounds = 0;
    for (j, v) in program.vars.iter().enumerate() {
        if v.lower == v.upper {
            push(Dom::Zero, vec![AffExpr { terms: vec![(j, 1.0)], constant: -v.lower }]);
            nbounds += 1;
            continue;
        }
        if v.lower.is_finite() {
            push(Dom::Nonneg, vec![AffExpr { terms: vec![(j, 1.0)], constant: -v.lower }]);
            nbounds += 1;
        }
        if v.upper.is_finite() {
            push(Dom::Nonpos, vec![AffExpr { terms: vec![(j, 1.0)], constant: -v.upper }]);
            nbounds += 1;
        }
    }
    for c in &program.cones {
        let dom = match c.kind {
            ConeKind::Quadratic => Dom::Quad,
            ConeKind::Rotated => Dom::Rot,
        };
        push(dom, c.members.clone());
    }

    let nrows: usize = blocks.iter().map(|b| b.1.len()).sum();
    let mut s = String::new();
    let _ = writeln!(s, "VER\n3\n");
    let _ = writeln!(s, "OBJSENSE\nMIN\n");
    let _ = writeln!(s, "VAR\n{} 1\nF {}\n", program.vars.len(), program.vars.len());
    let ints: Vec<usize> = (0..program.vars.len())
        .filter(|&j| program.vars[j].kind != VarKind::Continuous)
        .collect();
    if !ints.is_empty() {
        let _ = writeln!(s, "INT\n{}", ints.len());
        for j in ints {
            let _ = writeln!(s, "{j}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "{MARKER} rows={} bounds={nbounds}", program.rows.len());
    let _ = writeln!(s, "CON\n{} {}", nrows, blocks.len());
    for (d, e) in &blocks {
        let _ = writeln!(s, "{} {}", d.tag(), e.len());
    }
    s.push('\n');

    let obj: Vec<_> = program.objective.terms.iter().filter(|t| t.1 != 0.0).collect();
    if !obj.is_empty() {
        let _ = writeln!(s, "OBJACOORD\n{}", obj.len());
        for (j, a) in obj {
            let _ = writeln!(s, "{j} {}", num(*a));
        }
        s.push('\n');
    }
    if program.objective.constant != 0.0 {
        let _ = writeln!(s, "OBJBCOORD\n{}\n", num(program.objective.constant));
    }

    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    let mut i = 0usize;
    for (_, exprs) in &blocks {
        for e in exprs {
            for &(j, a) in &e.terms {
                acoord.push((i, j, a));
            }
            if e.constant != 0.0 {
                bcoord.push((i, e.constant));
            }
            i += 1;
        }
    }
    if !acoord.is_empty() {
        let _ = writeln!(s, "ACOORD\n{}", acoord.len());
        for (i, j, a) in acoord {
            let _ = writeln!(s, "{i} {j} {}", num(a));
        }
        s.push('\n');
    }
    if !bcoord.is_empty() {
        let _ = writeln!(s, "BCOORD\n{}", bcoord.len());
        for (i, b) in bcoord {
            let _ = writeln!(s, "{i} {}", num(b));
        }
        s.push('\n');
    }
    s
}

struct Lines<'a> {
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    marker: Option<(usize, usize)>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (k, l) in self.it.by_ref() {
            let l = l.trim();
            self.last = k + 1;
            if let Some(rest) = l.strip_prefix(MARKER) {
                let get = |key: &str| {
                    rest.split_whitespace()
                        .find_map(|w| w.strip_prefix(key))
                        .and_then(|v| v.parse().ok())
                };
                if let (Some(r), Some(b)) = (get("rows="), get("bounds=")) {
                    self.marker = Some((r, b));
                }
                continue;
            }
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            return Some((k + 1, l));
        }
        None
    }

    fn need(&mut self) -> Result<(usize, &'a str), ModelError> {
        let last = self.last;
        self.next().ok_or(ModelError::Cbf {
            line: last,
            msg: "unexpected end of file".into(),
        })
    }

    fn fields<const N: usize>(&mut self) -> Result<(usize, [&'a str; N]), ModelError> {
        let (ln, l) = self.need()?;
        let v: Vec<&str> = l.split_whitespace().collect();
        let arr: [&str; N] = v.try_into().map_err(|_| ModelError::Cbf {
            line: ln,
            msg: format!("expected {N} fields"),
        })?;
        Ok((ln, arr))
    }
}

fn parse<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T, ModelError> {
    s.parse().map_err(|_| ModelError::Cbf {
        line: ln,
        msg: format!("cannot parse `{s}`"),
    })
}

/// Reads CBF text back into a program. Variables are named `x{j}`.
pub fn import_cbf(text: &str) -> Result<ConicProgram, ModelError> {
    let mut lines = Lines {
        it: text.lines().enumerate().peekable(),
        marker: None,
        last: 0,
    };
    let mut nvars = 0usize;
    let mut var_doms: Vec<(String, usize)> = Vec::new();
    let mut ints = Vec::new();
    let mut con_doms: Vec<(String, usize)> = Vec::new();
    let mut obj_terms = Vec::new();
    let mut obj_const = 0.0;
    let mut acoord: Vec<(usize, usize, f64)> = Vec::new();
    let mut bcoord: Vec<(usize, f64)> = Vec::new();
    let mut minimize = true;

    while let Some((ln, kw)) = lines.next() {
        match kw {
            "VER" => {
                let (ln, [v]) = lines.fields::<1>()?;
                let v: u32 = parse(ln, v)?;
                if v > 3 {
                    return Err(ModelError::Cbf { line: ln, msg: format!("unsupported version {v}") });
                }
            }
            "OBJSENSE" => {
                let (_, [s]) = lines.fields::<1>()?;
                minimize = s == "MIN";
            }
            "VAR" | "CON" => {
                let (ln, [n, k]) = lines.fields::<2>()?;
                let (n, k): (usize, usize) = (parse(ln, n)?, parse(ln, k)?);
                let mut doms = Vec::with_capacity(k);
                for _ in 0..k {
                    let (ln, [d, c]) = lines.fields::<2>()?;
                    doms.push((d.to_string(), parse(ln, c)?));
                }
                if doms.iter().map(|d| d.1).sum::<usize>() != n {
                    return Err(ModelError::Cbf { line: ln, msg: "domain sizes do not add up".into() });
                }
                if kw == "VAR" {
                    nvars = n;
                    var_doms = doms;
                } else {
                    con_doms = doms;
                }
            }
            "INT" => {
                let (ln, [n]) = lines.fields::<1>()?;
                for _ in 0..parse::<usize>(ln, n)? {
                    let (ln, [j]) = lines.fields::<1>()?;
                    ints.push(parse::<usize>(ln, j)?);
                }
            }
            "OBJACOORD" => {
                let (ln, [n]) = lines.fields::<1>()?;
                for _ in 0..parse::<usize>(ln, n)? {
                    let (ln, [j, a]) = lines.fields::<2>()?;
                    obj_terms.push((parse::<usize>(ln, j)?, parse::<f64>(ln, a)?));
                }
            }
            "OBJBCOORD" => {
                let (ln, [b]) = lines.fields::<1>()?;
                obj_const = parse(ln, b)?;
            }
            "ACOORD" => {
                let (ln, [n]) = lines.fields::<1>()?;
                for _ in 0..parse::<usize>(ln, n)? {
                    let (ln, [i, j, a]) = lines.fields::<3>()?;
                    acoord.push((parse(ln, i)?, parse(ln, j)?, parse(ln, a)?));
                }
            }
            "BCOORD" => {
                let (ln, [n]) = lines.fields::<1>()?;
                for _ in 0..parse::<usize>(ln, n)? {
                    let (ln, [i, b]) = lines.fields::<2>()?;
                    bcoord.push((parse(ln, i)?, parse(ln, b)?));
                }
            }
            other => {
                return Err(ModelError::Cbf {
                    line: ln,
                    msg: format!("unsupported section `{other}`"),
                })
            }
        }
    }

    let meta = VarMeta {
        symbol: "x",
        element: 0,
        period: 0,
        index: 0,
    };
    let mut p = ConicProgram::default();
    let mut j0 = 0;
    for (d, n) in &var_doms {
        let (lo, hi) = match d.as_str() {
            "F" => (f64::NEG_INFINITY, f64::INFINITY),
            "L+" => (0.0, f64::INFINITY),
            "L-" => (f64::NEG_INFINITY, 0.0),
            "L=" => (0.0, 0.0),
            other => {
                return Err(ModelError::Cbf {
                    line: 0,
                    msg: format!("unsupported variable domain `{other}`"),
                })
            }
        };
        for j in j0..j0 + n {
            p.add_var(format!("x{j}"), lo, hi, VarKind::Continuous, meta);
        }
        j0 += n;
    }
    debug_assert_eq!(p.vars.len(), nvars);

    let nrows: usize = con_doms.iter().map(|d| d.1).sum();
    let mut exprs = vec![AffExpr::default(); nrows];
    for (i, j, a) in acoord {
        if i >= nrows || j >= nvars {
            return Err(ModelError::Cbf { line: 0, msg: format!("coordinate ({i}, {j}) out of range") });
        }
        exprs[i].terms.push((j, a));
    }
    for (i, b) in bcoord {
        if i >= nrows {
            return Err(ModelError::Cbf { line: 0, msg: format!("row {i} out of range") });
        }
        exprs[i].constant = b;
    }
    let (model_rows, bound_rows) = lines.marker.unwrap_or((usize::MAX, 0));
    let label = Label::new("cbf", 0, 0);
    let mut i = 0;
    for (d, n) in &con_doms {
        match d.as_str() {
            "L=" | "L+" | "L-" => {
                for e in &exprs[i..i + n] {
                    let sense = match d.as_str() {
                        "L=" => Sense::Eq,
                        "L+" => Sense::Ge,
                        _ => Sense::Le,
                    };
                    let rhs = -e.constant;
                    let bound_row = i >= model_rows && i < model_rows + bound_rows;
                    match (bound_row, e.terms.as_slice()) {
                        (true, &[(j, a)]) if a == 1.0 => {
                            let v = &mut p.vars[j];
                            match sense {
                                Sense::Eq => {
                                    v.lower = rhs;
                                    v.upper = rhs;
                                }
                                Sense::Ge => v.lower = rhs,
                                Sense::Le => v.upper = rhs,
                            }
                        }
                        _ => p.rows.push(Row::new(e.terms.clone(), sense, rhs, label)),
                    }
                    i += 1;
                }
            }
            "Q" | "QR" => {
                p.cones.push(Cone {
                    kind: if d == "Q" { ConeKind::Quadratic } else { ConeKind::Rotated },
                    members: exprs[i..i + n].to_vec(),
                    label,
                });
                i += n;
            }
            other => {
                return Err(ModelError::Cbf {
                    line: 0,
                    msg: format!("unsupported constraint domain `{other}`"),
                })
            }
        }
    }
    for j in ints {
        let v = p.vars.get_mut(j).ok_or(ModelError::Cbf {
            line: 0,
            msg: format!("integer index {j} out of range"),
        })?;
        v.kind = if v.lower >= 0.0 && v.upper <= 1.0 {
            VarKind::Binary
        } else {
            VarKind::Integer
        };
    }
    let sign = if minimize { 1.0 } else { -1.0 };
    p.objective = AffExpr {
        terms: obj_terms.into_iter().map(|(j, a)| (j, sign * a)).collect(),
        constant: sign * obj_const,
    };
    p.check()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> VarMeta {
        VarMeta {
            symbol: "x",
            element: 0,
            period: 0,
            index: 0,
        }
    }

    #[test]
    fn one_variable_lp() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x".into(), f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, meta());
        p.rows.push(Row::new(vec![(x, 1.0)], Sense::Ge, 1.0, Label::new("r", 0, 0)));
        p.objective = AffExpr::var(x, 1.0);
        let text = export_cbf(&p);
        assert!(text.contains("OBJACOORD\n1\n0 1.0000000000000000e0"));
        assert!(text.contains("L+ 1"));
        assert!(!text.contains("INT"));
        let back = import_cbf(&text).unwrap();
        assert_eq!(back.rows.len(), 1);
        assert_eq!(back.rows[0].rhs, 1.0);
        assert_eq!(back.rows[0].sense, Sense::Ge);
    }

    #[test]
    fn rotated_cone_section() {
        let mut p = ConicProgram::default();
        let v: Vec<_> = (0..4)
            .map(|k| p.add_var(format!("v{k}"), -5.0, 5.0, VarKind::Continuous, meta()))
            .collect();
        p.cones.push(Cone {
            kind: ConeKind::Rotated,
            members: v.iter().map(|&j| AffExpr::var(j, 1.0)).collect(),
            label: Label::new("c", 0, 0),
        });
        let b = p.add_var("b".into(), 0.0, 1.0, VarKind::Binary, meta());
        p.objective = AffExpr::var(b, 0.1 + 0.2);
        let text = export_cbf(&p);
        assert!(text.contains("QR 4"));
        let back = import_cbf(&text).unwrap();
        assert_eq!(back.cones[0].members.len(), 4);
        assert_eq!(back.vars[b].kind, VarKind::Binary);
        assert_eq!(back.objective.terms[0].1, 0.1 + 0.2);
        assert_eq!(back.vars[0].lower, -5.0);
    }

    #[test]
    fn reports_bad_lines() {
        let e = import_cbf("VER\n3\nVAR\n2 1\nF x\n").unwrap_err();
        assert!(matches!(e, ModelError::Cbf { line: 5, .. }), "{e}");
    }
}
