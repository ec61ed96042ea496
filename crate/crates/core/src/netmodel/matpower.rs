//! Reader and writer for the subset of the MATPOWER case format we use:
//! `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch`. Other fields are
//! skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Bus, BusKind, Gen, Line, NetError, Network, Units};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Eq,
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> NetError {
    NetError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, NetError> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            match c {
                '%' | '#' => break,
                ' ' | '\t' | '\r' => i += 1,
                '[' | '{' => {
                    out.push(Token { tok: Tok::LBracket, line, col });
                    i += 1;
                }
                ']' | '}' => {
                    out.push(Token { tok: Tok::RBracket, line, col });
                    i += 1;
                }
                ';' => {
                    out.push(Token { tok: Tok::Semi, line, col });
                    i += 1;
                }
                ',' => {
                    out.push(Token { tok: Tok::Comma, line, col });
                    i += 1;
                }
                '=' => {
                    out.push(Token { tok: Tok::Eq, line, col });
                    i += 1;
                }
                '\'' | '"' => {
                    let q = c;
                    i += 1;
                    while i < chars.len() && chars[i] != q {
                        i += 1;
                    }
                    if i == chars.len() {
                        return Err(syntax(line, col, "unterminated string"));
                    }
                    i += 1;
                    out.push(Token { tok: Tok::Str, line, col });
                }
                '.' if i + 2 < chars.len() && chars[i + 1] == '.' && chars[i + 2] == '.' => {
                    // continuation: the row goes on on the next line
                    break;
                }
                c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                    let start = i;
                    i += 1;
                    while i < chars.len() {
                        let d = chars[i];
                        let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    let s: String = chars[start..i].iter().collect();
                    let v = match s.as_str() {
                        "-" | "+" if i < chars.len() && chars[i].is_ascii_alphabetic() => {
                            // signed Inf
                            let st = i;
                            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                                i += 1;
                            }
                            let w: String = chars[st..i].iter().collect();
                            match w.as_str() {
                                "Inf" | "inf" => {
                                    if s == "-" {
                                        f64::NEG_INFINITY
                                    } else {
                                        f64::INFINITY
                                    }
                                }
                                _ => return Err(syntax(line, col, format!("bad number `{s}{w}`"))),
                            }
                        }
                        _ => s
                            .parse::<f64>()
                            .map_err(|_| syntax(line, col, format!("bad number `{s}`")))?,
                    };
                    out.push(Token { tok: Tok::Num(v), line, col });
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len()
                        && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                    {
                        i += 1;
                    }
                    let s: String = chars[start..i].iter().collect();
                    let tok = match s.as_str() {
                        "Inf" | "inf" => Tok::Num(f64::INFINITY),
                        "NaN" | "nan" => Tok::Num(f64::NAN),
                        _ => Tok::Ident(s),
                    };
                    out.push(Token { tok, line, col });
                }
                other => return Err(syntax(line, col, format!("unexpected character `{other}`"))),
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            line,
            col: chars.len() + 1,
        });
    }
    Ok(out)
}

#[derive(Debug)]
enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn skip_line(&mut self) {
        while let Some(t) = self.next() {
            if t.tok == Tok::Newline {
                break;
            }
        }
    }

    fn eof_error(&self) -> NetError {
        let (line, col) = self
            .toks
            .last()
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        syntax(line, col, "unexpected end of input")
    }

    fn statements(&mut self) -> Result<BTreeMap<String, Value>, NetError> {
        let mut out = BTreeMap::new();
        while let Some(t) = self.peek().cloned() {
            match &t.tok {
                Tok::Newline | Tok::Semi => {
                    self.pos += 1;
                }
                Tok::Ident(name) if name == "function" => self.skip_line(),
                Tok::Ident(name) => {
                    let name = name.clone();
                    self.pos += 1;
                    let eq = self.next().ok_or_else(|| self.eof_error())?;
                    if eq.tok != Tok::Eq {
                        return Err(syntax(eq.line, eq.col, format!("expected `=` after `{name}`")));
                    }
                    let value = self.value()?;
                    if let Some(field) = name.strip_prefix("mpc.") {
                        out.insert(field.to_string(), value);
                    }
                }
                _ => return Err(syntax(t.line, t.col, "expected an assignment")),
            }
        }
        Ok(out)
    }

    fn value(&mut self) -> Result<Value, NetError> {
        let t = self.next().ok_or_else(|| self.eof_error())?;
        match t.tok {
            Tok::Num(v) => Ok(Value::Scalar(v)),
            Tok::Str => Ok(Value::Other),
            Tok::LBracket => self.matrix().map(Value::Matrix),
            _ => Err(syntax(t.line, t.col, "expected a number, string or matrix")),
        }
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>, NetError> {
        let mut rows = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        let mut width: Option<(usize, usize)> = None;
        let mut row_line = 0;
        loop {
            let t = self.next().ok_or_else(|| self.eof_error())?;
            match t.tok {
                Tok::Num(v) => {
                    if row.is_empty() {
                        row_line = t.line;
                    }
                    row.push(v);
                }
                Tok::Comma => {}
                Tok::Semi | Tok::Newline | Tok::RBracket => {
                    if !row.is_empty() {
                        match width {
                            None => width = Some((row.len(), row_line)),
                            Some((w, _)) if w != row.len() => {
                                return Err(syntax(
                                    row_line,
                                    1,
                                    format!("row has {} columns, expected {}", row.len(), w),
                                ))
                            }
                            _ => {}
                        }
                        rows.push(std::mem::take(&mut row));
                    }
                    if t.tok == Tok::RBracket {
                        return Ok(rows);
                    }
                }
                _ => return Err(syntax(t.line, t.col, "unexpected token inside matrix")),
            }
        }
    }
}

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

fn table<'a>(
    fields: &'a BTreeMap<String, Value>,
    name: &'static str,
    cols: usize,
) -> Result<&'a [Vec<f64>], NetError> {
    match fields.get(name) {
        Some(Value::Matrix(rows)) => {
            if let Some(r) = rows.first() {
                if r.len() < cols {
                    return Err(NetError::BadRow {
                        table: name,
                        row: 1,
                        msg: format!("expected at least {cols} columns, found {}", r.len()),
                    });
                }
            }
            Ok(rows)
        }
        _ => Err(NetError::MissingTable(name)),
    }
}

fn as_id(v: f64, table: &'static str, row: usize) -> Result<u64, NetError> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(NetError::BadRow {
            table,
            row,
            msg: format!("invalid bus number {v}"),
        });
    }
    Ok(v as u64)
}

/// Parses MATPOWER case text into a per-unit [`Network`].
pub fn parse_matpower_case(text: &str) -> Result<Network, NetError> {
    let toks = tokenize(text)?;
    let name = toks
        .windows(4)
        .find_map(|w| match (&w[0].tok, &w[3].tok) {
            (Tok::Ident(f), Tok::Ident(n)) if f == "function" => Some(n.clone()),
            _ => None,
        })
        .unwrap_or_else(|| "case".to_string());
    let mut p = Parser { toks, pos: 0 };
    let fields = p.statements()?;

    let base_mva = match fields.get("baseMVA") {
        Some(Value::Scalar(v)) if *v > 0.0 => *v,
        Some(_) => {
            return Err(NetError::BadRow {
                table: "baseMVA",
                row: 1,
                msg: "must be a positive scalar".into(),
            })
        }
        None => return Err(NetError::MissingTable("baseMVA")),
    };
    let bus_rows = table(&fields, "bus", BUS_COLS)?;
    let gen_rows = table(&fields, "gen", GEN_COLS)?;
    let branch_rows = table(&fields, "branch", BRANCH_COLS)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for (k, r) in bus_rows.iter().enumerate() {
        let ext = as_id(r[0], "bus", k + 1)?;
        if index.insert(ext, buses.len()).is_some() {
            return Err(NetError::DuplicateBus(ext));
        }
        let kind = match r[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            other => {
                return Err(NetError::BadRow {
                    table: "bus",
                    row: k + 1,
                    msg: format!("unsupported bus type {other}"),
                })
            }
        };
        let (v_max, v_min) = (r[11], r[12]);
        if !(v_min > 0.0 && v_min <= v_max) {
            return Err(NetError::VoltageBounds(ext, v_min, v_max));
        }
        buses.push(Bus {
            id: buses.len(),
            ext_id: ext,
            kind,
            v_min,
            v_max,
            p_min: 0.0,
            p_max: 0.0,
            q_min: 0.0,
            q_max: 0.0,
            base_demand_p: r[2],
            base_demand_q: r[3],
            gs: r[4],
            bs: r[5],
            gen_flag: false,
        });
    }

    let mut gens = Vec::with_capacity(gen_rows.len());
    for (k, r) in gen_rows.iter().enumerate() {
        let ext = as_id(r[0], "gen", k + 1)?;
        let bus = *index.get(&ext).ok_or_else(|| NetError::UnknownBus {
            bus: ext,
            by: format!("gen row {}", k + 1),
        })?;
        gens.push(Gen {
            bus,
            p_gen: r[1],
            q_gen: r[2],
            q_max: r[3],
            q_min: r[4],
            v_set: r[5],
            p_max: r[8],
            p_min: r[9],
            in_service: r[7] > 0.0,
        });
    }

    let mut lines = Vec::with_capacity(branch_rows.len());
    for (k, r) in branch_rows.iter().enumerate() {
        let (fe, te) = (as_id(r[0], "branch", k + 1)?, as_id(r[1], "branch", k + 1)?);
        let lookup = |e: u64| {
            index.get(&e).copied().ok_or_else(|| NetError::UnknownBus {
                bus: e,
                by: format!("branch row {}", k + 1),
            })
        };
        let (from, to) = (lookup(fe)?, lookup(te)?);
        if r[10] <= 0.0 {
            log::warn!("branch {fe}-{te} is out of service and is dropped");
            continue;
        }
        if from == to {
            return Err(NetError::BadRow {
                table: "branch",
                row: k + 1,
                msg: "branch connects a bus to itself".into(),
            });
        }
        let (ratio, shift) = (r[8], r[9]);
        if !(ratio == 0.0 || ratio == 1.0) || shift != 0.0 {
            return Err(NetError::OffNominalTap {
                from: fe,
                to: te,
                ratio,
                shift,
            });
        }
        let x = r[3];
        if !(x > 0.0) {
            return Err(NetError::NonPositiveReactance { from: fe, to: te, x });
        }
        let s_max = if r[5] > 0.0 { r[5] } else { f64::INFINITY };
        lines.push(Line::new(lines.len(), from, to, r[2], x, r[4], s_max));
    }

    let mut net = Network {
        name,
        base_mva,
        units: Units::Physical,
        buses,
        gens,
        lines,
    };
    net.aggregate_gens();
    net.check_connected()?;
    Ok(net.to_per_unit())
}

/// Writes a network back as MATPOWER case text (physical units).
pub fn write_matpower_case(net: &Network) -> String {
    let phys = net.to_physical();
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", phys.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", phys.base_mva);
    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &phys.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.ext_id,
            b.kind.code(),
            b.base_demand_p,
            b.base_demand_q,
            b.gs,
            b.bs,
            b.v_max,
            b.v_min
        );
    }
    let _ = writeln!(s, "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &phys.gens {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            phys.buses[g.bus].ext_id,
            g.p_gen,
            g.q_gen,
            g.q_max,
            g.q_min,
            g.v_set,
            phys.base_mva,
            u8::from(g.in_service),
            g.p_max,
            g.p_min
        );
    }
    let _ = writeln!(s, "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status");
    let _ = writeln!(s, "mpc.branch = [");
    for l in &phys.lines {
        let rate = if l.s_max.is_finite() { l.s_max } else { 0.0 };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t1;",
            phys.buses[l.from].ext_id,
            phys.buses[l.to].ext_id,
            l.r,
            l.x,
            l.b,
            rate,
            rate,
            rate
        );
    }
    let _ = writeln!(s, "];");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_BUS: &str = "function mpc = three
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 50 20 0 0 1 1 0 230 1 1.1 0.9;
  3 1 40 10 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 300 -300 1.0 100 1 250 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 250 250 250 0 0 1 -360 360;
  2 3 0.02 0.2 0 250 250 250 0 0 1 -360 360;
  1 3 0.01 0.15 0 0 0 0 0 0 1 -360 360;
];
";

    #[test]
    fn parses_three_bus_case() {
        let n = parse_matpower_case(THREE_BUS).unwrap();
        assert_eq!(n.buses.len(), 3);
        assert_eq!(n.lines.len(), 3);
        assert_eq!(n.name, "three");
        let y = n.lines[0].y;
        assert!((y.re - 0.9901).abs() < 1e-4 && (y.im + 9.9010).abs() < 1e-4);
        assert_eq!(n.buses[1].base_demand_p, 0.5);
        assert!(n.buses[0].gen_flag && !n.buses[1].gen_flag);
        assert_eq!(n.buses[0].p_max, 2.5);
        assert!(n.lines[2].s_max.is_infinite());
    }

    #[test]
    fn unknown_bus_in_branch() {
        let bad = THREE_BUS.replace("2 3 0.02", "2 99 0.02");
        match parse_matpower_case(&bad) {
            Err(NetError::UnknownBus { bus: 99, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_bus_and_bad_reactance() {
        let dup = THREE_BUS.replace("3 1 40 10", "2 1 40 10");
        assert!(matches!(parse_matpower_case(&dup), Err(NetError::DuplicateBus(2))));
        let neg = THREE_BUS.replace("0.02 0.2 0", "0.02 -0.2 0");
        assert!(matches!(
            parse_matpower_case(&neg),
            Err(NetError::NonPositiveReactance { .. })
        ));
    }

    #[test]
    fn rejects_off_nominal_taps() {
        let tap = THREE_BUS.replace("0.02 0.2 0 250 250 250 0 0", "0.02 0.2 0 250 250 250 0.98 0");
        assert!(matches!(parse_matpower_case(&tap), Err(NetError::OffNominalTap { .. })));
        let unity = THREE_BUS.replace("0.02 0.2 0 250 250 250 0 0", "0.02 0.2 0 250 250 250 1 0");
        assert!(parse_matpower_case(&unity).is_ok());
    }

    #[test]
    fn syntax_error_reports_location() {
        let bad = THREE_BUS.replace("2 1 50 20", "2 1 5$0 20");
        match parse_matpower_case(&bad) {
            Err(NetError::Syntax { line, col, .. }) => {
                assert_eq!(line, 6);
                assert_eq!(col, 8);
            }
            other => panic!("{other:?}"),
        }
        let ragged = THREE_BUS.replace("3 1 40 10 0 0 1 1 0 230 1 1.1 0.9;", "3 1 40 10;");
        assert!(matches!(parse_matpower_case(&ragged), Err(NetError::Syntax { line: 7, .. })));
    }

    #[test]
    fn round_trip_is_identical() {
        let n = parse_matpower_case(THREE_BUS).unwrap();
        let again = parse_matpower_case(&write_matpower_case(&n)).unwrap();
        assert_eq!(n, again);
    }

    #[test]
    fn per_unit_is_idempotent() {
        let n = parse_matpower_case(THREE_BUS).unwrap();
        assert_eq!(n.to_per_unit(), n.to_per_unit().to_per_unit());
        assert_eq!(n.to_physical().to_per_unit(), n);
    }
}
