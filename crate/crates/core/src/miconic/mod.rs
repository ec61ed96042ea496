//! Solver-agnostic mixed-integer conic program.
//!
//! Linear rows are `terms . x (<=|>=|=) rhs`. A quadratic cone with members
//! `m` requires `m[0] >= ||m[1..]||`; a rotated cone requires
//! `2 m[0] m[1] >= ||m[2..]||^2` with `m[0], m[1] >= 0` (the CBF convention).

mod assemble;
mod cbf;
mod presolve;

pub use assemble::{assemble, BusVars, DeviceVars, LineVars, ModelLayout, OltcVars, ShuntVars, StatcomVars, TcscVars};
pub use cbf::{export_cbf, import_cbf};
pub use presolve::{propagate_bounds, Propagation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type VarId = usize;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variable handle count mismatch in {what}: expected {expected}, got {got}")]
    HandleMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("non-integral value {value} for binary `{name}`")]
    NonIntegral { name: String, value: f64 },
    #[error("nonpositive reactance {0}")]
    NonPositiveReactance(f64),
    #[error("CBF line {line}: {msg}")]
    Cbf { line: usize, msg: String },
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    /// Branching class; fractional columns of a higher class are branched first.
    pub priority: u8,
}

/// Which model symbol a column instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarMeta {
    pub symbol: &'static str,
    pub element: usize,
    pub period: usize,
    /// Position inside a vector symbol (tap or block index), else 0.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub family: &'static str,
    pub element: usize,
    pub period: usize,
}

impl Label {
    pub fn new(family: &'static str, element: usize, period: usize) -> Self {
        Label {
            family,
            element,
            period,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}, t{}]", self.family, self.element, self.period + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub label: Label,
}

impl Row {
    pub fn new(terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64, label: Label) -> Self {
        Row {
            terms,
            sense,
            rhs,
            label,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let d = self.activity(x) - self.rhs;
        match self.sense {
            Sense::Le => d.max(0.0),
            Sense::Ge => (-d).max(0.0),
            Sense::Eq => d.abs(),
        }
    }

    /// Magnitude used to scale feasibility tolerances.
    pub fn scale(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(j, a)| (a * x[j]).abs())
            .fold(self.rhs.abs(), f64::max)
            .max(1.0)
    }
}

/// Affine expression `terms . x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn var(v: VarId, coef: f64) -> Self {
        AffExpr {
            terms: vec![(v, coef)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        AffExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Quadratic,
    Rotated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub kind: ConeKind,
    pub members: Vec<AffExpr>,
    pub label: Label,
}

impl Cone {
    /// Violation in the natural (unsquared) units of the cone.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let m: Vec<f64> = self.members.iter().map(|e| e.eval(x)).collect();
        match self.kind {
            ConeKind::Quadratic => {
                let r = m[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (r - m[0]).max(0.0)
            }
            ConeKind::Rotated => {
                // same cone written as a quadratic one
                let a = (m[0] + m[1]) / std::f64::consts::SQRT_2;
                let b = (m[0] - m[1]) / std::f64::consts::SQRT_2;
                let r = (b * b + m[2..].iter().map(|v| v * v).sum::<f64>()).sqrt();
                (r - a).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BigM {
    pub row: usize,
    pub value: f64,
    pub derivation: String,
}

/// A bundle of rows and cones emitted by one builder call.
#[derive(Debug, Clone, Default)]
pub struct ConstraintBlock {
    pub rows: Vec<Row>,
    pub cones: Vec<Cone>,
    /// Bound tightenings `(var, lower, upper)`, intersected with existing bounds.
    pub bounds: Vec<(VarId, f64, f64)>,
    /// `(local row index, M, derivation)`.
    pub big_m: Vec<(usize, f64, String)>,
    /// Groups of binaries that must sum to exactly one.
    pub one_hot: Vec<Vec<VarId>>,
}

impl ConstraintBlock {
    pub fn row(&mut self, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64, label: Label) -> usize {
        self.rows.push(Row::new(terms, sense, rhs, label));
        self.rows.len() - 1
    }

    pub fn big_m_row(
        &mut self,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        label: Label,
        m: f64,
        why: &str,
    ) {
        let k = self.row(terms, sense, rhs, label);
        self.big_m.push((k, m, why.to_string()));
    }

    pub fn extend(&mut self, other: ConstraintBlock) {
        let off = self.rows.len();
        self.rows.extend(other.rows);
        self.cones.extend(other.cones);
        self.bounds.extend(other.bounds);
        self.big_m
            .extend(other.big_m.into_iter().map(|(k, m, d)| (k + off, m, d)));
        self.one_hot.extend(other.one_hot);
    }

    /// Largest violation of any row, cone or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x));
        let cones = self.cones.iter().map(|c| c.violation(x));
        let bounds = self
            .bounds
            .iter()
            .map(|&(v, lo, hi)| (lo - x[v]).max(x[v] - hi).max(0.0));
        rows.chain(cones).chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub vars: Vec<Variable>,
    pub meta: Vec<VarMeta>,
    pub rows: Vec<Row>,
    pub cones: Vec<Cone>,
    /// Minimized.
    pub objective: AffExpr,
    pub big_m: Vec<BigM>,
    pub one_hot: Vec<Vec<VarId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub vars: usize,
    pub bins: usize,
    pub rows: usize,
    pub cones: usize,
}

impl ConicProgram {
    pub fn add_var(&mut self, name: String, lower: f64, upper: f64, kind: VarKind, meta: VarMeta) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable {
            name,
            lower,
            upper,
            kind,
            priority: 0,
        });
        self.meta.push(meta);
        self.vars.len() - 1
    }

    pub fn add_block(&mut self, block: ConstraintBlock) {
        let off = self.rows.len();
        for (v, lo, hi) in block.bounds {
            let var = &mut self.vars[v];
            var.lower = var.lower.max(lo);
            var.upper = var.upper.min(hi);
        }
        self.rows.extend(block.rows);
        self.cones.extend(block.cones);
        self.big_m
            .extend(block.big_m.into_iter().map(|(k, value, derivation)| BigM {
                row: k + off,
                value,
                derivation,
            }));
        self.one_hot.extend(block.one_hot);
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn is_integral_var(&self, j: VarId) -> bool {
        self.vars[j].kind != VarKind::Continuous
    }

    pub fn integer_vars(&self) -> Vec<VarId> {
        (0..self.vars.len()).filter(|&j| self.is_integral_var(j)).collect()
    }

    pub fn stats(&self) -> ProgramStats {
        ProgramStats {
            vars: self.vars.len(),
            bins: self.vars.iter().filter(|v| v.kind == VarKind::Binary).count(),
            rows: self.rows.len(),
            cones: self.cones.len(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Continuous copy: integrality marks dropped, bounds kept.
    pub fn relaxed(&self) -> ConicProgram {
        let mut p = self.clone();
        for v in &mut p.vars {
            v.kind = VarKind::Continuous;
        }
        p
    }

    /// Copy with the listed binaries/integers fixed; the remaining ones keep
    /// their bounds and integrality marks.
    pub fn fix_binaries(&self, assignment: &[(VarId, f64)]) -> Result<ConicProgram, ModelError> {
        let mut p = self.clone();
        for &(j, value) in assignment {
            let var = p
                .vars
                .get_mut(j)
                .ok_or_else(|| ModelError::UnknownVariable(format!("#{j}")))?;
            if var.kind == VarKind::Continuous {
                return Err(ModelError::UnknownVariable(format!(
                    "`{}` is continuous",
                    var.name
                )));
            }
            let r = value.round();
            if (value - r).abs() > 1e-6 || (var.kind == VarKind::Binary && !(r == 0.0 || r == 1.0)) {
                return Err(ModelError::NonIntegral {
                    name: var.name.clone(),
                    value,
                });
            }
            var.lower = r;
            var.upper = r;
        }
        Ok(p)
    }

    /// Largest scaled violation over rows, cones, bounds and integrality.
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        self.violation_impl(x, true)
    }

    /// As [`max_violation`](Self::max_violation) without the integrality terms.
    pub fn max_violation_continuous(&self, x: &[f64]) -> (f64, String) {
        self.violation_impl(x, false)
    }

    fn violation_impl(&self, x: &[f64], integrality: bool) -> (f64, String) {
        let mut worst = (0.0, String::new());
        let mut take = |v: f64, what: &dyn Fn() -> String| {
            if v > worst.0 {
                worst = (v, what());
            }
        };
        for r in &self.rows {
            take(r.violation(x) / r.scale(x), &|| r.label.to_string());
        }
        for c in &self.cones {
            take(c.violation(x), &|| c.label.to_string());
        }
        for (j, v) in self.vars.iter().enumerate() {
            let b = (v.lower - x[j]).max(x[j] - v.upper).max(0.0);
            take(b / x[j].abs().max(1.0), &|| format!("bound {}", v.name));
            if integrality && v.kind != VarKind::Continuous {
                take((x[j] - x[j].round()).abs(), &|| format!("integrality {}", v.name));
            }
        }
        worst
    }

    /// Structural invariants of the representation.
    pub fn check(&self) -> Result<(), ModelError> {
        let n = self.vars.len();
        if self.meta.len() != n {
            return Err(ModelError::Malformed(format!(
                "{} columns but {} metadata entries",
                n,
                self.meta.len()
            )));
        }
        let mut names = std::collections::HashSet::new();
        for v in &self.vars {
            if !names.insert(v.name.as_str()) {
                return Err(ModelError::Malformed(format!("duplicate variable `{}`", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::Malformed(format!("binary `{}` bounds exceed [0,1]", v.name)));
            }
        }
        let bad = |j: &VarId| *j >= n;
        if self.rows.iter().any(|r| r.terms.iter().map(|t| &t.0).any(bad))
            || self
                .cones
                .iter()
                .any(|c| c.members.iter().any(|m| m.terms.iter().map(|t| &t.0).any(bad)))
            || self.objective.terms.iter().map(|t| &t.0).any(bad)
        {
            return Err(ModelError::Malformed("reference to an undeclared variable".into()));
        }
        for c in &self.cones {
            let min = if c.kind == ConeKind::Rotated { 3 } else { 2 };
            if c.members.len() < min {
                return Err(ModelError::Malformed(format!("cone {} too short", c.label)));
            }
        }
        Ok(())
    }
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
    fn rotated_violation_matches_squared_form() {
        let mut p = ConicProgram::default();
        let a = p.add_var("a".into(), 0.0, 2.0, VarKind::Continuous, meta());
        let b = p.add_var("b".into(), 0.0, 2.0, VarKind::Continuous, meta());
        let c = p.add_var("c".into(), -2.0, 2.0, VarKind::Continuous, meta());
        let cone = Cone {
            kind: ConeKind::Rotated,
            members: vec![
                AffExpr::var(a, 1.0),
                AffExpr::var(b, 1.0),
                AffExpr::var(c, std::f64::consts::SQRT_2),
            ],
            label: Label::new("soc", 0, 0),
        };
        assert!(cone.violation(&[1.0, 1.0, 1.0]) < 1e-15);
        assert!(cone.violation(&[1.0, 1.0, 1.01]) > 0.0);
        assert!(cone.violation(&[1.21, 0.81, 0.99]) < 1e-12);
    }

    #[test]
    fn fix_binaries_checks_values() {
        let mut p = ConicProgram::default();
        let x = p.add_var("x".into(), 0.0, 1.0, VarKind::Binary, meta());
        let y = p.add_var("y".into(), 0.0, 1.0, VarKind::Continuous, meta());
        assert!(p.fix_binaries(&[(x, 0.5)]).is_err());
        assert!(p.fix_binaries(&[(y, 1.0)]).is_err());
        assert!(p.fix_binaries(&[(7, 1.0)]).is_err());
        let f = p.fix_binaries(&[(x, 1.0)]).unwrap();
        assert_eq!((f.vars[x].lower, f.vars[x].upper), (1.0, 1.0));
    }

    #[test]
    fn check_flags_duplicates() {
        let mut p = ConicProgram::default();
        p.add_var("x".into(), 0.0, 1.0, VarKind::Continuous, meta());
        p.add_var("x".into(), 0.0, 1.0, VarKind::Continuous, meta());
        assert!(p.check().is_err());
    }
}
