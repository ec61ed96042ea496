//! Continuous SOCP solves through the Clarabel interior-point solver.
//!
//! Fixed columns are substituted out first; rows that become constant are
//! checked directly. Clarabel's own status is then cross-checked against the
//! residuals of the original program.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::SolveError;
use crate::miconic::{ConeKind, ConicProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocpOptions {
    /// Absolute and relative duality gap target.
    pub tol_gap: f64,
    /// Interior-point feasibility tolerance.
    pub tol_feas: f64,
    /// Largest scaled residual accepted from an inexact termination.
    pub accept_feas: f64,
    pub max_iter: u32,
    pub time_limit: f64,
}

impl Default for SocpOptions {
    fn default() -> Self {
        SocpOptions {
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            accept_feas: 1e-6,
            max_iter: 200,
            time_limit: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxSolution {
    pub status: RelaxStatus,
    /// Full primal vector (fixed columns included).
    pub x: Vec<f64>,
    /// One multiplier per linear row, nonnegative for inequalities. Holds the
    /// infeasibility certificate when `status` is infeasible.
    pub row_duals: Vec<f64>,
    pub cone_duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Largest scaled violation of the original program at `x`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub message: String,
}

impl RelaxSolution {
    fn trivial(status: RelaxStatus, program: &ConicProgram, x: Vec<f64>, message: String) -> Self {
        let objective = match status {
            RelaxStatus::Optimal => program.objective_value(&x),
            RelaxStatus::Infeasible => f64::INFINITY,
            _ => f64::NAN,
        };
        RelaxSolution {
            status,
            row_duals: vec![0.0; program.rows.len()],
            cone_duals: program.cones.iter().map(|c| vec![0.0; c.members.len()]).collect(),
            objective,
            dual_objective: objective,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            x,
            message,
        }
    }
}

/// Where each row of the Clarabel matrix came from.
#[derive(Debug, Clone, Copy)]
enum Origin {
    Row(usize),
    Bound,
    Cone(usize),
}

struct Reduced {
    col_of: Vec<Option<usize>>,
    fixed: Vec<f64>,
    n: usize,
    a_i: Vec<usize>,
    a_j: Vec<usize>,
    a_v: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    origin: Vec<Origin>,
    q: Vec<f64>,
    obj_const: f64,
}

fn reduce(p: &ConicProgram) -> Result<Reduced, String> {
    let nv = p.vars.len();
    let mut col_of = vec![None; nv];
    let mut fixed = vec![0.0; nv];
    let mut n = 0;
    for (j, v) in p.vars.iter().enumerate() {
        if v.lower > v.upper {
            return Err(format!("bounds of `{}` cross", v.name));
        }
        if v.lower == v.upper {
            fixed[j] = v.lower;
        } else {
            col_of[j] = Some(n);
            n += 1;
        }
    }
    let mut r = Reduced {
        col_of,
        fixed,
        n,
        a_i: Vec::new(),
        a_j: Vec::new(),
        a_v: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
        origin: Vec::new(),
        q: vec![0.0; n],
        obj_const: p.objective.constant,
    };
    for &(j, a) in &p.objective.terms {
        match r.col_of[j] {
            Some(c) => r.q[c] += a,
            None => r.obj_const += a * r.fixed[j],
        }
    }

    // rows: A x + s = b; equalities go in the zero cone, the rest in the
    // nonnegative cone as  a.x <= rhs  (Ge rows negated)
    let push_row = |r: &mut Reduced, terms: &[(usize, f64)], sign: f64, rhs: f64, origin: Origin| -> bool {
        let m = r.b.len();
        let mut constant = 0.0;
        let mut any = false;
        for &(j, a) in terms {
            match r.col_of[j] {
                Some(c) => {
                    if a != 0.0 {
                        r.a_i.push(m);
                        r.a_j.push(c);
                        r.a_v.push(sign * a);
                        any = true;
                    }
                }
                None => constant += a * r.fixed[j],
            }
        }
        if !any {
            return false;
        }
        r.b.push(sign * (rhs - constant));
        r.origin.push(origin);
        true
    };

    let check_const = |row: &crate::miconic::Row, fixed: &[f64]| -> Result<(), String> {
        let act: f64 = row.terms.iter().map(|&(j, a)| a * fixed[j]).sum();
        let d = act - row.rhs;
        let tol = 1e-9 * row.rhs.abs().max(1.0);
        let bad = match row.sense {
            Sense::Le => d > tol,
            Sense::Ge => d < -tol,
            Sense::Eq => d.abs() > tol,
        };
        if bad {
            Err(format!("row {} violated by fixed columns", row.label))
        } else {
            Ok(())
        }
    };

    let mut count = 0;
    for (k, row) in p.rows.iter().enumerate() {
        if row.sense == Sense::Eq {
            if push_row(&mut r, &row.terms, 1.0, row.rhs, Origin::Row(k)) {
                count += 1;
            } else {
                check_const(row, &r.fixed)?;
            }
        }
    }
    if count > 0 {
        r.cones.push(SupportedConeT::ZeroConeT(count));
    }
    let mut count = 0;
    for (k, row) in p.rows.iter().enumerate() {
        let sign = match row.sense {
            Sense::Eq => continue,
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
        };
        if push_row(&mut r, &row.terms, sign, row.rhs, Origin::Row(k)) {
            count += 1;
        } else {
            check_const(row, &r.fixed)?;
        }
    }
    for (j, v) in p.vars.iter().enumerate() {
        if r.col_of[j].is_none() {
            continue;
        }
        if v.upper.is_finite() {
            push_row(&mut r, &[(j, 1.0)], 1.0, v.upper, Origin::Bound);
            count += 1;
        }
        if v.lower.is_finite() {
            push_row(&mut r, &[(j, 1.0)], -1.0, v.lower, Origin::Bound);
            count += 1;
        }
    }
    if count > 0 {
        r.cones.push(SupportedConeT::NonnegativeConeT(count));
    }

    // cone members m_k = a.x + c enter as s_k = m_k, i.e. row -a, b = c.
    // A rotated cone (u, v, w) is fed as ((u+v)/sqrt2, (u-v)/sqrt2, w).
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (k, cone) in p.cones.iter().enumerate() {
        let members: Vec<(Vec<(usize, f64)>, f64)> = match cone.kind {
            ConeKind::Quadratic => cone.members.iter().map(|m| (m.terms.clone(), m.constant)).collect(),
            ConeKind::Rotated => {
                let (u, v) = (&cone.members[0], &cone.members[1]);
                let mut sum: Vec<(usize, f64)> = u.terms.iter().map(|&(j, a)| (j, h * a)).collect();
                sum.extend(v.terms.iter().map(|&(j, a)| (j, h * a)));
                let mut diff: Vec<(usize, f64)> = u.terms.iter().map(|&(j, a)| (j, h * a)).collect();
                diff.extend(v.terms.iter().map(|&(j, a)| (j, -h * a)));
                let mut out = vec![(sum, h * (u.constant + v.constant)), (diff, h * (u.constant - v.constant))];
                out.extend(cone.members[2..].iter().map(|m| (m.terms.clone(), m.constant)));
                out
            }
        };
        for (terms, c) in &members {
            let m = r.b.len();
            let mut constant = *c;
            for &(j, a) in terms {
                match r.col_of[j] {
                    Some(col) => {
                        r.a_i.push(m);
                        r.a_j.push(col);
                        r.a_v.push(-a);
                    }
                    None => constant += a * r.fixed[j],
                }
            }
            r.b.push(constant);
            r.origin.push(Origin::Cone(k));
        }
        r.cones.push(SupportedConeT::SecondOrderConeT(members.len()));
    }
    Ok(r)
}

const ATTEMPTS: u32 = 3;

fn settings(opts: &SocpOptions, attempt: u32) -> DefaultSettings<f64> {
    let mut s = DefaultSettings::<f64>::default();
    s.verbose = false;
    s.max_iter = opts.max_iter;
    s.tol_gap_abs = opts.tol_gap;
    s.tol_gap_rel = opts.tol_gap;
    s.tol_feas = opts.tol_feas;
    if opts.time_limit.is_finite() {
        s.time_limit = opts.time_limit;
    }
    s.presolve_enable = false;
    s.max_threads = 1;
    match attempt {
        // Ruiz scaling stalls at AlmostSolved on some multi-period programs
        0 => s.equilibrate_enable = false,
        1 => {}
        _ => {
            s.max_iter = opts.max_iter * 2;
            s.max_step_fraction = 0.95;
            s.static_regularization_constant = 1e-7;
            s.iterative_refinement_max_iter = 20;
        }
    }
    s
}

/// Solves the continuous relaxation of `program` (integrality ignored).
pub fn solve_socp(program: &ConicProgram, opts: &SocpOptions) -> Result<RelaxSolution, SolveError> {
    let red = match reduce(program) {
        Ok(r) => r,
        Err(msg) => {
            let x: Vec<f64> = program.vars.iter().map(|v| v.lower).collect();
            return Ok(RelaxSolution::trivial(RelaxStatus::Infeasible, program, x, msg));
        }
    };
    let full_x = |xs: &[f64]| -> Vec<f64> {
        (0..program.vars.len())
            .map(|j| red.col_of[j].map_or(red.fixed[j], |c| xs[c]))
            .collect()
    };
    if red.n == 0 {
        let x = full_x(&[]);
        let (viol, what) = program.max_violation(&x);
        let status = if viol <= opts.accept_feas {
            RelaxStatus::Optimal
        } else {
            RelaxStatus::Infeasible
        };
        return Ok(RelaxSolution::trivial(status, program, x, what));
    }

    let m = red.b.len();
    let a = CscMatrix::new_from_triplets(m, red.n, red.a_i.clone(), red.a_j.clone(), red.a_v.clone());
    let p = CscMatrix::<f64>::zeros((red.n, red.n));

    let mut last = None;
    for attempt in 0..ATTEMPTS {
        let mut solver = DefaultSolver::new(&p, &red.q, &a, &red.b, &red.cones, settings(opts, attempt))
            .map_err(|e| SolveError::Setup(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let x = full_x(&sol.x);
        let (viol, worst) = program.max_violation_continuous(&x);
        let obj = program.objective_value(&x);
        let dual_obj = sol.obj_val_dual + red.obj_const;
        let gap_ok = (obj - dual_obj).abs() <= 1e3 * opts.tol_gap * obj.abs().max(1.0);
        let status = match sol.status {
            SolverStatus::Solved => RelaxStatus::Optimal,
            SolverStatus::PrimalInfeasible => RelaxStatus::Infeasible,
            SolverStatus::DualInfeasible => RelaxStatus::Unbounded,
            SolverStatus::AlmostPrimalInfeasible if attempt + 1 == ATTEMPTS => RelaxStatus::Infeasible,
            _ if viol <= opts.accept_feas && gap_ok => RelaxStatus::Optimal,
            _ => RelaxStatus::NumericalFailure,
        };
        let mut row_duals = vec![0.0; program.rows.len()];
        let mut cone_duals: Vec<Vec<f64>> = vec![Vec::new(); program.cones.len()];
        for (i, o) in red.origin.iter().enumerate() {
            match *o {
                Origin::Row(k) => row_duals[k] = sol.z[i],
                Origin::Cone(k) => cone_duals[k].push(sol.z[i]),
                Origin::Bound => {}
            }
        }
        let out = RelaxSolution {
            status,
            objective: match status {
                RelaxStatus::Optimal => obj,
                RelaxStatus::Infeasible => f64::INFINITY,
                RelaxStatus::Unbounded => f64::NEG_INFINITY,
                RelaxStatus::NumericalFailure => f64::NAN,
            },
            dual_objective: dual_obj,
            x,
            row_duals,
            cone_duals,
            primal_residual: viol,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            message: format!("{:?}; worst residual at {worst}", sol.status),
        };
        if status != RelaxStatus::NumericalFailure && !(status == RelaxStatus::Optimal && viol > 1e2 * opts.accept_feas) {
            return Ok(out);
        }
        log::debug!("conic solve attempt {attempt} ended with {:?} (residual {viol:.2e})", sol.status);
        last = Some(out);
    }
    let mut out = last.expect("at least one attempt");
    out.status = RelaxStatus::NumericalFailure;
    Ok(out)
}
