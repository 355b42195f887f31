//! Canonical conic program and the solver adapter contract.
//!
//! A program is a linear objective over real variables subject to four
//! constraint classes:
//!
//! - affine equalities        `expr(x) = 0`
//! - affine inequalities      `expr(x) <= 0`
//! - convex quadratic         `||terms(x)||^2 <= bound(x)`
//! - second-order cones       `||terms(x)||   <= bound(x)`
//!
//! with every `expr` / `term` / `bound` an affine function of `x`. Any
//! conforming conic solver can be plugged in behind [`SolverAdapter`].

use std::time::Duration;

use thiserror::Error;

/// Affine function `sum coeffs + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { coeffs: Vec::new(), constant: c }
    }

    pub fn term(var: usize, coeff: f64) -> Self {
        LinExpr { coeffs: vec![(var, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, var: usize, coeff: f64) -> &mut Self {
        if coeff != 0.0 {
            self.coeffs.push((var, coeff));
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(j, c)| c * x[*j]).sum::<f64>()
    }
}

/// `||terms(x)||^2 <= bound(x)`.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub terms: Vec<LinExpr>,
    pub bound: LinExpr,
}

/// `||terms(x)|| <= bound(x)`.
#[derive(Debug, Clone)]
pub struct SocConstraint {
    pub terms: Vec<LinExpr>,
    pub bound: LinExpr,
}

/// Canonical conic program, `minimize objective . x`.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<LinExpr>,
    pub inequalities: Vec<LinExpr>,
    pub quadratics: Vec<QuadConstraint>,
    pub socs: Vec<SocConstraint>,
}

/// Size summary; stable across repeated assemblies of the same problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramStats {
    pub variables: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub quadratic_constraints: usize,
    pub second_order_cones: usize,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        ConicProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            ..Default::default()
        }
    }

    pub fn stats(&self) -> ProgramStats {
        ProgramStats {
            variables: self.num_vars,
            equalities: self.equalities.len(),
            inequalities: self.inequalities.len(),
            quadratic_constraints: self.quadratics.len(),
            second_order_cones: self.socs.len(),
        }
    }

    /// Worst violation of each constraint class at `x` (for reporting).
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for e in &self.equalities {
            worst = worst.max(e.eval(x).abs());
        }
        for e in &self.inequalities {
            worst = worst.max(e.eval(x).max(0.0));
        }
        for q in &self.quadratics {
            let lhs: f64 = q.terms.iter().map(|t| t.eval(x).powi(2)).sum();
            worst = worst.max((lhs - q.bound.eval(x)).max(0.0));
        }
        for s in &self.socs {
            let lhs: f64 = s.terms.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
            worst = worst.max((lhs - s.bound.eval(x)).max(0.0));
        }
        worst
    }
}

/// Terminal status of a solve. `Optimal` is only reported when the solver
/// met its accuracy targets; reduced-accuracy answers map to `Inaccurate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Inaccurate,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Inaccurate => "inaccurate",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        write!(f, "{s}")
    }
}

/// Raw adapter result. `x` is meaningful for `Optimal` and `Inaccurate`.
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub solve_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub affine_equalities: bool,
    pub quadratic_inequalities: bool,
    pub second_order_cones: bool,
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Feasibility / gap tolerance target.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub verbose: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { tolerance: 1e-8, max_iterations: 200_000, verbose: false }
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("program is malformed: {0}")]
    Malformed(String),
    #[error("adapter `{adapter}` lacks capability: {missing}")]
    MissingCapability { adapter: String, missing: &'static str },
}

/// A conic solver behind the canonical form. Implementations must be
/// deterministic given identical program data and settings.
pub trait SolverAdapter {
    fn name(&self) -> &'static str;
    fn capabilities(&self) -> Capabilities;
    fn solve(&self, program: &ConicProgram, settings: &SolveSettings)
        -> Result<SolverOutcome, AdapterError>;
}

/// Cone blocks of the standard form `A x + s = b, s in K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
}

/// The canonical program lowered to `min q.x  s.t.  A x + s = b, s in K`,
/// rows ordered zero cone, nonnegative cone, then one SOC per quadratic
/// (`||T||^2 <= B` becomes `(1 + B, 2T, 1 - B) in SOC`) and per explicit SOC.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub num_vars: usize,
    pub num_rows: usize,
    /// Triplets of `A` (row, col, value), row-major build order.
    pub a_rows: Vec<usize>,
    pub a_cols: Vec<usize>,
    pub a_vals: Vec<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    pub cones: Vec<ConeSpec>,
}

impl StandardForm {
    pub fn from_program(program: &ConicProgram) -> Result<Self, AdapterError> {
        let n = program.num_vars;
        if program.objective.len() != n {
            return Err(AdapterError::Malformed("objective length != num_vars".into()));
        }
        let mut sf = StandardForm {
            num_vars: n,
            num_rows: 0,
            a_rows: Vec::new(),
            a_cols: Vec::new(),
            a_vals: Vec::new(),
            b: Vec::new(),
            q: program.objective.clone(),
            cones: Vec::new(),
        };

        let push = |sf: &mut StandardForm, row: &LinExpr, scale: f64, rhs: f64| -> Result<(), AdapterError> {
            let r = sf.b.len();
            for &(j, c) in &row.coeffs {
                if j >= n {
                    return Err(AdapterError::Malformed(format!(
                        "variable index {j} out of range ({n} vars)"
                    )));
                }
                sf.a_rows.push(r);
                sf.a_cols.push(j);
                sf.a_vals.push(scale * c);
            }
            sf.b.push(rhs);
            Ok(())
        };

        if !program.equalities.is_empty() {
            for e in &program.equalities {
                push(&mut sf, e, 1.0, -e.constant)?;
            }
            sf.cones.push(ConeSpec::Zero(program.equalities.len()));
        }
        if !program.inequalities.is_empty() {
            for e in &program.inequalities {
                push(&mut sf, e, 1.0, -e.constant)?;
            }
            sf.cones.push(ConeSpec::Nonneg(program.inequalities.len()));
        }
        for qc in &program.quadratics {
            push(&mut sf, &qc.bound, -1.0, 1.0 + qc.bound.constant)?;
            for t in &qc.terms {
                push(&mut sf, t, -2.0, 2.0 * t.constant)?;
            }
            push(&mut sf, &qc.bound, 1.0, 1.0 - qc.bound.constant)?;
            sf.cones.push(ConeSpec::Soc(qc.terms.len() + 2));
        }
        for sc in &program.socs {
            push(&mut sf, &sc.bound, -1.0, sc.bound.constant)?;
            for t in &sc.terms {
                push(&mut sf, t, -1.0, t.constant)?;
            }
            sf.cones.push(ConeSpec::Soc(sc.terms.len() + 1));
        }

        sf.num_rows = sf.b.len();
        Ok(sf)
    }

    /// Euclidean projection onto the cone product (in place).
    pub fn project_onto_cones(&self, s: &mut [f64]) {
        let mut offset = 0;
        for cone in &self.cones {
            match *cone {
                ConeSpec::Zero(d) => {
                    for v in &mut s[offset..offset + d] {
                        *v = 0.0;
                    }
                    offset += d;
                }
                ConeSpec::Nonneg(d) => {
                    for v in &mut s[offset..offset + d] {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    offset += d;
                }
                ConeSpec::Soc(d) => {
                    let block = &mut s[offset..offset + d];
                    let t = block[0];
                    let norm: f64 = block[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm <= t {
                        // inside
                    } else if norm <= -t {
                        for v in block.iter_mut() {
                            *v = 0.0;
                        }
                    } else {
                        let alpha = 0.5 * (norm + t);
                        block[0] = alpha;
                        let scale = alpha / norm;
                        for v in block[1..].iter_mut() {
                            *v *= scale;
                        }
                    }
                    offset += d;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linexpr_eval() {
        let mut e = LinExpr::constant(2.0);
        e.push(0, 1.5).push(2, -1.0);
        assert_eq!(e.eval(&[2.0, 9.0, 4.0]), 2.0 + 3.0 - 4.0);
    }

    #[test]
    fn violation_measures_each_class() {
        let mut p = ConicProgram::new(2);
        p.equalities.push(LinExpr { coeffs: vec![(0, 1.0)], constant: -1.0 }); // x0 = 1
        p.inequalities.push(LinExpr { coeffs: vec![(1, 1.0)], constant: -2.0 }); // x1 <= 2
        p.socs.push(SocConstraint {
            terms: vec![LinExpr::term(0, 1.0), LinExpr::term(1, 1.0)],
            bound: LinExpr::constant(1.0),
        });
        assert!(p.primal_violation(&[1.0, 0.0]) < 1e-15);
        assert!(p.primal_violation(&[1.0, 3.0]) > 0.9);
    }
}
