//! Interior-point adapter backed by the Clarabel solver.

use std::time::Duration;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::conic::{
    AdapterError, Capabilities, ConeSpec, ConicProgram, SolveSettings, SolveStatus, SolverAdapter,
    SolverOutcome, StandardForm,
};

#[derive(Debug, Default, Clone)]
pub struct ClarabelAdapter;

impl SolverAdapter for ClarabelAdapter {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            affine_equalities: true,
            quadratic_inequalities: true,
            second_order_cones: true,
        }
    }

    fn solve(
        &self,
        program: &ConicProgram,
        settings: &SolveSettings,
    ) -> Result<SolverOutcome, AdapterError> {
        let sf = StandardForm::from_program(program)?;
        let a = CscMatrix::new_from_triplets(sf.num_rows, sf.num_vars, sf.a_rows, sf.a_cols, sf.a_vals);
        let p = CscMatrix::zeros((sf.num_vars, sf.num_vars));
        let cones: Vec<SupportedConeT<f64>> = sf
            .cones
            .iter()
            .map(|c| match *c {
                ConeSpec::Zero(d) => SupportedConeT::ZeroConeT(d),
                ConeSpec::Nonneg(d) => SupportedConeT::NonnegativeConeT(d),
                ConeSpec::Soc(d) => SupportedConeT::SecondOrderConeT(d),
            })
            .collect();

        let clarabel_settings = DefaultSettings {
            verbose: settings.verbose,
            max_iter: settings.max_iterations.min(u32::MAX as usize) as u32,
            tol_feas: settings.tolerance,
            tol_gap_abs: settings.tolerance,
            tol_gap_rel: settings.tolerance,
            ..DefaultSettings::default()
        };

        let mut solver = DefaultSolver::new(&p, &sf.q, &a, &sf.b, &cones, clarabel_settings)
            .map_err(|e| AdapterError::Malformed(format!("clarabel setup: {e:?}")))?;
        solver.solve();

        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
            SolverStatus::Unsolved
            | SolverStatus::NumericalError
            | SolverStatus::InsufficientProgress
            | SolverStatus::CallbackTerminated => SolveStatus::NumericalFailure,
        };

        Ok(SolverOutcome {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations as usize,
            solve_time: Duration::from_secs_f64(sol.solve_time),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::conic::{LinExpr, QuadConstraint, SocConstraint};

    #[test]
    fn solves_tiny_lp() {
        // min -x0 - x1 st x0 + x1 <= 1, x >= 0  -> optimum -1
        let mut p = ConicProgram::new(2);
        p.objective = vec![-1.0, -1.0];
        p.inequalities.push(LinExpr { coeffs: vec![(0, 1.0), (1, 1.0)], constant: -1.0 });
        p.inequalities.push(LinExpr::term(0, -1.0));
        p.inequalities.push(LinExpr::term(1, -1.0));
        let out = ClarabelAdapter.solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 1.0).abs() < 1e-7);
    }

    #[test]
    fn solves_quadratic_epigraph() {
        // min t st (x-3)^2 <= t, x = 1  -> t = 4
        let mut p = ConicProgram::new(2);
        p.objective = vec![0.0, 1.0];
        p.equalities.push(LinExpr { coeffs: vec![(0, 1.0)], constant: -1.0 });
        p.quadratics.push(QuadConstraint {
            terms: vec![LinExpr { coeffs: vec![(0, 1.0)], constant: -3.0 }],
            bound: LinExpr::term(1, 1.0),
        });
        let out = ClarabelAdapter.solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.x[1] - 4.0).abs() < 1e-6, "t = {}", out.x[1]);
    }

    #[test]
    fn solves_soc_projection() {
        // min x0 st ||(x0, x1) - (2, 1)|| <= 1, x1 = 1  -> x0 = 1
        let mut p = ConicProgram::new(2);
        p.objective = vec![1.0, 0.0];
        p.equalities.push(LinExpr { coeffs: vec![(1, 1.0)], constant: -1.0 });
        p.socs.push(SocConstraint {
            terms: vec![
                LinExpr { coeffs: vec![(0, 1.0)], constant: -2.0 },
                LinExpr { coeffs: vec![(1, 1.0)], constant: -1.0 },
            ],
            bound: LinExpr::constant(1.0),
        });
        let out = ClarabelAdapter.solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reports_infeasible() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![1.0];
        p.equalities.push(LinExpr { coeffs: vec![(0, 1.0)], constant: -1.0 }); // x = 1
        p.inequalities.push(LinExpr { coeffs: vec![(0, 1.0)], constant: 1.0 }); // x <= -1
        let out = ClarabelAdapter.solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn reports_unbounded() {
        let mut p = ConicProgram::new(1);
        p.objective = vec![-1.0];
        p.inequalities.push(LinExpr::term(0, -1.0)); // x >= 0, min -x
        let out = ClarabelAdapter.solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Unbounded);
    }
}
