//! A first-order (ADMM / operator-splitting) conic adapter.
//!
//! Splits `min q.x  s.t.  A x + s = b, s in K` as
//!
//! ```text
//! x-step:  (sigma I + rho A'A) x = A'(rho (b - s) + y) - q   (via CG)
//! s-step:  s = Pi_K(b - A x + y / rho)
//! y-step:  y <- y + rho (b - A x - s)
//! ```
//!
//! The x-step linear system is solved matrix-free with Jacobi-preconditioned
//! conjugate gradients, so no factorization is needed and `rho` can adapt.
//!
//! This adapter cannot certify infeasibility or unboundedness; on such
//! problems it stalls and reports an iteration limit. Converged-but-loose
//! runs are reported as `Inaccurate`, never as optimal.

use std::time::Instant;

use super::conic::{
    AdapterError, Capabilities, ConicProgram, SolveSettings, SolveStatus, SolverAdapter,
    SolverOutcome, StandardForm,
};

#[derive(Debug, Clone)]
pub struct FirstOrderAdapter {
    /// Quadratic proximal weight on x.
    pub sigma: f64,
    /// Residual ratio that triggers a penalty update.
    pub rho_adapt_ratio: f64,
}

impl Default for FirstOrderAdapter {
    fn default() -> Self {
        FirstOrderAdapter { sigma: 1e-6, rho_adapt_ratio: 10.0 }
    }
}

struct SparseA<'a> {
    sf: &'a StandardForm,
}

impl SparseA<'_> {
    /// out = A x
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.sf.a_vals.len() {
            out[self.sf.a_rows[k]] += self.sf.a_vals[k] * x[self.sf.a_cols[k]];
        }
    }

    /// out = A' y
    fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.sf.a_vals.len() {
            out[self.sf.a_cols[k]] += self.sf.a_vals[k] * y[self.sf.a_rows[k]];
        }
    }

    /// Column sums of squares (for the Jacobi preconditioner).
    fn col_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sf.num_vars];
        for k in 0..self.sf.a_vals.len() {
            out[self.sf.a_cols[k]] += self.sf.a_vals[k] * self.sf.a_vals[k];
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SolverAdapter for FirstOrderAdapter {
    fn name(&self) -> &'static str {
        "admm"
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
        let start = Instant::now();
        let sf = StandardForm::from_program(program)?;
        let a = SparseA { sf: &sf };
        let n = sf.num_vars;
        let m = sf.num_rows;

        let b_norm = norm(&sf.b);
        let q_norm = norm(&sf.q);
        let col_sq = a.col_norms_sq();

        let mut rho = 1.0;
        let mut x = vec![0.0; n];
        let mut s = sf.b.clone();
        sf.project_onto_cones(&mut s);
        let mut y = vec![0.0; m];

        // scratch buffers
        let mut ax = vec![0.0; m];
        let mut rhs = vec![0.0; n];
        let mut tmp_m = vec![0.0; m];
        let mut s_prev = vec![0.0; n]; // holds A'(s_k - s_{k-1}) accumulator input
        let mut cg_r = vec![0.0; n];
        let mut cg_p = vec![0.0; n];
        let mut cg_ap = vec![0.0; n];
        let mut cg_z = vec![0.0; n];

        let tol = settings.tolerance.max(1e-10);
        let max_iter = settings.max_iterations;
        let mut iterations = 0;
        let mut pri_res = f64::INFINITY;
        let mut dual_res = f64::INFINITY;
        let mut gap = f64::INFINITY;

        // CG solve of (sigma I + rho A'A) x = rhs, warm-started at x.
        let cg_solve = |x: &mut Vec<f64>,
                            rhs: &[f64],
                            rho: f64,
                            tol: f64,
                            tmp_m: &mut Vec<f64>,
                            r: &mut Vec<f64>,
                            p: &mut Vec<f64>,
                            ap: &mut Vec<f64>,
                            z: &mut Vec<f64>| {
            let precond: Vec<f64> =
                col_sq.iter().map(|c| 1.0 / (self.sigma + rho * c).max(1e-12)).collect();
            // r = rhs - M x
            a.mul(x, tmp_m);
            a.mul_t(tmp_m, r);
            for j in 0..n {
                r[j] = rhs[j] - (self.sigma * x[j] + rho * r[j]);
            }
            for j in 0..n {
                z[j] = precond[j] * r[j];
            }
            p.copy_from_slice(z);
            let mut rz = dot(r, z);
            let rhs_norm = norm(rhs).max(1e-12);
            for _ in 0..200 {
                if norm(r) <= tol * rhs_norm {
                    break;
                }
                a.mul(p, tmp_m);
                a.mul_t(tmp_m, ap);
                for j in 0..n {
                    ap[j] = self.sigma * p[j] + rho * ap[j];
                }
                let alpha = rz / dot(p, ap).max(1e-300);
                for j in 0..n {
                    x[j] += alpha * p[j];
                    r[j] -= alpha * ap[j];
                }
                for j in 0..n {
                    z[j] = precond[j] * r[j];
                }
                let rz_new = dot(r, z);
                let beta = rz_new / rz.max(1e-300);
                rz = rz_new;
                for j in 0..n {
                    p[j] = z[j] + beta * p[j];
                }
            }
        };

        let relax = 1.6; // over-relaxation
        let mut x_prev = vec![0.0; n];
        while iterations < max_iter {
            iterations += 1;

            // x-step: rhs = A'(rho (b - s) + y) - q + sigma x_prev
            for r in 0..m {
                tmp_m[r] = rho * (sf.b[r] - s[r]) + y[r];
            }
            a.mul_t(&tmp_m, &mut rhs);
            x_prev.copy_from_slice(&x);
            for j in 0..n {
                rhs[j] += self.sigma * x_prev[j] - sf.q[j];
            }
            let cg_tol = (0.1 * pri_res.min(dual_res)).clamp(1e-12, 1e-4);
            cg_solve(
                &mut x, &rhs, rho, cg_tol, &mut tmp_m, &mut cg_r, &mut cg_p, &mut cg_ap,
                &mut cg_z,
            );

            // s-step with over-relaxation on Ax
            a.mul(&x, &mut ax);
            let mut s_new = vec![0.0; m];
            for r in 0..m {
                let ax_hat = relax * ax[r] + (1.0 - relax) * (sf.b[r] - s[r]);
                s_new[r] = sf.b[r] - ax_hat + y[r] / rho;
                tmp_m[r] = ax_hat;
            }
            sf.project_onto_cones(&mut s_new);

            // y-step (uses the relaxed Ax)
            for r in 0..m {
                y[r] += rho * (sf.b[r] - tmp_m[r] - s_new[r]);
            }

            // dual residual uses A'(s_new - s)
            for r in 0..m {
                tmp_m[r] = s_new[r] - s[r];
            }
            a.mul_t(&tmp_m, &mut s_prev);
            dual_res = rho * norm(&s_prev) / (1.0 + q_norm);
            s = s_new;

            // primal residual and gap
            let mut pri = 0.0;
            for r in 0..m {
                let v: f64 = ax[r] + s[r] - sf.b[r];
                pri += v * v;
            }
            pri_res = pri.sqrt() / (1.0 + b_norm);
            // with the multiplier on (b - Ax - s), the dual objective is +b.y
            let obj_p = dot(&sf.q, &x);
            let obj_d = dot(&sf.b, &y);
            gap = (obj_p - obj_d).abs() / (1.0 + obj_p.abs() + obj_d.abs());

            if pri_res <= tol && dual_res <= tol && gap <= tol {
                break;
            }

            // residual balancing every 50 iterations
            if iterations % 50 == 0 {
                if pri_res > self.rho_adapt_ratio * dual_res {
                    rho *= 2.0;
                    for v in y.iter_mut() {
                        *v /= 2.0;
                    }
                } else if dual_res > self.rho_adapt_ratio * pri_res {
                    rho /= 2.0;
                    for v in y.iter_mut() {
                        *v *= 2.0;
                    }
                }
            }
        }

        let converged = pri_res <= tol && dual_res <= tol && gap <= tol;
        let loose = pri_res <= 1e-4 && dual_res <= 1e-4 && gap <= 1e-4;
        let status = if converged {
            SolveStatus::Optimal
        } else if loose {
            SolveStatus::Inaccurate
        } else {
            SolveStatus::IterationLimit
        };

        Ok(SolverOutcome {
            status,
            objective: dot(&sf.q, &x),
            x,
            iterations,
            solve_time: start.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::conic::{LinExpr, QuadConstraint, SocConstraint};

    fn settings() -> SolveSettings {
        SolveSettings { tolerance: 1e-8, max_iterations: 50_000, verbose: false }
    }

    #[test]
    fn solves_tiny_lp() {
        let mut p = ConicProgram::new(2);
        p.objective = vec![-1.0, -1.0];
        p.inequalities.push(LinExpr { coeffs: vec![(0, 1.0), (1, 1.0)], constant: -1.0 });
        p.inequalities.push(LinExpr::term(0, -1.0));
        p.inequalities.push(LinExpr::term(1, -1.0));
        let out = FirstOrderAdapter::default().solve(&p, &settings()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective + 1.0).abs() < 1e-6, "objective {}", out.objective);
    }

    #[test]
    fn solves_quadratic_epigraph() {
        let mut p = ConicProgram::new(2);
        p.objective = vec![0.0, 1.0];
        p.equalities.push(LinExpr { coeffs: vec![(0, 1.0)], constant: -1.0 });
        p.quadratics.push(QuadConstraint {
            terms: vec![LinExpr { coeffs: vec![(0, 1.0)], constant: -3.0 }],
            bound: LinExpr::term(1, 1.0),
        });
        let out = FirstOrderAdapter::default().solve(&p, &settings()).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.x[1] - 4.0).abs() < 1e-5, "t = {}", out.x[1]);
    }

    #[test]
    fn agrees_with_clarabel_on_soc_problem() {
        use crate::scheduler::clarabel_adapter::ClarabelAdapter;
        let mut p = ConicProgram::new(3);
        p.objective = vec![1.0, 2.0, 0.1];
        p.equalities.push(LinExpr { coeffs: vec![(0, 1.0), (1, 1.0), (2, 1.0)], constant: -2.0 });
        p.socs.push(SocConstraint {
            terms: vec![LinExpr::term(0, 1.0), LinExpr::term(1, 1.0)],
            bound: LinExpr { coeffs: vec![(2, 0.5)], constant: 1.0 },
        });
        let ip = ClarabelAdapter.solve(&p, &settings()).unwrap();
        let fo = FirstOrderAdapter::default().solve(&p, &settings()).unwrap();
        assert_eq!(ip.status, SolveStatus::Optimal);
        assert_eq!(fo.status, SolveStatus::Optimal);
        assert!(
            (ip.objective - fo.objective).abs() <= 1e-6 * (1.0 + ip.objective.abs()),
            "clarabel {} vs admm {}",
            ip.objective,
            fo.objective
        );
    }
}
