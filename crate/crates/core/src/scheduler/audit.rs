//! Post-solution audits: relaxation tightness and oracle verification.
//!
//! The convex model only ever promises `>=` on the quadratic constraints and
//! never enforces charge/discharge complementarity. Nothing here is assumed;
//! the audits recompute every gap from the solved trajectories.

use nalgebra::DVector;
use num_complex::Complex64;

use super::{DispatchSchedule, ScheduleError, ScheduleProblem};
use crate::devices::load_power_exact;
use crate::network::{grid_power, total_losses, Phase};
use crate::oracle::{injection_evaluator, solve_power_flow, PowerFlowSettings};

/// Per-period relaxation gaps.
#[derive(Debug, Clone)]
pub struct TightnessRow {
    pub t: usize,
    /// `p_loss - real(V^H Y V)` at the solved voltages.
    pub loss_gap: f64,
    /// `p_grid - real(S_slack(V))`.
    pub grid_gap: f64,
    /// `n - (a p^2 + b p + c)` per battery, charge side.
    pub battery_char_gaps: Vec<f64>,
    /// Same, discharge side.
    pub battery_disch_gaps: Vec<f64>,
    /// `p_char * p_disch` per battery (complementarity indicator).
    pub simultaneous: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TightnessReport {
    pub rows: Vec<TightnessRow>,
    pub max_loss_gap: f64,
    pub max_grid_gap: f64,
    pub max_battery_gap: f64,
    pub max_simultaneous: f64,
}

impl TightnessReport {
    /// True when every gap magnitude is at or below `gap_tol` and every
    /// simultaneous charge/discharge indicator at or below `compl_tol`.
    pub fn passes(&self, gap_tol: f64, compl_tol: f64) -> bool {
        self.max_loss_gap <= gap_tol
            && self.max_grid_gap <= gap_tol
            && self.max_battery_gap <= gap_tol
            && self.max_simultaneous <= compl_tol
    }
}

/// Recompute every relaxed inequality at the solved point and report gaps.
pub fn audit_tightness(schedule: &DispatchSchedule, problem: &ScheduleProblem) -> TightnessReport {
    let mut rows = Vec::with_capacity(schedule.horizon);
    let mut max_loss: f64 = 0.0;
    let mut max_grid: f64 = 0.0;
    let mut max_bat: f64 = 0.0;
    let mut max_sim: f64 = 0.0;

    for t in 0..schedule.horizon {
        let v = &schedule.voltages[t];
        let loss_exact = total_losses(&problem.partition, &problem.v_slack, v);
        let loss_gap = schedule.p_loss[t] - loss_exact;
        let grid_gap = schedule.p_grid[t] - grid_power(&problem.partition, &problem.v_slack, v).re;

        let mut char_gaps = Vec::with_capacity(problem.fleet.batteries.len());
        let mut disch_gaps = Vec::with_capacity(problem.fleet.batteries.len());
        let mut simultaneous = Vec::with_capacity(problem.fleet.batteries.len());
        for (k, bat) in problem.fleet.batteries.iter().enumerate() {
            let st = &schedule.batteries[t][k];
            char_gaps.push(st.n_char - bat.loss_char.eval(st.p_char));
            disch_gaps.push(st.n_disch - bat.loss_disch.eval(st.p_disch));
            simultaneous.push(st.p_char * st.p_disch);
        }

        max_loss = max_loss.max(loss_gap.abs());
        max_grid = max_grid.max(grid_gap.abs());
        for g in char_gaps.iter().chain(&disch_gaps) {
            max_bat = max_bat.max(g.abs());
        }
        for s in &simultaneous {
            max_sim = max_sim.max(s.abs());
        }

        rows.push(TightnessRow {
            t,
            loss_gap,
            grid_gap,
            battery_char_gaps: char_gaps,
            battery_disch_gaps: disch_gaps,
            simultaneous,
        });
    }

    TightnessReport {
        rows,
        max_loss_gap: max_loss,
        max_grid_gap: max_grid,
        max_battery_gap: max_bat,
        max_simultaneous: max_sim,
    }
}

/// Per-period comparison against the exact nonlinear power flow.
#[derive(Debug, Clone)]
pub struct OracleAuditRow {
    pub t: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Max complex-voltage deviation between schedule and oracle, per-unit.
    pub max_voltage_error: f64,
    /// `|p_grid_schedule - p_grid_oracle|`, per-unit.
    pub grid_power_error: f64,
    /// Energy-conservation residual at the oracle solution, per-unit.
    pub conservation_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OracleAudit {
    pub rows: Vec<OracleAuditRow>,
    pub all_converged: bool,
    pub max_voltage_error: f64,
    pub max_grid_power_error: f64,
    pub max_conservation_residual: f64,
}

/// Fix device injections from the schedule and re-solve each period with the
/// exact power flow (exponential loads evaluated exactly).
pub fn verify_against_oracle(
    schedule: &DispatchSchedule,
    problem: &ScheduleProblem,
) -> Result<OracleAudit, ScheduleError> {
    let net = &problem.network;
    let n = net.n_dim();
    let settings = PowerFlowSettings::default();
    let mut rows = Vec::with_capacity(schedule.horizon);
    let mut all_converged = true;
    let mut max_v: f64 = 0.0;
    let mut max_g: f64 = 0.0;
    let mut max_c: f64 = 0.0;

    for t in 0..schedule.horizon {
        // fixed device injections, balanced across the three phases
        let mut s_dev = DVector::from_element(n, Complex64::ZERO);
        let mut spread = |node: u32, s: Complex64| {
            let pos = net.node_pos(node).expect("validated");
            for phase in Phase::ALL {
                let i = net.n_index(pos, phase).expect("generators are three-phase");
                s_dev[i] += s / 3.0;
            }
        };
        for (k, pv) in problem.fleet.pv_units.iter().enumerate() {
            spread(pv.node, schedule.pv[t][k]);
        }
        for (k, wt) in problem.fleet.wind_turbines.iter().enumerate() {
            spread(wt.node, schedule.wind[t][k]);
        }
        for (k, bat) in problem.fleet.batteries.iter().enumerate() {
            spread(bat.node, schedule.batteries[t][k].s);
        }
        let dev_total: f64 = s_dev.iter().map(|z| z.re).sum();

        let inj = injection_evaluator(net, &problem.fleet.loads, t, 1.0, s_dev);
        let sol = solve_power_flow(
            &problem.partition,
            &problem.v_slack,
            &net.flat_n_voltage(),
            &inj,
            &settings,
        )?;

        let (max_voltage_error, grid_power_error, conservation_residual) = if sol.converged {
            let dv = (&sol.v_n - &schedule.voltages[t])
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let pg_oracle = grid_power(&problem.partition, &problem.v_slack, &sol.v_n).re;
            let p_loss_oracle = total_losses(&problem.partition, &problem.v_slack, &sol.v_n);
            let mut load_sum = 0.0;
            for load in &problem.fleet.loads {
                let pos = net.node_pos(load.node).expect("validated");
                for phase in Phase::ALL {
                    if load.phase_split[phase.index()] == 0.0 {
                        continue;
                    }
                    let i = net.n_index(pos, phase).expect("validated");
                    load_sum +=
                        load_power_exact(load, phase, sol.v_n[i], net.v_nom, t).re;
                }
            }
            let conservation = pg_oracle + dev_total - load_sum - p_loss_oracle;
            (dv, (schedule.p_grid[t] - pg_oracle).abs(), conservation.abs())
        } else {
            all_converged = false;
            (f64::INFINITY, f64::INFINITY, f64::INFINITY)
        };

        max_v = max_v.max(max_voltage_error);
        max_g = max_g.max(grid_power_error);
        max_c = max_c.max(conservation_residual);
        rows.push(OracleAuditRow {
            t,
            converged: sol.converged,
            iterations: sol.iterations,
            max_voltage_error,
            grid_power_error,
            conservation_residual,
        });
    }

    Ok(OracleAudit {
        rows,
        all_converged,
        max_voltage_error: max_v,
        max_grid_power_error: max_g,
        max_conservation_residual: max_c,
    })
}
