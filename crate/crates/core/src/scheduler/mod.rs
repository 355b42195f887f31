//! The 24h convex dispatch: problem container, program assembly, solver
//! dispatch and post-solution audits.

use std::time::Duration;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::devices::{DeviceError, DeviceFleet, TimeSeriesSet};
use crate::network::{
    build_admittance, partition, slack_voltage, AdmittancePartition, NetworkError,
    ThreePhaseNetwork,
};
use crate::oracle::OracleError;
use crate::wirtinger::{build_linear_model, ExpansionPoint, LinearFlowModel, WirtingerError};

pub mod clarabel_adapter;
pub mod conic;
pub mod firstorder;

mod assemble;
mod audit;

pub use assemble::{
    add_static_reserve, assemble, assemble_with, AssembledProgram, AssemblyTweaks, VarLayout,
};
pub use audit::{
    audit_tightness, verify_against_oracle, OracleAudit, OracleAuditRow, TightnessReport,
    TightnessRow,
};
pub use clarabel_adapter::ClarabelAdapter;
pub use conic::{
    AdapterError, Capabilities, ConicProgram, ProgramStats, SolveSettings, SolveStatus,
    SolverAdapter, SolverOutcome,
};
pub use firstorder::FirstOrderAdapter;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Wirtinger(#[from] WirtingerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("voltage deviation limit must be in (0, 0.2], got {0}")]
    BadDelta(f64),
    #[error("period length must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("static reserve enabled but the fleet has no batteries")]
    ReserveWithoutBatteries,
    #[error("branch {from}-{to} has an asymmetric admittance; the loss relaxation requires reciprocal lines")]
    AsymmetricBranch { from: u32, to: u32 },
    #[error("branch {from}-{to} conductance is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NonPassiveBranch { from: u32, to: u32, min_eigenvalue: f64 },
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver finished at reduced accuracy; result not accepted as optimal")]
    InaccurateSolve,
    #[error("solver failed with status {0}")]
    SolverFailure(SolveStatus),
}

/// Scenario switches: surplus sale (case 1) vs. no-surplus (case 2),
/// grid-code voltage band, static reserve.
#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    /// Case 1 when true (the slack may absorb microgrid surplus).
    pub surplus_allowed: bool,
    /// Voltage deviation limit, per-unit of `v_nom`.
    pub delta_v: f64,
    pub reserve_enabled: bool,
    /// Reserve duration tau: stored energy must cover `real(d_t) * tau`.
    pub reserve_tau_hours: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            surplus_allowed: true,
            delta_v: 0.1,
            reserve_enabled: false,
            reserve_tau_hours: 1.0,
        }
    }
}

/// A fully validated dispatch problem with its network artifacts
/// (admittance partition, slack voltage, affine surrogate) prebuilt.
#[derive(Debug, Clone)]
pub struct ScheduleProblem {
    pub network: ThreePhaseNetwork,
    pub fleet: DeviceFleet,
    pub series: TimeSeriesSet,
    pub options: ScenarioOptions,
    pub y_full: DMatrix<Complex64>,
    pub partition: AdmittancePartition,
    pub v_slack: Vector3<Complex64>,
    pub model: LinearFlowModel,
}

impl ScheduleProblem {
    pub fn new(
        network: ThreePhaseNetwork,
        fleet: DeviceFleet,
        series: TimeSeriesSet,
        options: ScenarioOptions,
    ) -> Result<Self, ScheduleError> {
        if !(options.delta_v > 0.0 && options.delta_v <= 0.2) {
            return Err(ScheduleError::BadDelta(options.delta_v));
        }
        if !(series.dt_hours > 0.0) {
            return Err(ScheduleError::NonPositiveDt(series.dt_hours));
        }
        fleet.validate(&network, series.horizon)?;

        let y_full = build_admittance(&network);
        let part = partition(&y_full, &network);
        let v_slack = slack_voltage(network.v_nom)?;
        let model = build_linear_model(
            &part,
            &v_slack,
            &network,
            &fleet.loads,
            ExpansionPoint::flat(&network),
        )?;
        Ok(ScheduleProblem {
            network,
            fleet,
            series,
            options,
            y_full,
            partition: part,
            v_slack,
            model,
        })
    }

    /// Re-linearize around a different operating point (warm expansion).
    pub fn re_expand_at(&mut self, v0: DVector<Complex64>) -> Result<(), ScheduleError> {
        self.model = build_linear_model(
            &self.partition,
            &self.v_slack,
            &self.network,
            &self.fleet.loads,
            ExpansionPoint::at(v0),
        )?;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.series.horizon
    }
}

/// One battery's state in one period.
#[derive(Debug, Clone, Copy)]
pub struct BatteryState {
    /// Complex converter power (injection positive).
    pub s: Complex64,
    pub p_char: f64,
    pub p_disch: f64,
    pub n_char: f64,
    pub n_disch: f64,
    /// Stored energy at the end of the period, per-unit-hours.
    pub e: f64,
}

/// Solved trajectories. Only produced for an optimal solver status.
#[derive(Debug, Clone)]
pub struct DispatchSchedule {
    pub horizon: usize,
    pub dt_hours: f64,
    /// Non-slack voltages per period, phase-major.
    pub voltages: Vec<DVector<Complex64>>,
    /// Complex PV converter power per period per unit.
    pub pv: Vec<Vec<Complex64>>,
    pub wind: Vec<Vec<Complex64>>,
    pub batteries: Vec<Vec<BatteryState>>,
    /// Grid active power variable (import positive), per-unit.
    pub p_grid: Vec<f64>,
    /// Reactive slack exchange evaluated at the solved voltages, per-unit.
    pub q_grid: Vec<f64>,
    /// Loss variable, per-unit.
    pub p_loss: Vec<f64>,
    /// Surrogate load power at the solved voltages, per phase-node.
    pub load_power: Vec<DVector<Complex64>>,
    /// Static-reserve deficit `real(sum loads) - p_grid`, per-unit.
    pub deficit: Vec<f64>,
    /// Energy cost over the horizon in currency units
    /// (`sum price * p_grid * base_kw * dt`).
    pub objective: f64,
    pub solver: String,
    pub iterations: usize,
    pub solve_time: Duration,
}

/// Outcome of a solve attempt: terminal status plus the schedule when (and
/// only when) the solver proved optimality at its accuracy targets.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time: Duration,
    /// Cost in currency units; present for optimal solves only.
    pub objective: Option<f64>,
    pub schedule: Option<DispatchSchedule>,
}

impl SolveReport {
    /// Convert non-optimal statuses into typed errors.
    pub fn require_optimal(self) -> Result<DispatchSchedule, ScheduleError> {
        match self.status {
            SolveStatus::Optimal => Ok(self.schedule.expect("schedule present when optimal")),
            SolveStatus::Infeasible => Err(ScheduleError::Infeasible),
            SolveStatus::Unbounded => Err(ScheduleError::Unbounded),
            SolveStatus::Inaccurate => Err(ScheduleError::InaccurateSolve),
            s => Err(ScheduleError::SolverFailure(s)),
        }
    }
}

/// Solve an assembled program through an adapter and extract trajectories.
pub fn solve(
    problem: &ScheduleProblem,
    assembled: &AssembledProgram,
    adapter: &dyn SolverAdapter,
    settings: &SolveSettings,
) -> Result<SolveReport, ScheduleError> {
    let caps = adapter.capabilities();
    for (have, need) in [
        (caps.affine_equalities, "affine equalities"),
        (caps.quadratic_inequalities, "convex quadratic inequalities"),
        (caps.second_order_cones, "second-order cones"),
    ] {
        if !have {
            return Err(ScheduleError::Adapter(AdapterError::MissingCapability {
                adapter: adapter.name().to_string(),
                missing: need,
            }));
        }
    }

    let outcome = adapter.solve(&assembled.program, settings)?;
    let schedule = if outcome.status == SolveStatus::Optimal {
        Some(extract_schedule(problem, &assembled.layout, &outcome, adapter.name()))
    } else {
        None
    };
    Ok(SolveReport {
        status: outcome.status,
        iterations: outcome.iterations,
        solve_time: outcome.solve_time,
        objective: schedule.as_ref().map(|s| s.objective),
        schedule,
    })
}

fn extract_schedule(
    problem: &ScheduleProblem,
    layout: &VarLayout,
    outcome: &SolverOutcome,
    solver: &str,
) -> DispatchSchedule {
    let x = &outcome.x;
    let horizon = layout.horizon;
    let base_kw = problem.network.base_power / 1000.0;
    let dt = problem.series.dt_hours;

    let mut voltages = Vec::with_capacity(horizon);
    let mut pv = Vec::with_capacity(horizon);
    let mut wind = Vec::with_capacity(horizon);
    let mut batteries = Vec::with_capacity(horizon);
    let mut p_grid = Vec::with_capacity(horizon);
    let mut q_grid = Vec::with_capacity(horizon);
    let mut p_loss = Vec::with_capacity(horizon);
    let mut load_power = Vec::with_capacity(horizon);
    let mut deficit = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let v = DVector::from_fn(layout.np, |i, _| {
            Complex64::new(x[layout.vx(t, i)], x[layout.vy(t, i)])
        });
        let s_zip = crate::wirtinger::aggregate_s_zip(&problem.fleet.loads, &problem.network, t);
        let loads_t = DVector::from_fn(layout.np, |i, _| {
            s_zip[i] * problem.model.loads.bracket(i, v[i])
        });

        pv.push(
            (0..layout.n_pv)
                .map(|k| Complex64::new(x[layout.pv_p(t, k)], x[layout.pv_q(t, k)]))
                .collect::<Vec<_>>(),
        );
        wind.push(
            (0..layout.n_wind)
                .map(|k| Complex64::new(x[layout.wind_p(t, k)], x[layout.wind_q(t, k)]))
                .collect::<Vec<_>>(),
        );
        batteries.push(
            (0..layout.n_bat)
                .map(|k| BatteryState {
                    s: Complex64::new(x[layout.bat_re(t, k)], x[layout.bat_im(t, k)]),
                    p_char: x[layout.bat_char(t, k)],
                    p_disch: x[layout.bat_disch(t, k)],
                    n_char: x[layout.bat_nchar(t, k)],
                    n_disch: x[layout.bat_ndisch(t, k)],
                    e: x[layout.bat_e(t, k)],
                })
                .collect::<Vec<_>>(),
        );

        let pg = x[layout.p_grid(t)];
        let s_slack = assemble::slack_power_from_solution(problem, &v);
        p_grid.push(pg);
        q_grid.push(s_slack.im);
        p_loss.push(x[layout.p_loss(t)]);
        deficit.push(loads_t.iter().map(|s| s.re).sum::<f64>() - pg);
        load_power.push(loads_t);
        voltages.push(v);
    }

    let objective = (0..horizon)
        .map(|t| problem.series.price[t] * p_grid[t] * base_kw * dt)
        .sum();

    DispatchSchedule {
        horizon,
        dt_hours: dt,
        voltages,
        pv,
        wind,
        batteries,
        p_grid,
        q_grid,
        p_loss,
        load_power,
        deficit,
        objective,
        solver: solver.to_string(),
        iterations: outcome.iterations,
        solve_time: outcome.solve_time,
    }
}
