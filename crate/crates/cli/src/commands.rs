//! Command implementations behind the CLI: validate, powerflow, schedule,
//! compare. Each returns a process exit code; failure classes are
//! parse = 2, infeasible = 3, solver failure = 4, audit failure = 5.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;

use gridtc_core::scheduler::{
    assemble, audit_tightness, solve, verify_against_oracle, AssembledProgram, ClarabelAdapter,
    FirstOrderAdapter, SolveSettings, SolveStatus, SolverAdapter,
};
use gridtc_core::{
    grid_power, solve_power_flow, total_losses, PowerFlowSettings, ScheduleError, ScheduleProblem,
};

use crate::bundle::CaseBundle;
use crate::export::{export_results, ExportError, RunMetadata};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_AUDIT: i32 = 5;

/// Audit gates for the `schedule` command.
const GAP_TOL: f64 = 1e-4;
const COMPLEMENTARITY_TOL: f64 = 1e-6;

/// Flag overrides shared by `schedule` and `compare`.
#[derive(Debug, Clone, Default)]
pub struct ScheduleFlags {
    pub case: Option<u8>,
    pub delta: Option<f64>,
    /// Presence enables the static reserve with this duration (hours).
    pub reserve_tau: Option<f64>,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub solver: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn adapter_by_name(name: &str) -> Option<Box<dyn SolverAdapter>> {
    match name {
        "clarabel" => Some(Box::new(ClarabelAdapter)),
        "admm" => Some(Box::new(FirstOrderAdapter::default())),
        _ => None,
    }
}

pub const ALL_ADAPTERS: [&str; 2] = ["clarabel", "admm"];

fn settings_for(name: &str) -> SolveSettings {
    match name {
        // operator splitting buys speed per iteration with many iterations
        "admm" => SolveSettings { tolerance: 1e-8, max_iterations: 5_000, verbose: false },
        _ => SolveSettings::default(),
    }
}

/// Apply flag overrides to a loaded bundle and build the schedule problem.
pub fn build_problem(
    bundle: &CaseBundle,
    flags: &ScheduleFlags,
) -> Result<ScheduleProblem, ScheduleError> {
    let mut fleet = bundle.fleet.clone();
    let mut series = bundle.series.clone();
    let mut scenario = bundle.scenario.clone();

    if let Some(case) = flags.case {
        scenario.surplus_allowed = case == 1;
    }
    if let Some(d) = flags.delta {
        scenario.delta_v = d;
    }
    if let Some(tau) = flags.reserve_tau {
        scenario.reserve_enabled = true;
        scenario.reserve_tau_hours = tau;
    }
    if let Some(h) = flags.horizon {
        let h = h.min(series.horizon);
        series.horizon = h;
        series.demand_scale.truncate(h);
        series.price.truncate(h);
        series.irradiance.truncate(h);
        series.wind_speed.truncate(h);
        for load in &mut fleet.loads {
            load.s_zip.truncate(h);
        }
    }
    if let Some(dt) = flags.dt {
        series.dt_hours = dt;
    }

    ScheduleProblem::new(bundle.network.clone(), fleet, series, scenario)
}

pub fn cmd_validate(bundle: &CaseBundle) -> i32 {
    let problem = match build_problem(bundle, &ScheduleFlags::default()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid bundle: {e}");
            return EXIT_PARSE;
        }
    };
    let assembled = match assemble(&problem) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("invalid bundle: {e}");
            return EXIT_PARSE;
        }
    };
    let stats = assembled.program.stats();
    println!("bundle `{}` is valid", bundle.name);
    println!(
        "  network: {} hypernodes, {} hyperbranches, {} phase-node variables",
        bundle.network.num_nodes(),
        bundle.network.branches().len(),
        bundle.network.n_dim()
    );
    println!(
        "  fleet: {} loads, {} pv, {} wind, {} batteries",
        bundle.fleet.loads.len(),
        bundle.fleet.pv_units.len(),
        bundle.fleet.wind_turbines.len(),
        bundle.fleet.batteries.len()
    );
    println!("  horizon: {} x {} h", problem.series.horizon, problem.series.dt_hours);
    println!(
        "  program: {} variables, {} equalities, {} inequalities, {} quadratic, {} cones",
        stats.variables,
        stats.equalities,
        stats.inequalities,
        stats.quadratic_constraints,
        stats.second_order_cones
    );
    EXIT_OK
}

pub fn cmd_powerflow(bundle: &CaseBundle, hour: Option<usize>, scale: f64) -> i32 {
    let problem = match build_problem(bundle, &ScheduleFlags::default()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid bundle: {e}");
            return EXIT_PARSE;
        }
    };
    let t = hour.unwrap_or_else(|| {
        // default: the peak-demand period
        problem
            .series
            .demand_scale
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    });
    if t >= problem.series.horizon {
        eprintln!("hour {t} outside horizon {}", problem.series.horizon);
        return EXIT_PARSE;
    }

    let n = problem.network.n_dim();
    let inj = gridtc_core::oracle::injection_evaluator(
        &problem.network,
        &problem.fleet.loads,
        t,
        scale,
        DVector::from_element(n, Complex64::ZERO),
    );
    let sol = match solve_power_flow(
        &problem.partition,
        &problem.v_slack,
        &problem.network.flat_n_voltage(),
        &inj,
        &PowerFlowSettings::default(),
    ) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("power flow failed: {e}");
            return EXIT_SOLVER;
        }
    };
    if !sol.converged {
        eprintln!(
            "power flow did not converge ({} iterations, residual {:.3e})",
            sol.iterations, sol.residual
        );
        return EXIT_SOLVER;
    }

    let s_base = problem.network.base_power;
    let vmin = sol.v_n.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    let vmax = sol.v_n.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let losses = total_losses(&problem.partition, &problem.v_slack, &sol.v_n);
    let pg = grid_power(&problem.partition, &problem.v_slack, &sol.v_n);
    println!("power flow snapshot at hour {t} (load scale {scale})");
    println!("  converged in {} iterations, residual {:.3e} pu", sol.iterations, sol.residual);
    println!("  voltage magnitude range: [{vmin:.6}, {vmax:.6}] pu");
    println!("  losses: {:.3} W", losses * s_base);
    println!("  grid power: {:.3} W + j {:.3} var", pg.re * s_base, pg.im * s_base);
    EXIT_OK
}

pub struct ScheduleOutcome {
    pub exit: i32,
    pub objective: Option<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub solve_time_s: f64,
}

pub fn cmd_schedule(bundle: &CaseBundle, flags: &ScheduleFlags) -> i32 {
    run_schedule(bundle, flags, true).exit
}

pub fn run_schedule(bundle: &CaseBundle, flags: &ScheduleFlags, chatty: bool) -> ScheduleOutcome {
    let t_start = Instant::now();
    let fail = |exit: i32, status: SolveStatus| ScheduleOutcome {
        exit,
        objective: None,
        status,
        iterations: 0,
        solve_time_s: 0.0,
    };

    let problem = match build_problem(bundle, flags) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid bundle: {e}");
            return fail(EXIT_PARSE, SolveStatus::NumericalFailure);
        }
    };
    let assembled: AssembledProgram = match assemble(&problem) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("assembly failed: {e}");
            return fail(EXIT_PARSE, SolveStatus::NumericalFailure);
        }
    };

    let solver_name = flags.solver.clone().unwrap_or_else(|| "clarabel".into());
    let adapter = match adapter_by_name(&solver_name) {
        Some(a) => a,
        None => {
            eprintln!("unknown solver `{solver_name}` (available: {})", ALL_ADAPTERS.join(", "));
            return fail(EXIT_PARSE, SolveStatus::NumericalFailure);
        }
    };

    let report = match solve(&problem, &assembled, adapter.as_ref(), &settings_for(&solver_name)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("solve failed: {e}");
            return fail(EXIT_SOLVER, SolveStatus::NumericalFailure);
        }
    };
    let (iterations, solve_time_s) = (report.iterations, report.solve_time.as_secs_f64());
    let schedule = match report.status {
        SolveStatus::Optimal => report.schedule.expect("optimal implies schedule"),
        SolveStatus::Infeasible => {
            eprintln!("problem is infeasible");
            return fail(EXIT_INFEASIBLE, SolveStatus::Infeasible);
        }
        SolveStatus::Unbounded => {
            eprintln!("problem is unbounded");
            return fail(EXIT_SOLVER, SolveStatus::Unbounded);
        }
        status => {
            eprintln!("solver `{solver_name}` did not reach optimality: {status}");
            return ScheduleOutcome {
                exit: EXIT_SOLVER,
                objective: None,
                status,
                iterations,
                solve_time_s,
            };
        }
    };

    let tightness = audit_tightness(&schedule, &problem);
    let oracle = match verify_against_oracle(&schedule, &problem) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("oracle audit failed: {e}");
            return fail(EXIT_AUDIT, SolveStatus::Optimal);
        }
    };

    if chatty {
        println!(
            "status {}  iterations {}  solve {:.3} s  cost {:.4} $",
            report.status, iterations, solve_time_s, schedule.objective
        );
        println!(
            "tightness: loss gap {:.3e}  grid gap {:.3e}  battery gap {:.3e}  simultaneous {:.3e}",
            tightness.max_loss_gap,
            tightness.max_grid_gap,
            tightness.max_battery_gap,
            tightness.max_simultaneous
        );
        println!(
            "oracle: converged {}  max voltage error {:.3e} pu  max conservation residual {:.3e} pu",
            oracle.all_converged, oracle.max_voltage_error, oracle.max_conservation_residual
        );
    }

    let audit_ok = tightness.passes(GAP_TOL, COMPLEMENTARITY_TOL) && oracle.all_converged;

    if let Some(dir) = &flags.out {
        let stats = assembled.program.stats();
        let meta = RunMetadata {
            bundle: bundle.name.clone(),
            command: "schedule".into(),
            case: if problem.options.surplus_allowed { 1 } else { 2 },
            delta_v: problem.options.delta_v,
            reserve_enabled: problem.options.reserve_enabled,
            reserve_tau_hours: problem.options.reserve_tau_hours,
            horizon: schedule.horizon,
            dt_hours: schedule.dt_hours,
            solver: solver_name.clone(),
            status: report.status.to_string(),
            iterations,
            solve_time_s,
            total_time_s: t_start.elapsed().as_secs_f64(),
            objective_usd: schedule.objective,
            program_variables: stats.variables,
            program_equalities: stats.equalities,
            program_inequalities: stats.inequalities,
            program_quadratic_constraints: stats.quadratic_constraints,
            program_second_order_cones: stats.second_order_cones,
            max_loss_gap_pu: tightness.max_loss_gap,
            max_grid_gap_pu: tightness.max_grid_gap,
            max_battery_gap_pu: tightness.max_battery_gap,
            max_simultaneous_pu: tightness.max_simultaneous,
            oracle_converged: oracle.all_converged,
            max_voltage_error_pu: oracle.max_voltage_error,
            max_grid_power_error_pu: oracle.max_grid_power_error,
            max_conservation_residual_pu: oracle.max_conservation_residual,
            seed: flags.seed,
        };
        match export_results(&schedule, &problem, &tightness, &oracle, &meta, dir) {
            Ok(()) => {
                if chatty {
                    println!("results written to {}", dir.display());
                }
            }
            Err(e @ ExportError::InvariantViolated { .. }) => {
                eprintln!("export re-check failed: {e}");
                return fail(EXIT_AUDIT, SolveStatus::Optimal);
            }
            Err(e) => {
                eprintln!("{e}");
                return fail(EXIT_SOLVER, SolveStatus::Optimal);
            }
        }
    }

    if !audit_ok {
        eprintln!(
            "audit failure: gaps (loss {:.3e}, grid {:.3e}, battery {:.3e}, simultaneous {:.3e}), oracle converged: {}",
            tightness.max_loss_gap,
            tightness.max_grid_gap,
            tightness.max_battery_gap,
            tightness.max_simultaneous,
            oracle.all_converged
        );
        return ScheduleOutcome {
            exit: EXIT_AUDIT,
            objective: Some(schedule.objective),
            status: report.status,
            iterations,
            solve_time_s,
        };
    }

    ScheduleOutcome {
        exit: EXIT_OK,
        objective: Some(schedule.objective),
        status: report.status,
        iterations,
        solve_time_s,
    }
}

pub fn cmd_compare(bundle: &CaseBundle, flags: &ScheduleFlags) -> i32 {
    let case = flags.case.unwrap_or(if bundle.scenario.surplus_allowed { 1 } else { 2 });
    println!("case,solver,execution_time_s,iterations,operative_cost_usd,status");
    let mut optimal: Vec<(String, f64)> = Vec::new();
    let mut any_failure = false;
    for name in ALL_ADAPTERS {
        let mut f = flags.clone();
        f.solver = Some(name.to_string());
        f.out = None;
        let outcome = run_schedule(bundle, &f, false);
        let cost = outcome
            .objective
            .map(|c| format!("{c:.4}"))
            .unwrap_or_default();
        println!(
            "{case},{name},{:.3},{},{},{}",
            outcome.solve_time_s, outcome.iterations, cost, outcome.status
        );
        if outcome.status == SolveStatus::Optimal {
            if let Some(obj) = outcome.objective {
                optimal.push((name.to_string(), obj));
            }
        }
        if outcome.exit != EXIT_OK
            && !matches!(outcome.status, SolveStatus::Inaccurate | SolveStatus::IterationLimit)
        {
            any_failure = true;
        }
    }

    if optimal.is_empty() {
        eprintln!("no adapter reached optimality");
        return EXIT_SOLVER;
    }
    let reference = optimal[0].1;
    for (name, obj) in &optimal[1..] {
        let rel = (obj - reference).abs() / reference.abs().max(1.0);
        if rel > 1e-6 {
            eprintln!(
                "adapter disagreement: {} differs from {} by {rel:.3e} relative",
                name, optimal[0].0
            );
            return EXIT_AUDIT;
        }
    }
    println!(
        "# {} adapter(s) optimal, objectives agree to 1e-6 relative",
        optimal.len()
    );
    if any_failure {
        EXIT_SOLVER
    } else {
        EXIT_OK
    }
}
