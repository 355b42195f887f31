//! Result export: one CSV per figure-analog plus a structured metadata
//! document. Exports are byte-stable for identical inputs, and every power
//! column is re-checked against the model invariants before anything is
//! written. Power columns are in watts, stored energy in watt-hours,
//! voltages in per-unit.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use gridtc_core::scheduler::{OracleAudit, TightnessReport};
use gridtc_core::{pv_bound, wind_bound, DispatchSchedule, ScheduleProblem};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schedule violates `{invariant}` at period {t}: {detail}")]
    InvariantViolated { invariant: &'static str, t: usize, detail: String },
}

/// Everything that ends up in `metadata.json`.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub bundle: String,
    pub command: String,
    pub case: u8,
    pub delta_v: f64,
    pub reserve_enabled: bool,
    pub reserve_tau_hours: f64,
    pub horizon: usize,
    pub dt_hours: f64,
    pub solver: String,
    pub status: String,
    pub iterations: usize,
    pub solve_time_s: f64,
    pub total_time_s: f64,
    pub objective_usd: f64,
    pub program_variables: usize,
    pub program_equalities: usize,
    pub program_inequalities: usize,
    pub program_quadratic_constraints: usize,
    pub program_second_order_cones: usize,
    pub max_loss_gap_pu: f64,
    pub max_grid_gap_pu: f64,
    pub max_battery_gap_pu: f64,
    pub max_simultaneous_pu: f64,
    pub oracle_converged: bool,
    pub max_voltage_error_pu: f64,
    pub max_grid_power_error_pu: f64,
    pub max_conservation_residual_pu: f64,
    pub seed: Option<u64>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), ExportError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|source| ExportError::Io { path, source })
}

/// Re-check the exported quantities against the model invariants.
fn recheck(schedule: &DispatchSchedule, problem: &ScheduleProblem) -> Result<(), ExportError> {
    let fleet = &problem.fleet;
    for t in 0..schedule.horizon {
        for (k, pv) in fleet.pv_units.iter().enumerate() {
            let cap = pv_bound(pv, problem.series.irradiance[t]).unwrap_or(0.0);
            let p = schedule.pv[t][k].re;
            if p > cap + 1e-6 || p < -1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "pv availability ceiling",
                    t,
                    detail: format!("dispatch {p} vs bound {cap}"),
                });
            }
            if schedule.pv[t][k].norm() > pv.s_max + 1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "pv converter cone",
                    t,
                    detail: format!("|s| = {}", schedule.pv[t][k].norm()),
                });
            }
        }
        for (k, wt) in fleet.wind_turbines.iter().enumerate() {
            let cap = wind_bound(wt, problem.series.wind_speed[t]);
            let p = schedule.wind[t][k].re;
            if p > cap + 1e-6 || p < -1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "wind availability ceiling",
                    t,
                    detail: format!("dispatch {p} vs bound {cap}"),
                });
            }
            if schedule.wind[t][k].norm() > wt.s_max + 1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "wind converter cone",
                    t,
                    detail: format!("|s| = {}", schedule.wind[t][k].norm()),
                });
            }
        }
        for (k, bat) in fleet.batteries.iter().enumerate() {
            let st = &schedule.batteries[t][k];
            if st.e < bat.e_min - 1e-6 || st.e > bat.e_max + 1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "battery energy band",
                    t,
                    detail: format!("e = {}", st.e),
                });
            }
            if st.s.norm() > bat.s_max + 1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "battery converter cone",
                    t,
                    detail: format!("|s| = {}", st.s.norm()),
                });
            }
        }
        let delta = problem.options.delta_v * problem.network.v_nom;
        for (i, np) in problem.network.n_phases().iter().enumerate() {
            let center = problem.network.v_nom * np.phase.unit_phasor();
            let dev = (schedule.voltages[t][i] - center).norm();
            if dev > delta + 1e-6 {
                return Err(ExportError::InvariantViolated {
                    invariant: "voltage cone",
                    t,
                    detail: format!("deviation {dev} at phase-node {i}"),
                });
            }
        }
    }
    Ok(())
}

/// Write the full result bundle into `dir` (created if missing).
pub fn export_results(
    schedule: &DispatchSchedule,
    problem: &ScheduleProblem,
    tightness: &TightnessReport,
    oracle: &OracleAudit,
    meta: &RunMetadata,
    dir: &Path,
) -> Result<(), ExportError> {
    recheck(schedule, problem)?;
    std::fs::create_dir_all(dir).map_err(|source| ExportError::Io { path: dir.into(), source })?;

    let s_base = problem.network.base_power;
    let horizon = schedule.horizon;
    let fleet = &problem.fleet;

    let mut grid = String::from("t,value\n");
    let mut cost = String::from("t,value\n");
    let mut prices = String::from("t,value\n");
    let mut demand = String::from("t,value\n");
    for t in 0..horizon {
        let _ = writeln!(grid, "{t},{}", num(schedule.p_grid[t] * s_base));
        let _ = writeln!(
            cost,
            "{t},{}",
            num(problem.series.price[t] * schedule.p_grid[t] * s_base / 1000.0
                * schedule.dt_hours)
        );
        let _ = writeln!(prices, "{t},{}", num(problem.series.price[t]));
        let total_load: f64 = schedule.load_power[t].iter().map(|s| s.re).sum();
        let _ = writeln!(demand, "{t},{}", num(total_load * s_base));
    }

    let mut pv = String::from("t,value,node,device\n");
    for t in 0..horizon {
        for (k, unit) in fleet.pv_units.iter().enumerate() {
            let cap = pv_bound(unit, problem.series.irradiance[t]).unwrap_or(0.0);
            let _ = writeln!(pv, "{t},{},{},dispatch", num(schedule.pv[t][k].re * s_base), unit.node);
            let _ = writeln!(pv, "{t},{},{},availability", num(cap * s_base), unit.node);
        }
    }

    let mut wind = String::from("t,value,node,device\n");
    for t in 0..horizon {
        for (k, unit) in fleet.wind_turbines.iter().enumerate() {
            let cap = wind_bound(unit, problem.series.wind_speed[t]);
            let _ = writeln!(
                wind,
                "{t},{},{},dispatch",
                num(schedule.wind[t][k].re * s_base),
                unit.node
            );
            let _ = writeln!(wind, "{t},{},{},availability", num(cap * s_base), unit.node);
        }
    }

    let mut soc = String::from("t,value,node\n");
    for t in 0..horizon {
        for (k, bat) in fleet.batteries.iter().enumerate() {
            let _ = writeln!(soc, "{t},{},{}", num(schedule.batteries[t][k].e * s_base), bat.node);
        }
    }

    let mut voltages = String::from("t,value,phase,node\n");
    for t in 0..horizon {
        for (i, np) in problem.network.n_phases().iter().enumerate() {
            let _ = writeln!(
                voltages,
                "{t},{},{},{}",
                num(schedule.voltages[t][i].norm()),
                np.phase,
                problem.network.nodes()[np.node].id
            );
        }
    }

    write_file(dir, "grid_exchange.csv", &grid)?;
    write_file(dir, "cost.csv", &cost)?;
    write_file(dir, "prices.csv", &prices)?;
    write_file(dir, "demand.csv", &demand)?;
    write_file(dir, "pv.csv", &pv)?;
    write_file(dir, "wind.csv", &wind)?;
    write_file(dir, "soc.csv", &soc)?;
    write_file(dir, "voltages.csv", &voltages)?;

    let _ = (tightness, oracle); // summarized inside `meta`
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    write_file(dir, "metadata.json", &format!("{json}\n"))?;
    Ok(())
}
