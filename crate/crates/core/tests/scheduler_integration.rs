//! End-to-end scheduler tests on small networks: arbitrage against the
//! brute-force oracle, typed failure paths, determinism, audit behavior and
//! the model invariants (energy recursion, cones, ceilings).

use std::time::Duration;

use nalgebra::Matrix3;
use num_complex::Complex64;

use gridtc_core::scheduler::{
    assemble, assemble_with, audit_tightness, conic::LinExpr, solve, verify_against_oracle,
    AssemblyTweaks, ClarabelAdapter, FirstOrderAdapter, ScenarioOptions, ScheduleError,
    ScheduleProblem, SolveSettings, SolveStatus, SolverAdapter,
};
use gridtc_core::{
    brute_force_dispatch, build_admittance, partition, Battery, DeviceFleet, ExponentialLoad,
    HyperBranch, Hypernode, PvUnit, QuadLoss, ThreePhaseNetwork, TimeSeriesSet,
    TinyDispatchProblem, WindTurbine,
};

fn two_node_network(y: Complex64) -> ThreePhaseNetwork {
    ThreePhaseNetwork::new(
        vec![Hypernode::full(1), Hypernode::full(2)],
        vec![HyperBranch::diagonal(1, 2, y)],
        100_000.0,
        230.94,
        1.0,
    )
    .unwrap()
}

fn near_lossless_battery(node: u32) -> Battery {
    Battery::new(
        node,
        0.0,
        0.2,
        0.2,
        QuadLoss { a: 1e-9, b: 0.0, c: 0.0 },
        QuadLoss { a: 1e-9, b: 0.0, c: 0.0 },
        0.1,
        0.1,
        0.12,
    )
    .unwrap()
}

fn flat_series(horizon: usize, price: Vec<f64>) -> TimeSeriesSet {
    TimeSeriesSet::new(1.0, vec![1.0; horizon], price, vec![0.0; horizon], vec![0.0; horizon])
        .unwrap()
}

#[test]
fn toy_arbitrage_discharges_at_high_price_and_matches_brute_force() {
    // lossless line, near-lossless battery: sell everything, mostly at price 2
    let net = two_node_network(Complex64::new(0.0, -30.0));
    let fleet = DeviceFleet {
        batteries: vec![near_lossless_battery(2)],
        ..Default::default()
    };
    let series = flat_series(2, vec![1.0, 2.0]);
    let problem = ScheduleProblem::new(net, fleet, series, ScenarioOptions::default()).unwrap();
    let assembled = assemble(&problem).unwrap();
    let report = solve(&problem, &assembled, &ClarabelAdapter, &SolveSettings::default()).unwrap();
    assert_eq!(report.status, SolveStatus::Optimal);
    let schedule = report.schedule.unwrap();

    // objective in price-weight units: -(0.1 * 1 + 0.1 * 2) = -0.3
    let obj_pu: f64 = (0..2)
        .map(|t| problem.series.price[t] * schedule.p_grid[t] * schedule.dt_hours)
        .sum();
    assert!((obj_pu + 0.3).abs() <= 1e-5, "objective {obj_pu}");

    // brute force on the same instance agrees
    let part = partition(&build_admittance(&problem.network), &problem.network);
    let bf = brute_force_dispatch(&TinyDispatchProblem {
        net: &problem.network,
        part: &part,
        loads: &[],
        battery: Some(&problem.fleet.batteries[0]),
        price: &[1.0, 2.0],
        dt_hours: 1.0,
        grid_step: 0.005,
    })
    .unwrap();
    let step_cost_bound = 0.005 * (1.0 + 2.0); // one grid step worth of objective
    let tol = (0.01 * bf.objective.abs()).max(step_cost_bound);
    assert!(
        (obj_pu - bf.objective).abs() <= tol,
        "convex {obj_pu} vs brute force {}",
        bf.objective
    );
    // the relaxation may undercut the true optimum only within its gap
    assert!(obj_pu >= bf.objective - tol);

    // lossless toy: every relaxation gap is zero
    let tight = audit_tightness(&schedule, &problem);
    assert!(tight.max_loss_gap <= 1e-6, "loss gap {}", tight.max_loss_gap);
    assert!(tight.max_grid_gap <= 1e-6, "grid gap {}", tight.max_grid_gap);
    assert!(tight.max_battery_gap <= 1e-6, "battery gap {}", tight.max_battery_gap);
    assert!(tight.max_simultaneous <= 1e-6);
}

#[test]
fn adapters_agree_on_the_toy_problem() {
    let net = two_node_network(Complex64::new(2.0, -12.0));
    let fleet = DeviceFleet {
        batteries: vec![near_lossless_battery(2)],
        loads: vec![ExponentialLoad::new(
            2,
            1.0,
            vec![Complex64::new(0.05, 0.01); 2],
            [0.4, 0.3, 0.3],
        )
        .unwrap()],
        ..Default::default()
    };
    let series = flat_series(2, vec![1.0, 2.0]);
    let problem = ScheduleProblem::new(net, fleet, series, ScenarioOptions::default()).unwrap();
    let assembled = assemble(&problem).unwrap();

    let ip = solve(&problem, &assembled, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    let fo_settings = SolveSettings { tolerance: 1e-8, max_iterations: 100_000, verbose: false };
    let fo = solve(&problem, &assembled, &FirstOrderAdapter::default(), &fo_settings).unwrap();
    match fo.status {
        SolveStatus::Optimal => {
            let fo_sched = fo.schedule.unwrap();
            let denom = ip.objective.abs().max(1.0);
            assert!(
                (ip.objective - fo_sched.objective).abs() / denom <= 1e-5,
                "clarabel {} vs admm {}",
                ip.objective,
                fo_sched.objective
            );
        }
        // a first-order method may stop at reduced accuracy; it must say so
        SolveStatus::Inaccurate | SolveStatus::IterationLimit => {}
        s => panic!("unexpected admm status {s}"),
    }
}

#[test]
fn islanding_with_undersized_batteries_is_infeasible() {
    // 1.0 pu flat load, batteries can hold 0.5 pu h total, grid import forced
    // to zero: the reserve cannot be met.
    let net = two_node_network(Complex64::new(4.0, -16.0));
    let fleet = DeviceFleet {
        batteries: vec![Battery::new(
            2,
            0.1,
            0.5,
            0.5,
            QuadLoss { a: 0.05, b: 0.0, c: 0.0 },
            QuadLoss { a: 0.05, b: 0.0, c: 0.0 },
            0.3,
            0.3,
            0.35,
        )
        .unwrap()],
        loads: vec![ExponentialLoad::new(
            2,
            0.0,
            vec![Complex64::new(1.0, 0.0); 2],
            [0.34, 0.33, 0.33],
        )
        .unwrap()],
        ..Default::default()
    };
    let series = flat_series(2, vec![1.0, 1.0]);
    let options = ScenarioOptions {
        reserve_enabled: true,
        reserve_tau_hours: 1.0,
        ..Default::default()
    };
    let problem = ScheduleProblem::new(net, fleet, series, options).unwrap();
    let mut assembled = assemble(&problem).unwrap();
    // island the microgrid: p_grid_t = 0
    for t in 0..2 {
        assembled
            .program
            .equalities
            .push(LinExpr::term(assembled.layout.p_grid(t), 1.0));
    }
    let err = solve(&problem, &assembled, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap_err();
    assert!(matches!(err, ScheduleError::Infeasible), "got {err}");
}

#[test]
fn reserve_without_batteries_is_a_configuration_error() {
    let net = two_node_network(Complex64::new(4.0, -16.0));
    let fleet = DeviceFleet::default();
    let series = flat_series(2, vec![1.0, 1.0]);
    let options = ScenarioOptions { reserve_enabled: true, ..Default::default() };
    let problem = ScheduleProblem::new(net, fleet, series, options).unwrap();
    assert!(matches!(
        assemble(&problem),
        Err(ScheduleError::ReserveWithoutBatteries)
    ));
}

#[test]
fn assembly_and_solve_are_deterministic() {
    let net = two_node_network(Complex64::new(3.0, -9.0));
    let fleet = DeviceFleet {
        batteries: vec![Battery::new(
            2,
            0.0,
            0.2,
            0.2,
            QuadLoss { a: 0.05, b: 0.01, c: 1e-4 },
            QuadLoss { a: 0.05, b: 0.01, c: 1e-4 },
            0.1,
            0.1,
            0.12,
        )
        .unwrap()],
        loads: vec![ExponentialLoad::new(
            2,
            2.0,
            vec![Complex64::new(0.08, 0.02); 3],
            [0.5, 0.25, 0.25],
        )
        .unwrap()],
        ..Default::default()
    };
    let series = flat_series(3, vec![1.0, 1.5, 0.8]);
    let problem = ScheduleProblem::new(net, fleet, series, ScenarioOptions::default()).unwrap();

    let a1 = assemble(&problem).unwrap();
    let a2 = assemble(&problem).unwrap();
    assert_eq!(a1.program.stats(), a2.program.stats());

    let s1 = solve(&problem, &a1, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    let s2 = solve(&problem, &a2, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    let denom = s1.objective.abs().max(1e-12);
    assert!((s1.objective - s2.objective).abs() / denom <= 1e-9);
}

#[test]
fn loss_bound_offset_shows_up_in_the_audit() {
    let net = two_node_network(Complex64::new(3.0, -9.0));
    let fleet = DeviceFleet {
        loads: vec![ExponentialLoad::new(
            2,
            0.0,
            vec![Complex64::new(0.1, 0.02); 2],
            [0.4, 0.3, 0.3],
        )
        .unwrap()],
        ..Default::default()
    };
    let series = flat_series(2, vec![1.0, 1.0]);
    let problem = ScheduleProblem::new(net, fleet, series, ScenarioOptions::default()).unwrap();

    let clean = assemble(&problem).unwrap();
    let clean_schedule = solve(&problem, &clean, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    let clean_audit = audit_tightness(&clean_schedule, &problem);
    assert!(clean_audit.passes(1e-4, 1e-6), "clean loss gap {}", clean_audit.max_loss_gap);

    let offset = 0.01;
    let tweaked =
        assemble_with(&problem, &AssemblyTweaks { loss_bound_offset: offset }).unwrap();
    let schedule = solve(&problem, &tweaked, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    let audit = audit_tightness(&schedule, &problem);
    assert!(!audit.passes(1e-4, 1e-6), "offset audit should flag");
    assert!(
        (audit.max_loss_gap - offset).abs() <= 1e-4,
        "expected gap near {offset}, got {}",
        audit.max_loss_gap
    );
}

#[test]
fn case2_never_exports_even_when_surplus_is_free() {
    let net = two_node_network(Complex64::new(0.0, -30.0));
    let fleet = DeviceFleet {
        batteries: vec![near_lossless_battery(2)],
        ..Default::default()
    };
    let series = flat_series(2, vec![1.0, 2.0]);
    let options = ScenarioOptions { surplus_allowed: false, ..Default::default() };
    let problem = ScheduleProblem::new(net, fleet, series, options).unwrap();
    let assembled = assemble(&problem).unwrap();
    let schedule = solve(&problem, &assembled, &ClarabelAdapter, &SolveSettings::default())
        .unwrap()
        .require_optimal()
        .unwrap();
    for t in 0..2 {
        assert!(
            schedule.p_grid[t] >= -1e-6,
            "period {t} exports {}",
            schedule.p_grid[t]
        );
    }
}

/// Three-bus microgrid with PV, wind, battery and an unbalanced load.
fn small_microgrid() -> ScheduleProblem {
    let mut coupling = Matrix3::from_diagonal_element(Complex64::new(8.0, -20.0));
    for p in 0..3 {
        for q in (p + 1)..3 {
            coupling[(p, q)] = Complex64::new(-0.4, 0.12);
            coupling[(q, p)] = Complex64::new(-0.4, 0.12);
        }
    }
    let net = ThreePhaseNetwork::new(
        vec![Hypernode::full(1), Hypernode::full(2), Hypernode::full(3)],
        vec![
            HyperBranch::new(1, 2, coupling),
            HyperBranch::diagonal(2, 3, Complex64::new(6.0, -14.0)),
        ],
        100_000.0,
        230.94,
        1.0,
    )
    .unwrap();
    let fleet = DeviceFleet {
        loads: vec![ExponentialLoad::new(
            3,
            1.0,
            vec![
                Complex64::new(0.30, 0.08),
                Complex64::new(0.40, 0.10),
                Complex64::new(0.36, 0.09),
                Complex64::new(0.25, 0.06),
            ],
            [0.45, 0.35, 0.2],
        )
        .unwrap()],
        pv_units: vec![PvUnit::new(2, 0.2, 0.25).unwrap()],
        wind_turbines: vec![WindTurbine::new(3, 0.15, 12.0, 25.0, 0.18).unwrap()],
        batteries: vec![Battery::new(
            3,
            0.05,
            0.25,
            0.15,
            QuadLoss { a: 0.3, b: 0.02, c: 2e-4 },
            QuadLoss { a: 0.3, b: 0.02, c: 2e-4 },
            0.1,
            0.1,
            0.12,
        )
        .unwrap()],
    };
    let series = TimeSeriesSet::new(
        1.0,
        vec![0.75, 1.0, 0.9, 0.6],
        vec![0.10, 0.13, 0.11, 0.10],
        vec![0.3, 1.0, 0.6, 0.0],
        vec![9.0, 12.0, 7.0, 11.0],
    )
    .unwrap();
    let options = ScenarioOptions {
        reserve_enabled: true,
        reserve_tau_hours: 0.25,
        ..Default::default()
    };
    ScheduleProblem::new(net, fleet, series, options).unwrap()
}

#[test]
fn small_microgrid_solution_honors_every_model_invariant() {
    let problem = small_microgrid();
    let assembled = assemble(&problem).unwrap();
    let report = solve(&problem, &assembled, &ClarabelAdapter, &SolveSettings::default()).unwrap();
    assert_eq!(report.status, SolveStatus::Optimal);
    assert!(report.solve_time < Duration::from_secs(5));
    let schedule = report.schedule.unwrap();
    let horizon = schedule.horizon;
    let dt = schedule.dt_hours;
    let fleet = &problem.fleet;

    for t in 0..horizon {
        // availability ceilings (case 1 takes everything that is free)
        let psi = problem.series.irradiance[t];
        let pv_cap = gridtc_core::pv_bound(&fleet.pv_units[0], psi).unwrap();
        let pv_p = schedule.pv[t][0].re;
        assert!(pv_p <= pv_cap + 1e-7, "pv above availability at {t}");
        assert!(pv_p >= -1e-8);
        assert!(
            (pv_p - pv_cap).abs() <= 1e-3 * pv_cap.max(1e-6),
            "pv should ride its ceiling at {t}: {pv_p} vs {pv_cap}"
        );

        let w_cap = gridtc_core::wind_bound(&fleet.wind_turbines[0], problem.series.wind_speed[t]);
        let w_p = schedule.wind[t][0].re;
        assert!(w_p <= w_cap + 1e-7);
        assert!(
            (w_p - w_cap).abs() <= 1e-3 * w_cap.max(1e-6),
            "wind should ride its ceiling at {t}: {w_p} vs {w_cap}"
        );

        // converter cones
        assert!(schedule.pv[t][0].norm() <= fleet.pv_units[0].s_max + 1e-8);
        assert!(schedule.wind[t][0].norm() <= fleet.wind_turbines[0].s_max + 1e-8);
        assert!(schedule.batteries[t][0].s.norm() <= fleet.batteries[0].s_max + 1e-8);

        // voltage cones
        for (i, np) in problem.network.n_phases().iter().enumerate() {
            let center = problem.network.v_nom * np.phase.unit_phasor();
            let dev = (schedule.voltages[t][i] - center).norm();
            assert!(
                dev <= problem.options.delta_v * problem.network.v_nom + 1e-8,
                "voltage cone violated at t={t} phase-node {i}: {dev}"
            );
        }

        // battery SOC band and exact energy recursion
        let st = &schedule.batteries[t][0];
        let bat = &fleet.batteries[0];
        assert!(st.e >= bat.e_min - 1e-7 && st.e <= bat.e_max + 1e-7);
        let prev = if t == 0 { bat.e_init } else { schedule.batteries[t - 1][0].e };
        let step = (st.p_char - st.n_char - st.p_disch - st.n_disch) * dt;
        assert!(
            (st.e - prev - step).abs() <= 1e-7,
            "energy recursion broken at {t}: {} vs {}",
            st.e - prev,
            step
        );

        // static reserve
        let stored = st.e;
        let needed = schedule.deficit[t] * problem.options.reserve_tau_hours;
        assert!(stored >= needed - 1e-6, "reserve violated at {t}");
    }

    // relaxation is tight and the oracle agrees with the surrogate
    let tight = audit_tightness(&schedule, &problem);
    assert!(
        tight.passes(1e-4, 1e-6),
        "gaps: loss {} grid {} battery {} simultaneous {}",
        tight.max_loss_gap,
        tight.max_grid_gap,
        tight.max_battery_gap,
        tight.max_simultaneous
    );
    let oracle = verify_against_oracle(&schedule, &problem).unwrap();
    assert!(oracle.all_converged);
    assert!(
        oracle.max_voltage_error <= 1e-3,
        "linearization error {}",
        oracle.max_voltage_error
    );
    assert!(oracle.max_conservation_residual <= 1e-6);
}

#[test]
fn capability_gate_rejects_limited_adapters() {
    struct NoCones;
    impl SolverAdapter for NoCones {
        fn name(&self) -> &'static str {
            "no-cones"
        }
        fn capabilities(&self) -> gridtc_core::scheduler::Capabilities {
            gridtc_core::scheduler::Capabilities {
                affine_equalities: true,
                quadratic_inequalities: false,
                second_order_cones: false,
            }
        }
        fn solve(
            &self,
            _: &gridtc_core::scheduler::ConicProgram,
            _: &SolveSettings,
        ) -> Result<gridtc_core::scheduler::SolverOutcome, gridtc_core::scheduler::AdapterError>
        {
            unreachable!("capability gate fires first")
        }
    }
    let problem = small_microgrid();
    let assembled = assemble(&problem).unwrap();
    let err = solve(&problem, &assembled, &NoCones, &SolveSettings::default()).unwrap_err();
    assert!(matches!(err, ScheduleError::Adapter(_)));
}
