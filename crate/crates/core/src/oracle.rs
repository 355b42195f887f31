//! Exact reference computations: a nonlinear unbalanced power-flow solver
//! (Z-bus fixed point) and a brute-force dispatcher for tiny instances.
//!
//! Both exist to validate the affine surrogate and the convex relaxation;
//! neither is used inside the optimization model.

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::devices::{battery_loss, load_power_exact, Battery, BatteryMode, ExponentialLoad};
use crate::network::{grid_power, AdmittancePartition, Phase, ThreePhaseNetwork};
use crate::wirtinger::{solve_linear_flow, LinearFlowModel};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("Ynn is singular; the network partition cannot be solved")]
    SingularYnn,
    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("brute-force budget exceeded: {0} sequence evaluations > 1e7")]
    BudgetExceeded(f64),
    #[error("brute-force grid step {step} exceeds 0.05 * p_max = {limit}")]
    StepTooCoarse { step: f64, limit: f64 },
    #[error("no feasible battery sequence found")]
    NoFeasibleSequence,
    #[error(transparent)]
    Wirtinger(#[from] crate::wirtinger::WirtingerError),
}

/// Result of one nonlinear power-flow solve.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub v_n: DVector<Complex64>,
    pub iterations: usize,
    /// Max power mismatch over phase-nodes, per-unit.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct PowerFlowSettings {
    pub tol_voltage: f64,
    pub tol_power: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowSettings {
    fn default() -> Self {
        PowerFlowSettings { tol_voltage: 1e-10, tol_power: 1e-8, max_iter: 100 }
    }
}

/// Solve the exact power flow by the Z-bus fixed point
/// `V <- Ynn^{-1} (I(V) - Yns Vs)` with `I(V) = conj(S(V) / V)` entrywise.
///
/// `injections(V)` returns the net complex power at every non-slack
/// phase-node (generation positive), including any voltage-dependent loads
/// evaluated with the exact exponential model.
pub fn solve_power_flow<F>(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    v_start: &DVector<Complex64>,
    injections: F,
    settings: &PowerFlowSettings,
) -> Result<PowerFlowSolution, OracleError>
where
    F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let n = part.n_dim();
    let lu = part.ynn.clone().lu();
    let slack_current = &part.yns * v_s;

    let mut v = v_start.clone();
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < settings.max_iter {
        iterations += 1;
        let s = injections(&v);
        // voltage collapse guard: the fixed point divides by V
        if v.iter().any(|z| z.norm() < 1e-6) {
            return Ok(PowerFlowSolution { v_n: v, iterations, residual: f64::INFINITY, converged: false });
        }
        let rhs = DVector::from_fn(n, |i, _| (s[i] / v[i]).conj() - slack_current[i]);
        let v_new = lu.solve(&rhs).ok_or(OracleError::SingularYnn)?;
        delta = (&v_new - &v).iter().map(|z| z.norm()).fold(0.0, f64::max);
        v = v_new;
        if delta <= settings.tol_voltage {
            break;
        }
    }

    let residual = power_mismatch(part, v_s, &v, &injections);
    let converged = delta <= settings.tol_voltage && residual <= settings.tol_power;
    Ok(PowerFlowSolution { v_n: v, iterations, residual, converged })
}

/// Max mismatch between demanded injections and the power actually flowing
/// at voltage `v`.
pub fn power_mismatch<F>(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    v: &DVector<Complex64>,
    injections: &F,
) -> f64
where
    F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let demanded = injections(v);
    let i_n = &part.yns * v_s + &part.ynn * v;
    (0..v.len())
        .map(|k| (demanded[k] - v[k] * i_n[k].conj()).norm())
        .fold(0.0, f64::max)
}

/// Injection evaluator combining fixed device powers with exact exponential
/// loads at period `t`, with nominal load power scaled by `load_scale`.
pub fn injection_evaluator<'a>(
    net: &'a ThreePhaseNetwork,
    loads: &'a [ExponentialLoad],
    t: usize,
    load_scale: f64,
    s_dev: DVector<Complex64>,
) -> impl Fn(&DVector<Complex64>) -> DVector<Complex64> + 'a {
    let v_nom = net.v_nom;
    move |v: &DVector<Complex64>| {
        let mut s = s_dev.clone();
        for load in loads {
            let pos = net.node_pos(load.node).expect("validated");
            for phase in Phase::ALL {
                if load.phase_split[phase.index()] == 0.0 {
                    continue;
                }
                let i = net.n_index(pos, phase).expect("validated");
                s[i] -= load_scale * load_power_exact(load, phase, v[i], v_nom, t);
            }
        }
        s
    }
}

/// One row of a linearization accuracy sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub scale: f64,
    /// Max complex-voltage gap between the affine solution and the oracle.
    pub max_voltage_error: f64,
    pub oracle_iterations: usize,
}

/// Compare the affine flow against the oracle while scaling all loads.
pub fn linearization_error_sweep(
    net: &ThreePhaseNetwork,
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    model: &LinearFlowModel,
    loads: &[ExponentialLoad],
    t: usize,
    scalings: &[f64],
) -> Result<Vec<SweepPoint>, OracleError> {
    let n = net.n_dim();
    let settings = PowerFlowSettings::default();
    let mut out = Vec::with_capacity(scalings.len());
    for &scale in scalings {
        let s_zip = crate::wirtinger::aggregate_s_zip(loads, net, t) * Complex64::new(scale, 0.0);
        let zeros = DVector::from_element(n, Complex64::ZERO);
        let v_lin = solve_linear_flow(model, &s_zip, &zeros)?;

        let inj = injection_evaluator(net, loads, t, scale, zeros.clone());
        let sol = solve_power_flow(part, v_s, &net.flat_n_voltage(), &inj, &settings)?;
        if !sol.converged {
            return Err(OracleError::NotConverged {
                iterations: sol.iterations,
                residual: sol.residual,
            });
        }
        let err = (&v_lin - &sol.v_n).iter().map(|z| z.norm()).fold(0.0, f64::max);
        out.push(SweepPoint { scale, max_voltage_error: err, oracle_iterations: sol.iterations });
    }
    Ok(out)
}

/// A tiny dispatch instance for exhaustive search: at most two hypernodes,
/// one battery, a handful of periods.
pub struct TinyDispatchProblem<'a> {
    pub net: &'a ThreePhaseNetwork,
    pub part: &'a AdmittancePartition,
    pub loads: &'a [ExponentialLoad],
    pub battery: Option<&'a Battery>,
    /// Objective weight per period (price); objective is
    /// `sum_t weight[t] * p_grid[t] * dt`.
    pub price: &'a [f64],
    pub dt_hours: f64,
    /// Battery power discretization step, per-unit. Must be at most
    /// `0.05 * max(p_char_max, p_disch_max)`.
    pub grid_step: f64,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub objective: f64,
    /// Net battery injection per period (`p_disch - p_char`), per-unit.
    pub battery_power: Vec<f64>,
    /// Stored energy after each period.
    pub energy: Vec<f64>,
    /// Number of battery sequences examined.
    pub sequences: usize,
}

/// Exhaustively enumerate battery power sequences on a regular grid, running
/// the exact power flow per period, and keep the feasible minimum-cost
/// schedule. Guaranteed within one grid step (times a Lipschitz factor) of
/// the true optimum.
pub fn brute_force_dispatch(p: &TinyDispatchProblem<'_>) -> Result<BruteForceResult, OracleError> {
    let t_len = p.price.len();
    let settings = PowerFlowSettings::default();

    // Action set: idle, charge levels, discharge levels.
    #[derive(Clone, Copy)]
    struct Action {
        p_char: f64,
        p_disch: f64,
    }
    let mut actions = vec![Action { p_char: 0.0, p_disch: 0.0 }];
    if let Some(bat) = p.battery {
        let limit = 0.05 * bat.p_char_max.max(bat.p_disch_max);
        if p.grid_step > limit + 1e-15 {
            return Err(OracleError::StepTooCoarse { step: p.grid_step, limit });
        }
        let mut x = p.grid_step;
        while x <= bat.p_char_max + 1e-12 {
            actions.push(Action { p_char: x.min(bat.p_char_max), p_disch: 0.0 });
            x += p.grid_step;
        }
        x = p.grid_step;
        while x <= bat.p_disch_max + 1e-12 {
            actions.push(Action { p_char: 0.0, p_disch: x.min(bat.p_disch_max) });
            x += p.grid_step;
        }
    }

    let n_seq = (actions.len() as f64).powi(t_len as i32);
    if n_seq > 1e7 {
        return Err(OracleError::BudgetExceeded(n_seq));
    }

    // Grid power depends only on (t, action): solve each flow once and
    // tabulate, so the sequence enumeration is pure arithmetic.
    let n = p.net.n_dim();
    let v_s = crate::network::slack_voltage(p.net.v_nom).expect("validated v_nom");
    let flat = p.net.flat_n_voltage();
    let mut p_grid_table = vec![vec![None; actions.len()]; t_len];
    for t in 0..t_len {
        for (ai, act) in actions.iter().enumerate() {
            let mut s_dev = DVector::from_element(n, Complex64::ZERO);
            if let Some(bat) = p.battery {
                let pos = p.net.node_pos(bat.node).expect("validated");
                let inj = Complex64::new((act.p_disch - act.p_char) / 3.0, 0.0);
                for phase in Phase::ALL {
                    let i = p.net.n_index(pos, phase).expect("validated");
                    s_dev[i] += inj;
                }
            }
            let inj = injection_evaluator(p.net, p.loads, t, 1.0, s_dev);
            let sol = solve_power_flow(p.part, &v_s, &flat, &inj, &settings)?;
            if sol.converged {
                p_grid_table[t][ai] = Some(grid_power(p.part, &v_s, &sol.v_n).re);
            }
        }
    }

    // Energy trajectory per action, shared by every sequence position.
    let energy_step: Vec<f64> = actions
        .iter()
        .map(|act| {
            if let Some(bat) = p.battery {
                let n_char = battery_loss(bat, act.p_char, BatteryMode::Charge).expect("p >= 0");
                let n_disch = battery_loss(bat, act.p_disch, BatteryMode::Discharge).expect("p >= 0");
                (act.p_char - n_char - act.p_disch - n_disch) * p.dt_hours
            } else {
                0.0
            }
        })
        .collect();
    let (e_init, e_min, e_max) = match p.battery {
        Some(b) => (b.e_init, b.e_min, b.e_max),
        None => (0.0, 0.0, 0.0),
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut seq = vec![0usize; t_len];
    let mut sequences = 0usize;
    'outer: loop {
        sequences += 1;
        // feasibility + cost of this sequence
        let mut e = e_init;
        let mut cost = 0.0;
        let mut feasible = true;
        for t in 0..t_len {
            let ai = seq[t];
            e += energy_step[ai];
            if p.battery.is_some() && !(e_min - 1e-9..=e_max + 1e-9).contains(&e) {
                feasible = false;
                break;
            }
            match p_grid_table[t][ai] {
                Some(pg) => cost += p.price[t] * pg * p.dt_hours,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            match &best {
                Some((c, _)) if *c <= cost => {}
                _ => best = Some((cost, seq.clone())),
            }
        }
        // odometer increment
        for t in 0..t_len {
            seq[t] += 1;
            if seq[t] < actions.len() {
                continue 'outer;
            }
            seq[t] = 0;
        }
        break;
    }

    let (objective, best_seq) = best.ok_or(OracleError::NoFeasibleSequence)?;
    let mut energy = Vec::with_capacity(t_len);
    let mut e = e_init;
    for &ai in &best_seq {
        e += energy_step[ai];
        energy.push(e);
    }
    Ok(BruteForceResult {
        objective,
        battery_power: best_seq
            .iter()
            .map(|&ai| actions[ai].p_disch - actions[ai].p_char)
            .collect(),
        energy,
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::QuadLoss;
    use crate::network::{
        build_admittance, nodal_power, partition, slack_voltage, total_losses, HyperBranch,
        Hypernode, ThreePhaseNetwork,
    };
    use crate::wirtinger::{build_linear_model, ExpansionPoint};
    use nalgebra::Matrix3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, max_nodes: usize) -> ThreePhaseNetwork {
        let h = rng.gen_range(3..=max_nodes);
        let nodes: Vec<Hypernode> = (0..h as u32).map(|i| Hypernode::full(i + 1)).collect();
        let mut branches = Vec::new();
        for k in 1..h {
            let parent = rng.gen_range(0..k);
            let self_y = Complex64::new(rng.gen_range(4.0..25.0), -rng.gen_range(8.0..40.0));
            let mut m = Matrix3::from_diagonal_element(self_y);
            let coupling = Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            for p in 0..3 {
                for q in (p + 1)..3 {
                    m[(p, q)] = coupling;
                    m[(q, p)] = coupling;
                }
            }
            branches.push(HyperBranch::new(nodes[parent].id, nodes[k].id, m));
        }
        ThreePhaseNetwork::new(nodes, branches, 100_000.0, 230.94, 1.0).unwrap()
    }

    fn single_phase_pair(y: Complex64) -> ThreePhaseNetwork {
        let mut node2 = Hypernode::full(2);
        node2.phases = [true, false, false];
        let mut m = Matrix3::from_diagonal_element(Complex64::ZERO);
        m[(0, 0)] = y;
        ThreePhaseNetwork::new(
            vec![Hypernode::full(1), node2],
            vec![HyperBranch::new(1, 2, m)],
            100_000.0,
            230.94,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn no_load_solves_to_flat_in_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = random_net(&mut rng, 9);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let n = net.n_dim();
        let inj = move |_: &DVector<Complex64>| DVector::from_element(n, Complex64::ZERO);
        let sol =
            solve_power_flow(&part, &v_s, &net.flat_n_voltage(), inj, &PowerFlowSettings::default())
                .unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        let flat = net.flat_n_voltage();
        let err = (&sol.v_n - &flat).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn two_bus_constant_power_matches_closed_form() {
        let y = Complex64::new(1.0, -10.0);
        let net = single_phase_pair(y);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let s_load = Complex64::new(0.1, 0.05);
        let inj = move |_: &DVector<Complex64>| DVector::from_element(1, -s_load);
        let sol =
            solve_power_flow(&part, &v_s, &net.flat_n_voltage(), inj, &PowerFlowSettings::default())
                .unwrap();
        assert!(sol.converged, "residual {}", sol.residual);

        // Closed form: with z = 1/y and u = |v|^2,
        //   u^2 + u (2 Re(z conj(s_load)) - |v_s|^2) + |z|^2 |s_load|^2 = 0,
        // taking the high root, then conj(v) = (u + z conj(s_load)) / v_s.
        let z = Complex64::new(1.0, 0.0) / y;
        let b = 2.0 * (z * s_load.conj()).re - 1.0;
        let c = z.norm_sqr() * s_load.norm_sqr();
        let u = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
        let v_analytic = ((Complex64::new(u, 0.0) + z * s_load.conj()) / Complex64::new(1.0, 0.0)).conj();
        assert!(
            (sol.v_n[0] - v_analytic).norm() <= 1e-9,
            "oracle {} vs analytic {}",
            sol.v_n[0],
            v_analytic
        );
    }

    #[test]
    fn exponential_loads_use_exact_model_and_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = random_net(&mut rng, 10);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        // a few exponential loads on random nodes
        let mut loads = Vec::new();
        for k in 0..3u32 {
            let node = (k % (net.num_nodes() as u32 - 1)) + 2;
            loads.push(
                ExponentialLoad::new(
                    node,
                    [0.0, 1.0, 2.0][k as usize % 3],
                    vec![Complex64::new(0.05, 0.015); 4],
                    [0.5, 0.3, 0.2],
                )
                .unwrap(),
            );
        }
        let n = net.n_dim();
        let inj = injection_evaluator(&net, &loads, 0, 1.0, DVector::from_element(n, Complex64::ZERO));
        let sol =
            solve_power_flow(&part, &v_s, &net.flat_n_voltage(), &inj, &PowerFlowSettings::default())
                .unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 20, "took {} iterations", sol.iterations);
        assert!(sol.residual <= 1e-8);

        // the power at the solution is the exact exponential model, not the surrogate
        let s = nodal_power(&part, &v_s, &sol.v_n);
        let demanded = inj(&sol.v_n);
        for i in 0..n {
            assert!((s[i] - demanded[i]).norm() <= 1e-8);
        }
    }

    #[test]
    fn conservation_at_oracle_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let net = random_net(&mut rng, 8);
            let part = partition(&build_admittance(&net), &net);
            let v_s = slack_voltage(1.0).unwrap();
            let n = net.n_dim();
            let s_fixed = DVector::from_fn(n, |_, _| {
                Complex64::new(rng.gen_range(-0.04..0.02), rng.gen_range(-0.02..0.01))
            });
            let s_inj = s_fixed.clone();
            let inj = move |_: &DVector<Complex64>| s_inj.clone();
            let sol = solve_power_flow(
                &part,
                &v_s,
                &net.flat_n_voltage(),
                inj,
                &PowerFlowSettings::default(),
            )
            .unwrap();
            assert!(sol.converged);
            let p_grid = grid_power(&part, &v_s, &sol.v_n).re;
            let p_loss = total_losses(&part, &v_s, &sol.v_n);
            let net_injection: f64 = s_fixed.iter().map(|z| z.re).sum();
            // grid supply = - net injection + losses
            assert!(
                (p_grid + net_injection - p_loss).abs() <= 1e-8,
                "conservation violated: {}",
                p_grid + net_injection - p_loss
            );
        }
    }

    #[test]
    fn divergence_reports_non_converged() {
        let y = Complex64::new(1.0, -3.0);
        let net = single_phase_pair(y);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        // absurd constant-power load far beyond the deliverable limit
        let inj = move |_: &DVector<Complex64>| DVector::from_element(1, Complex64::new(-50.0, -20.0));
        let sol =
            solve_power_flow(&part, &v_s, &net.flat_n_voltage(), inj, &PowerFlowSettings::default())
                .unwrap();
        assert!(!sol.converged);
    }

    fn arbitrage_battery(a: f64) -> Battery {
        Battery::new(
            2,
            0.0,
            0.2,
            0.2,
            QuadLoss { a, b: 0.0, c: 0.0 },
            QuadLoss { a, b: 0.0, c: 0.0 },
            0.1,
            0.1,
            0.12,
        )
        .unwrap()
    }

    #[test]
    fn lossless_arbitrage_discharges_everything_at_high_price() {
        // lossless line (pure reactance) and near-lossless battery: selling the
        // full stored energy at the high-price period is optimal.
        let net = ThreePhaseNetwork::new(
            vec![Hypernode::full(1), Hypernode::full(2)],
            vec![HyperBranch::diagonal(1, 2, Complex64::new(0.0, -30.0))],
            100_000.0,
            230.94,
            1.0,
        )
        .unwrap();
        let part = partition(&build_admittance(&net), &net);
        let bat = arbitrage_battery(1e-9);
        let problem = TinyDispatchProblem {
            net: &net,
            part: &part,
            loads: &[],
            battery: Some(&bat),
            price: &[1.0, 2.0],
            dt_hours: 1.0,
            grid_step: 0.005,
        };
        let res = brute_force_dispatch(&problem).unwrap();
        // sellable energy E = 0.2 pu h, capped by p_disch_max = 0.1 per period:
        // discharge 0.1 in both periods -> objective -(0.1*1 + 0.1*2) = -0.3
        assert!((res.objective - (-0.3)).abs() <= 1e-6, "objective {}", res.objective);
        assert!((res.battery_power[0] - 0.1).abs() <= 1e-9);
        assert!((res.battery_power[1] - 0.1).abs() <= 1e-9);
    }

    #[test]
    fn refinement_stability() {
        let net = ThreePhaseNetwork::new(
            vec![Hypernode::full(1), Hypernode::full(2)],
            vec![HyperBranch::diagonal(1, 2, Complex64::new(8.0, -24.0))],
            100_000.0,
            230.94,
            1.0,
        )
        .unwrap();
        let part = partition(&build_admittance(&net), &net);
        // enough stored energy that the optimum is not pinned to the energy
        // boundary (where any discretization staircases)
        let bat = Battery::new(
            2,
            0.02,
            0.25,
            0.25,
            QuadLoss { a: 0.05, b: 0.0, c: 0.0 },
            QuadLoss { a: 0.05, b: 0.0, c: 0.0 },
            0.1,
            0.1,
            0.12,
        )
        .unwrap();
        let loads = vec![ExponentialLoad::new(
            2,
            1.0,
            vec![Complex64::new(0.05, 0.01); 2],
            [0.4, 0.3, 0.3],
        )
        .unwrap()];
        let objective_at = |step: f64| {
            let problem = TinyDispatchProblem {
                net: &net,
                part: &part,
                loads: &loads,
                battery: Some(&bat),
                price: &[1.0, 2.0],
                dt_hours: 1.0,
                grid_step: step,
            };
            brute_force_dispatch(&problem).unwrap().objective
        };
        let coarse = objective_at(0.004);
        let fine = objective_at(0.002);
        assert!(
            (coarse - fine).abs() <= 0.01 * fine.abs().max(1e-6),
            "coarse {coarse} vs fine {fine}"
        );
    }

    #[test]
    fn budget_guard_refuses_huge_enumerations() {
        let net = ThreePhaseNetwork::new(
            vec![Hypernode::full(1), Hypernode::full(2)],
            vec![HyperBranch::diagonal(1, 2, Complex64::new(8.0, -24.0))],
            100_000.0,
            230.94,
            1.0,
        )
        .unwrap();
        let part = partition(&build_admittance(&net), &net);
        let bat = arbitrage_battery(0.05);
        let problem = TinyDispatchProblem {
            net: &net,
            part: &part,
            loads: &[],
            battery: Some(&bat),
            price: &[1.0; 4],
            dt_hours: 1.0,
            grid_step: 0.0001,
        };
        assert!(matches!(
            brute_force_dispatch(&problem),
            Err(OracleError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn sweep_errors_grow_with_load_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let net = random_net(&mut rng, 8);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let loads = vec![ExponentialLoad::new(
            2,
            2.0,
            vec![Complex64::new(0.3, 0.1); 1],
            [0.5, 0.25, 0.25],
        )
        .unwrap()];
        let model = build_linear_model(&part, &v_s, &net, &loads, ExpansionPoint::flat(&net)).unwrap();
        let sweep =
            linearization_error_sweep(&net, &part, &v_s, &model, &loads, 0, &[0.0, 0.25, 0.5, 1.0])
                .unwrap();
        assert!(sweep[0].max_voltage_error <= 1e-12, "zero scale should be exact");
        for w in sweep.windows(2) {
            assert!(
                w[1].max_voltage_error >= w[0].max_voltage_error,
                "errors should grow with scale: {:?}",
                sweep.iter().map(|p| p.max_voltage_error).collect::<Vec<_>>()
            );
        }
    }
}
