//! Affine surrogates of the non-convex constraints, built with Wirtinger
//! calculus.
//!
//! The exact nodal power relation `conj(s) = conj(v) o (Yns Vs + Ynn Vn)` is
//! bilinear in `(v, conj(v))`. Expanding to first order around a voltage
//! `V0` (the bilinear term `conj(v_k) v_m ~ v_m0 conj(v_k) + conj(v_k0) v_m -
//! conj(v_k0) v_m0`) gives an affine map
//!
//! ```text
//! conj(S_N) = K conj(V_N) + L V_N + U
//! K = diag(Yns Vs) + diag(Ynn V0)
//! L = diag(conj(V0)) Ynn
//! U = -diag(conj(V0)) (Ynn V0)
//! ```
//!
//! which is exact at `V0` and second-order accurate nearby. Exponential
//! loads `s_zip |v/v_nom|^alpha` linearize around the nominal phasor into
//! `s_zip o (M + H v + T conj(v))` with real-valued bracket.
//!
//! The default expansion point is the balanced flat start; it must carry the
//! phase of each entry (`e^{j phi}` per phase).

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::devices::ExponentialLoad;
use crate::network::{AdmittancePartition, Phase, ThreePhaseNetwork};

#[derive(Debug, Error)]
pub enum WirtingerError {
    #[error("expansion point has a zero entry at position {0}")]
    ZeroExpansionEntry(usize),
    #[error("expansion point length {got} does not match network dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("nominal voltage must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error("loads with different exponents share node {node} phase {phase}")]
    MixedAlpha { node: u32, phase: Phase },
    #[error("load references a phase-node outside the network")]
    UnknownLoadTarget,
    #[error("linear flow system is singular")]
    SingularSystem,
}

/// Voltage vector the power flow is expanded around.
#[derive(Debug, Clone)]
pub struct ExpansionPoint {
    pub v0: DVector<Complex64>,
}

impl ExpansionPoint {
    /// Balanced flat start `v_nom e^{j phi}` per active phase-node.
    pub fn flat(net: &ThreePhaseNetwork) -> Self {
        ExpansionPoint { v0: net.flat_n_voltage() }
    }

    /// Expand around a previously computed operating point ("warm" mode).
    pub fn at(v0: DVector<Complex64>) -> Self {
        ExpansionPoint { v0 }
    }

    fn check(&self, n: usize) -> Result<(), WirtingerError> {
        if self.v0.len() != n {
            return Err(WirtingerError::DimensionMismatch { got: self.v0.len(), want: n });
        }
        if let Some(i) = self.v0.iter().position(|v| v.norm() == 0.0) {
            return Err(WirtingerError::ZeroExpansionEntry(i));
        }
        Ok(())
    }
}

/// The affine power-flow surrogate `conj(S) = K conj(V) + L V + U`.
#[derive(Debug, Clone)]
pub struct PowerFlowLinearization {
    pub k: DMatrix<Complex64>,
    pub l: DMatrix<Complex64>,
    pub u: DVector<Complex64>,
}

/// Linearize the exact nodal power relation around `x0`.
pub fn linearize_power_flow(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    x0: &ExpansionPoint,
) -> Result<PowerFlowLinearization, WirtingerError> {
    let n = part.n_dim();
    x0.check(n)?;
    let v0 = &x0.v0;

    let slack_term = &part.yns * v_s;
    let own_term = &part.ynn * v0;

    let mut k = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = slack_term[i] + own_term[i];
    }

    let mut l = part.ynn.clone();
    for i in 0..n {
        let c = v0[i].conj();
        for j in 0..n {
            l[(i, j)] *= c;
        }
    }

    let u = DVector::from_iterator(n, (0..n).map(|i| -v0[i].conj() * own_term[i]));

    Ok(PowerFlowLinearization { k, l, u })
}

impl PowerFlowLinearization {
    /// Evaluate the surrogate: returns `conj(S_N)` at voltage `v`.
    pub fn conj_power(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.k * v.map(|z| z.conj()) + &self.l * v + &self.u
    }
}

/// Diagonal load-surrogate coefficients per active phase-node:
/// `s_load = s_zip o (m + h v + t conj(v))`.
///
/// Phase-nodes without a load get the neutral bracket `m = 1, h = t = 0`.
#[derive(Debug, Clone)]
pub struct LoadLinearization {
    pub m: DVector<f64>,
    pub h: DVector<Complex64>,
    pub t: DVector<Complex64>,
}

impl LoadLinearization {
    /// The real-valued bracket `m + h v + t conj(v)` at entry `i`.
    pub fn bracket(&self, i: usize, v: Complex64) -> Complex64 {
        Complex64::new(self.m[i], 0.0) + self.h[i] * v + self.t[i] * v.conj()
    }
}

/// Build the load-surrogate diagonals. Loads sharing a phase-node must agree
/// on `alpha` (their nominal powers then aggregate linearly).
pub fn linearize_loads(
    loads: &[ExponentialLoad],
    net: &ThreePhaseNetwork,
    v_nom: f64,
) -> Result<LoadLinearization, WirtingerError> {
    if !(v_nom > 0.0) {
        return Err(WirtingerError::NonPositiveVoltage(v_nom));
    }
    let n = net.n_dim();
    let mut alpha_at: Vec<Option<f64>> = vec![None; n];
    for load in loads {
        let pos = net.node_pos(load.node).ok_or(WirtingerError::UnknownLoadTarget)?;
        for phase in Phase::ALL {
            if load.phase_split[phase.index()] == 0.0 {
                continue;
            }
            let i = net
                .n_index(pos, phase)
                .ok_or(WirtingerError::UnknownLoadTarget)?;
            match alpha_at[i] {
                None => alpha_at[i] = Some(load.alpha),
                Some(a) if a == load.alpha => {}
                Some(_) => return Err(WirtingerError::MixedAlpha { node: load.node, phase }),
            }
        }
    }

    let mut m = DVector::from_element(n, 1.0);
    let mut h = DVector::from_element(n, Complex64::ZERO);
    let mut t = DVector::from_element(n, Complex64::ZERO);
    for (i, np) in net.n_phases().iter().enumerate() {
        if let Some(alpha) = alpha_at[i] {
            let phasor = np.phase.unit_phasor();
            m[i] = 1.0 - alpha;
            h[i] = alpha / (2.0 * v_nom * phasor);
            t[i] = alpha / (2.0 * v_nom * phasor.conj());
        }
    }
    Ok(LoadLinearization { m, h, t })
}

/// Aggregate nominal load power `sum s_zip` per active phase-node at period `t`.
pub fn aggregate_s_zip(
    loads: &[ExponentialLoad],
    net: &ThreePhaseNetwork,
    t: usize,
) -> DVector<Complex64> {
    let mut out = DVector::from_element(net.n_dim(), Complex64::ZERO);
    for load in loads {
        let pos = net.node_pos(load.node).expect("validated");
        for phase in Phase::ALL {
            if load.phase_split[phase.index()] == 0.0 {
                continue;
            }
            let i = net.n_index(pos, phase).expect("validated");
            out[i] += load.s_zip_phase(phase, t);
        }
    }
    out
}

/// The assembled affine model: power-flow surrogate, load surrogate and the
/// expansion point they share.
#[derive(Debug, Clone)]
pub struct LinearFlowModel {
    pub flow: PowerFlowLinearization,
    pub loads: LoadLinearization,
    pub expansion: ExpansionPoint,
}

pub fn build_linear_model(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    net: &ThreePhaseNetwork,
    loads: &[ExponentialLoad],
    x0: ExpansionPoint,
) -> Result<LinearFlowModel, WirtingerError> {
    let flow = linearize_power_flow(part, v_s, &x0)?;
    let load_lin = linearize_loads(loads, net, net.v_nom)?;
    Ok(LinearFlowModel { flow, loads: load_lin, expansion: x0 })
}

/// Max-norm gap between an exact evaluator and an affine surrogate at `v`.
/// Second-order small in `|v - v0|` when the surrogate was expanded at `v0`.
pub fn wirtinger_residual<F, G>(f_exact: F, surrogate: G, v: &DVector<Complex64>) -> f64
where
    F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
    G: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let exact = f_exact(v);
    let approx = surrogate(v);
    (exact - approx).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Numeric Wirtinger derivatives of `f` at `z0` by central differences on the
/// real and imaginary parts:
///
/// ```text
/// df/dz    = ((du/dx + dv/dy) + j (dv/dx - du/dy)) / 2
/// df/dconj = ((du/dx - dv/dy) + j (dv/dx + du/dy)) / 2
/// ```
pub fn wirtinger_derivatives_numeric<F>(f: F, z0: Complex64, step: f64) -> (Complex64, Complex64)
where
    F: Fn(Complex64) -> Complex64,
{
    let dx = Complex64::new(step, 0.0);
    let dy = Complex64::new(0.0, step);
    let fx_p = f(z0 + dx);
    let fx_m = f(z0 - dx);
    let fy_p = f(z0 + dy);
    let fy_m = f(z0 - dy);
    let du_dx = (fx_p.re - fx_m.re) / (2.0 * step);
    let dv_dx = (fx_p.im - fx_m.im) / (2.0 * step);
    let du_dy = (fy_p.re - fy_m.re) / (2.0 * step);
    let dv_dy = (fy_p.im - fy_m.im) / (2.0 * step);
    let d_z = Complex64::new(0.5 * (du_dx + dv_dy), 0.5 * (dv_dx - du_dy));
    let d_conj = Complex64::new(0.5 * (du_dx - dv_dy), 0.5 * (dv_dx + du_dy));
    (d_z, d_conj)
}

/// Solve the affine power flow: find `V` with
/// `K conj(V) + L V + U = conj(S_dev - S_load(V))`, where `S_load` is the
/// affine load surrogate with nominal powers `s_zip` and `S_dev` holds fixed
/// device injections per phase-node.
pub fn solve_linear_flow(
    model: &LinearFlowModel,
    s_zip: &DVector<Complex64>,
    s_dev: &DVector<Complex64>,
) -> Result<DVector<Complex64>, WirtingerError> {
    let n = model.flow.u.len();
    // Complex system: sum_j A_ij V_j + B_ij conj(V_j) + C_i = 0 with
    //   A = L + diag(conj(s_zip) conj(t))
    //   B = K + diag(conj(s_zip) conj(h))
    //   C = U - conj(s_dev) + conj(s_zip) o m
    let mut a = model.flow.l.clone();
    let mut b = model.flow.k.clone();
    let mut c = model.flow.u.clone();
    for i in 0..n {
        let zc = s_zip[i].conj();
        a[(i, i)] += zc * model.loads.t[i].conj();
        b[(i, i)] += zc * model.loads.h[i].conj();
        c[i] += zc * model.loads.m[i] - s_dev[i].conj();
    }

    // Real form in z = [x; y] with V = x + j y:
    //   A V + B conj(V) = (A + B) x + j (A - B) y
    let mut sys = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            let apb = a[(i, j)] + b[(i, j)];
            let amb = (a[(i, j)] - b[(i, j)]) * Complex64::i();
            sys[(i, j)] = apb.re;
            sys[(i, j + n)] = amb.re;
            sys[(i + n, j)] = apb.im;
            sys[(i + n, j + n)] = amb.im;
        }
        rhs[i] = -c[i].re;
        rhs[i + n] = -c[i].im;
    }

    let lu = sys.lu();
    let z = lu.solve(&rhs).ok_or(WirtingerError::SingularSystem)?;
    Ok(DVector::from_fn(n, |i, _| Complex64::new(z[i], z[i + n])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        build_admittance, nodal_power, partition, slack_voltage, HyperBranch, Hypernode,
        ThreePhaseNetwork,
    };
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, max_nodes: usize) -> ThreePhaseNetwork {
        let h = rng.gen_range(2..=max_nodes);
        let nodes: Vec<Hypernode> = (0..h as u32).map(|i| Hypernode::full(i + 1)).collect();
        let mut branches = Vec::new();
        for k in 1..h {
            let parent = rng.gen_range(0..k);
            let self_y = Complex64::new(rng.gen_range(2.0..20.0), -rng.gen_range(2.0..20.0));
            let mut m = Matrix3::from_diagonal_element(self_y);
            let coupling = Complex64::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
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

    /// Single-phase-equivalent pair: slack plus one node carrying only phase A.
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
    fn surrogate_exact_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let net = random_net(&mut rng, 12);
            let part = partition(&build_admittance(&net), &net);
            let v_s = slack_voltage(net.v_nom).unwrap();
            // random expansion point near the flat start, not just flat
            let flat = net.flat_n_voltage();
            let v0 = DVector::from_fn(net.n_dim(), |i, _| {
                flat[i] * Complex64::new(rng.gen_range(0.95..1.05), rng.gen_range(-0.03..0.03))
            });
            let x0 = ExpansionPoint::at(v0.clone());
            let lin = linearize_power_flow(&part, &v_s, &x0).unwrap();
            let exact = nodal_power(&part, &v_s, &v0).map(|z| z.conj());
            let approx = lin.conj_power(&v0);
            let err = (exact - approx).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-12, "residual at expansion point {err}");
        }
    }

    #[test]
    fn hand_computed_klu_single_phase_pair() {
        let y = Complex64::new(1.0, -10.0);
        let net = single_phase_pair(y);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let x0 = ExpansionPoint::flat(&net);
        let lin = linearize_power_flow(&part, &v_s, &x0).unwrap();
        assert_eq!(lin.k.nrows(), 1);
        // K = diag(Yns Vs) + diag(Ynn V0) = -y + y = 0
        assert!(lin.k[(0, 0)].norm() < 1e-15);
        // L = conj(v0) * Ynn = y
        assert!((lin.l[(0, 0)] - y).norm() < 1e-15);
        // U = -conj(v0) * Ynn v0 = -y
        assert!((lin.u[0] + y).norm() < 1e-15);
    }

    #[test]
    fn residual_zero_at_x0_and_second_order_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = random_net(&mut rng, 10);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let x0 = ExpansionPoint::flat(&net);
        let lin = linearize_power_flow(&part, &v_s, &x0).unwrap();

        let exact = |v: &DVector<Complex64>| nodal_power(&part, &v_s, v).map(|z| z.conj());
        let approx = |v: &DVector<Complex64>| lin.conj_power(v);

        assert!(wirtinger_residual(&exact, &approx, &x0.v0) < 1e-13);

        let n = net.n_dim();
        let dir = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let max_entry = dir.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let dir = dir.map(|z| z / max_entry);
        for eps in [1e-2, 2e-2, 4e-2] {
            let v_big = &x0.v0 + &dir * Complex64::new(eps, 0.0);
            let v_small = &x0.v0 + &dir * Complex64::new(eps / 2.0, 0.0);
            let r_big = wirtinger_residual(&exact, &approx, &v_big);
            let r_small = wirtinger_residual(&exact, &approx, &v_small);
            let ratio = r_big / r_small;
            assert!(
                (3.0..=5.0).contains(&ratio),
                "expected ~4x residual decay, got {ratio} at eps {eps}"
            );
        }
    }

    #[test]
    fn linearizing_affine_function_is_exact() {
        // f(z) = a z + b conj(z) + c reproduces itself from its Wirtinger derivatives.
        let a = Complex64::new(1.3, -0.4);
        let b = Complex64::new(-0.2, 0.9);
        let c = Complex64::new(0.1, 0.1);
        let f = |z: Complex64| a * z + b * z.conj() + c;
        let z0 = Complex64::new(0.7, -0.3);
        let (dz, dconj) = wirtinger_derivatives_numeric(f, z0, 1e-5);
        assert!((dz - a).norm() < 1e-9);
        assert!((dconj - b).norm() < 1e-9);
        for z in [Complex64::new(5.0, 2.0), Complex64::new(-3.0, 7.0)] {
            let lin = f(z0) + dz * (z - z0) + dconj * (z - z0).conj();
            assert!((lin - f(z)).norm() < 1e-6);
        }
    }

    #[test]
    fn wirtinger_derivatives_of_bilinear_term() {
        // f(v_m) = conj(v_k0) v_m and f(v_k) = conj(v_k) v_m0: the surrogate
        // coefficients must equal the analytic derivatives.
        let v_k0 = Complex64::new(0.98, -0.05);
        let v_m0 = Complex64::new(1.01, 0.02);
        let f_of_m = |z: Complex64| v_k0.conj() * z;
        let (dz, dconj) = wirtinger_derivatives_numeric(f_of_m, v_m0, 1e-5);
        assert!((dz - v_k0.conj()).norm() < 1e-6);
        assert!(dconj.norm() < 1e-6);

        let f_of_k = |z: Complex64| z.conj() * v_m0;
        let (dz, dconj) = wirtinger_derivatives_numeric(f_of_k, v_k0, 1e-5);
        assert!(dz.norm() < 1e-6);
        assert!((dconj - v_m0).norm() < 1e-6);
    }

    fn one_load_net(alpha: f64, v_nom: f64) -> (ThreePhaseNetwork, Vec<ExponentialLoad>) {
        let net = ThreePhaseNetwork::new(
            vec![Hypernode::full(1), Hypernode::full(2)],
            vec![HyperBranch::diagonal(1, 2, Complex64::new(5.0, -15.0))],
            100_000.0,
            230.94,
            v_nom,
        )
        .unwrap();
        let loads = vec![ExponentialLoad::new(
            2,
            alpha,
            vec![Complex64::new(0.4, 0.1); 24],
            [0.4, 0.35, 0.25],
        )
        .unwrap()];
        (net, loads)
    }

    #[test]
    fn constant_power_loads_have_neutral_bracket() {
        let (net, loads) = one_load_net(0.0, 1.0);
        let lin = linearize_loads(&loads, &net, 1.0).unwrap();
        for i in 0..net.n_dim() {
            assert_eq!(lin.m[i], 1.0);
            assert_eq!(lin.h[i], Complex64::ZERO);
            assert_eq!(lin.t[i], Complex64::ZERO);
            // bracket is 1 regardless of voltage
            let v = Complex64::new(0.3, 0.8);
            assert!((lin.bracket(i, v) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn load_surrogate_exact_at_nominal_voltage() {
        for v_nom in [1.0, 0.97] {
            for alpha in [0.0, 0.5, 1.0, 1.5, 2.0] {
                let (net, loads) = one_load_net(alpha, v_nom);
                let lin = linearize_loads(&loads, &net, v_nom).unwrap();
                for (i, np) in net.n_phases().iter().enumerate() {
                    let v = v_nom * np.phase.unit_phasor();
                    let bracket = lin.bracket(i, v);
                    assert!(
                        (bracket - Complex64::new(1.0, 0.0)).norm() < 1e-12,
                        "alpha {alpha} v_nom {v_nom}: bracket {bracket}"
                    );
                }
            }
        }
    }

    #[test]
    fn load_surrogate_second_order_error_for_alpha_two() {
        let (net, loads) = one_load_net(2.0, 1.0);
        let lin = linearize_loads(&loads, &net, 1.0).unwrap();
        let i = 0;
        let phase = net.n_phases()[i].phase;
        let v = 0.98 * phase.unit_phasor();
        let bracket = lin.bracket(i, v);
        // exact |v|^2 = 0.9604; linear bracket gives 0.96 (4e-4 short)
        assert_abs_diff_eq!(bracket.re, 0.96, epsilon = 1e-12);
        assert_abs_diff_eq!((v.norm() / 1.0).powi(2) - bracket.re, 4.0e-4, epsilon = 1e-12);
    }

    #[test]
    fn load_bracket_is_real_for_arbitrary_voltage() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for alpha in [0.3, 1.0, 1.7] {
            let (net, loads) = one_load_net(alpha, 1.0);
            let lin = linearize_loads(&loads, &net, 1.0).unwrap();
            for _ in 0..50 {
                let v = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                for i in 0..net.n_dim() {
                    assert!(lin.bracket(i, v).im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mixed_alpha_on_one_phase_is_rejected() {
        let (net, mut loads) = one_load_net(1.0, 1.0);
        loads.push(
            ExponentialLoad::new(2, 2.0, vec![Complex64::new(0.1, 0.0); 24], [1.0, 0.0, 0.0])
                .unwrap(),
        );
        assert!(matches!(
            linearize_loads(&loads, &net, 1.0),
            Err(WirtingerError::MixedAlpha { .. })
        ));
    }

    #[test]
    fn zero_expansion_entry_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_net(&mut rng, 5);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let mut v0 = net.flat_n_voltage();
        v0[1] = Complex64::ZERO;
        assert!(matches!(
            linearize_power_flow(&part, &v_s, &ExpansionPoint::at(v0)),
            Err(WirtingerError::ZeroExpansionEntry(1))
        ));
    }

    #[test]
    fn linear_flow_recovers_flat_profile_with_no_injections() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let net = random_net(&mut rng, 9);
        let part = partition(&build_admittance(&net), &net);
        let v_s = slack_voltage(1.0).unwrap();
        let model =
            build_linear_model(&part, &v_s, &net, &[], ExpansionPoint::flat(&net)).unwrap();
        let n = net.n_dim();
        let zeros = DVector::from_element(n, Complex64::ZERO);
        let v = solve_linear_flow(&model, &zeros, &zeros).unwrap();
        let flat = net.flat_n_voltage();
        let err = (&v - &flat).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "flat profile not recovered: {err}");
    }
}
