//! Assembly of the 24h convex dispatch program.
//!
//! Per period the program carries the affine flow surrogate as equalities
//! (split into real/imaginary rows), the relaxed quadratic inequalities for
//! network losses, grid power and battery losses, and second-order cones for
//! converter and voltage limits. Quadratic equalities are relaxed in the
//! `>=` direction only; the minimized cost pulls them tight and the audit
//! verifies that it did.
//!
//! Losses enter branch-by-branch: `p_loss >= sum_l ||F_l u_l||^2` with
//! `F_l^T F_l` the (symmetrized) branch conductance and `u_l` the per-phase
//! voltage drop. This is the same quadratic form as the partitioned
//! expression and keeps the cone rows sparse. A vanishing objective weight
//! on `p_loss` anchors the relaxation to its lower bound; its effect on the
//! reported cost is orders of magnitude below every acceptance tolerance.

use nalgebra::Matrix3;
use num_complex::Complex64;

use super::conic::{ConicProgram, LinExpr, QuadConstraint, SocConstraint};
use super::{ScheduleError, ScheduleProblem};
use crate::devices::{pv_bound, wind_bound};
use crate::network::Phase;
use crate::wirtinger::aggregate_s_zip;

/// Relative weight (vs. the smallest price) of the loss-anchoring objective term.
const LOSS_ANCHOR_WEIGHT: f64 = 1e-4;

/// Variable indexing for the stacked per-period blocks.
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub np: usize,
    pub n_pv: usize,
    pub n_wind: usize,
    pub n_bat: usize,
    pub horizon: usize,
    stride: usize,
}

impl VarLayout {
    fn new(np: usize, n_pv: usize, n_wind: usize, n_bat: usize, horizon: usize) -> Self {
        let stride = 2 * np + 2 * n_pv + 2 * n_wind + 7 * n_bat + 2;
        VarLayout { np, n_pv, n_wind, n_bat, horizon, stride }
    }

    pub fn total_vars(&self) -> usize {
        self.stride * self.horizon
    }

    fn base(&self, t: usize) -> usize {
        t * self.stride
    }

    /// Real part of the voltage at phase-node `i`.
    pub fn vx(&self, t: usize, i: usize) -> usize {
        self.base(t) + i
    }

    /// Imaginary part of the voltage at phase-node `i`.
    pub fn vy(&self, t: usize, i: usize) -> usize {
        self.base(t) + self.np + i
    }

    pub fn pv_p(&self, t: usize, k: usize) -> usize {
        self.base(t) + 2 * self.np + 2 * k
    }

    pub fn pv_q(&self, t: usize, k: usize) -> usize {
        self.pv_p(t, k) + 1
    }

    pub fn wind_p(&self, t: usize, k: usize) -> usize {
        self.base(t) + 2 * self.np + 2 * self.n_pv + 2 * k
    }

    pub fn wind_q(&self, t: usize, k: usize) -> usize {
        self.wind_p(t, k) + 1
    }

    fn bat_base(&self, t: usize, k: usize) -> usize {
        self.base(t) + 2 * self.np + 2 * self.n_pv + 2 * self.n_wind + 7 * k
    }

    pub fn bat_re(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k)
    }

    pub fn bat_im(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 1
    }

    pub fn bat_char(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 2
    }

    pub fn bat_disch(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 3
    }

    pub fn bat_nchar(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 4
    }

    pub fn bat_ndisch(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 5
    }

    pub fn bat_e(&self, t: usize, k: usize) -> usize {
        self.bat_base(t, k) + 6
    }

    pub fn p_grid(&self, t: usize) -> usize {
        self.base(t) + self.stride - 2
    }

    pub fn p_loss(&self, t: usize) -> usize {
        self.base(t) + self.stride - 1
    }
}

/// Assembly-time perturbations, used by negative-control tests of the audit.
#[derive(Debug, Clone, Default)]
pub struct AssemblyTweaks {
    /// Added to the lower bound of the loss relaxation:
    /// `p_loss >= quadratic + offset`.
    pub loss_bound_offset: f64,
}

#[derive(Debug, Clone)]
pub struct AssembledProgram {
    pub program: ConicProgram,
    pub layout: VarLayout,
}

/// Per-branch data for the loss cone: variable/constant columns of the
/// factored drop `F_l u_l`.
struct BranchLossFactor {
    /// For each factor row: affine expressions in x (real) and y (imag).
    rows_x: Vec<LinExpr>,
    rows_y: Vec<LinExpr>,
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Contribution of one endpoint voltage to a branch-drop expression.
/// Slack phases are constant; masked phases carry nothing.
enum PhaseVar {
    Slack(Complex64),
    Var(usize),
    Absent,
}

impl ScheduleProblem {
    fn phase_var(&self, node_pos: usize, phase: Phase) -> PhaseVar {
        if node_pos == 0 {
            PhaseVar::Slack(self.v_slack[phase.index()])
        } else {
            match self.network.n_index(node_pos, phase) {
                Some(i) => PhaseVar::Var(i),
                None => PhaseVar::Absent,
            }
        }
    }

    fn branch_loss_factors(&self) -> Result<Vec<BranchLossFactor>, ScheduleError> {
        let mut factors = Vec::with_capacity(self.network.branches().len());
        for br in self.network.branches() {
            let im_asym = (br.admittance.map(|z| z.im)
                - br.admittance.map(|z| z.im).transpose())
            .amax();
            if im_asym > 1e-9 {
                return Err(ScheduleError::AsymmetricBranch { from: br.from, to: br.to });
            }
            let g = symmetrize(&br.admittance.map(|z| z.re));
            let eig = g.symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            if min_eig < -1e-10 {
                return Err(ScheduleError::NonPassiveBranch {
                    from: br.from,
                    to: br.to,
                    min_eigenvalue: min_eig,
                });
            }
            let fpos = self.network.node_pos(br.from).expect("validated");
            let tpos = self.network.node_pos(br.to).expect("validated");

            let mut rows_x = Vec::new();
            let mut rows_y = Vec::new();
            for r in 0..3 {
                let lambda = eig.eigenvalues[r].max(0.0);
                if lambda <= 1e-14 {
                    continue;
                }
                let scale = lambda.sqrt();
                // row of F = sqrt(lambda) * eigvec^T
                let mut row_x = LinExpr::default();
                let mut row_y = LinExpr::default();
                for p in Phase::ALL {
                    let w = scale * eig.eigenvectors[(p.index(), r)];
                    if w == 0.0 {
                        continue;
                    }
                    for (sign, pos) in [(1.0, fpos), (-1.0, tpos)] {
                        match self.phase_var(pos, p) {
                            PhaseVar::Slack(v) => {
                                row_x.constant += sign * w * v.re;
                                row_y.constant += sign * w * v.im;
                            }
                            PhaseVar::Var(i) => {
                                // indices fixed up per period during assembly
                                row_x.push(i, sign * w);
                                row_y.push(i, sign * w);
                            }
                            PhaseVar::Absent => {}
                        }
                    }
                }
                rows_x.push(row_x);
                rows_y.push(row_y);
            }
            factors.push(BranchLossFactor { rows_x, rows_y });
        }
        Ok(factors)
    }

    /// Slack power as an affine function of the phase-node voltages:
    /// `S_slack = const + sum_j w_j conj(V_j)`.
    fn slack_power_coeffs(&self) -> (Complex64, Vec<Complex64>) {
        let v_s = &self.v_slack;
        let i_fixed = self.partition.yss * v_s;
        let constant: Complex64 = (0..3).map(|p| v_s[p] * i_fixed[p].conj()).sum();
        let n = self.network.n_dim();
        let w: Vec<Complex64> = (0..n)
            .map(|j| (0..3).map(|p| v_s[p] * self.partition.ysn[(p, j)].conj()).sum())
            .collect();
        (constant, w)
    }
}

/// Build `p_grid`-side affine expressions: real and imaginary parts of the
/// slack power at period `t`.
fn slack_power_exprs(
    layout: &VarLayout,
    t: usize,
    constant: Complex64,
    w: &[Complex64],
) -> (LinExpr, LinExpr) {
    // w conj(V) = w (x - j y): Re = Re(w) x + Im(w) y, Im = Im(w) x - Re(w) y
    let mut re = LinExpr::constant(constant.re);
    let mut im = LinExpr::constant(constant.im);
    for (j, wj) in w.iter().enumerate() {
        re.push(layout.vx(t, j), wj.re);
        re.push(layout.vy(t, j), wj.im);
        im.push(layout.vx(t, j), wj.im);
        im.push(layout.vy(t, j), -wj.re);
    }
    (re, im)
}

/// Real part of the surrogate load power at phase-node `i`, period `t`:
/// `Re(s_zip) * (m + 2 Re(h) x - 2 Im(h) y)` (the bracket is real-valued).
fn load_real_expr(
    problem: &ScheduleProblem,
    layout: &VarLayout,
    t: usize,
    s_zip: &nalgebra::DVector<Complex64>,
) -> LinExpr {
    let lin = &problem.model.loads;
    let mut expr = LinExpr::default();
    for i in 0..layout.np {
        let zr = s_zip[i].re;
        if zr == 0.0 {
            continue;
        }
        expr.constant += zr * lin.m[i];
        expr.push(layout.vx(t, i), zr * 2.0 * lin.h[i].re);
        expr.push(layout.vy(t, i), zr * -2.0 * lin.h[i].im);
    }
    expr
}

/// Append the static reserve rows (one per period):
/// `sum_bat e_kt >= tau * real(d_t)` with `d_t = sum_loads s_load - p_grid`.
pub fn add_static_reserve(
    problem: &ScheduleProblem,
    layout: &VarLayout,
    program: &mut ConicProgram,
) -> Result<(), ScheduleError> {
    if problem.fleet.batteries.is_empty() {
        return Err(ScheduleError::ReserveWithoutBatteries);
    }
    let tau = problem.options.reserve_tau_hours;
    for t in 0..layout.horizon {
        let s_zip = aggregate_s_zip(&problem.fleet.loads, &problem.network, t);
        let load_re = load_real_expr(problem, layout, t, &s_zip);
        // tau * load_re - tau * p_grid - sum e <= 0
        let mut row = LinExpr::constant(tau * load_re.constant);
        for &(j, c) in &load_re.coeffs {
            row.push(j, tau * c);
        }
        row.push(layout.p_grid(t), -tau);
        for k in 0..layout.n_bat {
            row.push(layout.bat_e(t, k), -1.0);
        }
        program.inequalities.push(row);
    }
    Ok(())
}

/// Assemble the full conic program for a schedule problem.
pub fn assemble(problem: &ScheduleProblem) -> Result<AssembledProgram, ScheduleError> {
    assemble_with(problem, &AssemblyTweaks::default())
}

pub fn assemble_with(
    problem: &ScheduleProblem,
    tweaks: &AssemblyTweaks,
) -> Result<AssembledProgram, ScheduleError> {
    let net = &problem.network;
    let fleet = &problem.fleet;
    let series = &problem.series;
    let horizon = series.horizon;
    let np = net.n_dim();
    let layout = VarLayout::new(
        np,
        fleet.pv_units.len(),
        fleet.wind_turbines.len(),
        fleet.batteries.len(),
        horizon,
    );
    let mut program = ConicProgram::new(layout.total_vars());

    // Objective: energy cost plus the vanishing loss anchor.
    let base_kw = net.base_power / 1000.0;
    let dt = series.dt_hours;
    let min_price = series.price.iter().cloned().fold(f64::INFINITY, f64::min);
    let loss_anchor = LOSS_ANCHOR_WEIGHT * min_price * base_kw * dt;
    for t in 0..horizon {
        program.objective[layout.p_grid(t)] = series.price[t] * base_kw * dt;
        program.objective[layout.p_loss(t)] = loss_anchor;
    }

    // Devices per node position, in fleet order.
    enum Dev {
        Pv(usize),
        Wind(usize),
        Bat(usize),
    }
    let mut devices_at: Vec<Vec<Dev>> =
        (0..net.num_nodes()).map(|_| Vec::new()).collect();
    for (k, pv) in fleet.pv_units.iter().enumerate() {
        devices_at[net.node_pos(pv.node).expect("validated")].push(Dev::Pv(k));
    }
    for (k, wt) in fleet.wind_turbines.iter().enumerate() {
        devices_at[net.node_pos(wt.node).expect("validated")].push(Dev::Wind(k));
    }
    for (k, bat) in fleet.batteries.iter().enumerate() {
        devices_at[net.node_pos(bat.node).expect("validated")].push(Dev::Bat(k));
    }

    let flow = &problem.model.flow;
    let loads_lin = &problem.model.loads;
    let (slack_const, slack_w) = problem.slack_power_coeffs();
    let branch_factors = problem.branch_loss_factors()?;

    // Availability ceilings per period (the piecewise wind curve is data).
    let mut pv_ceiling = vec![vec![0.0; fleet.pv_units.len()]; horizon];
    let mut wind_ceiling = vec![vec![0.0; fleet.wind_turbines.len()]; horizon];
    for t in 0..horizon {
        for (k, pv) in fleet.pv_units.iter().enumerate() {
            pv_ceiling[t][k] = pv_bound(pv, series.irradiance[t])?;
        }
        for (k, wt) in fleet.wind_turbines.iter().enumerate() {
            wind_ceiling[t][k] = wind_bound(wt, series.wind_speed[t]);
        }
    }

    let v_nom = net.v_nom;
    for t in 0..horizon {
        let s_zip = aggregate_s_zip(&fleet.loads, net, t);

        // -- power-flow surrogate equalities, one complex row per phase-node --
        for i in 0..np {
            let mut row_re = LinExpr::default();
            let mut row_im = LinExpr::default();
            let czt = s_zip[i].conj();

            // constant: U_i + conj(s_zip) m_i
            let constant = flow.u[i] + czt * loads_lin.m[i];
            row_re.constant = constant.re;
            row_im.constant = constant.im;

            for j in 0..np {
                // A on V_j, B on conj(V_j)
                let mut a = flow.l[(i, j)];
                let mut b = flow.k[(i, j)];
                if i == j {
                    a += czt * loads_lin.t[i].conj();
                    b += czt * loads_lin.h[i].conj();
                }
                if a == Complex64::ZERO && b == Complex64::ZERO {
                    continue;
                }
                let apb = a + b;
                let amb_j = (a - b) * Complex64::i();
                row_re.push(layout.vx(t, j), apb.re);
                row_re.push(layout.vy(t, j), amb_j.re);
                row_im.push(layout.vx(t, j), apb.im);
                row_im.push(layout.vy(t, j), amb_j.im);
            }

            // device injections: -conj(s_dev)/3 = -(p - j q)/3
            let node = net.n_phases()[i].node;
            for dev in &devices_at[node] {
                let (p_var, q_var) = match dev {
                    Dev::Pv(k) => (layout.pv_p(t, *k), layout.pv_q(t, *k)),
                    Dev::Wind(k) => (layout.wind_p(t, *k), layout.wind_q(t, *k)),
                    Dev::Bat(k) => (layout.bat_re(t, *k), layout.bat_im(t, *k)),
                };
                row_re.push(p_var, -1.0 / 3.0);
                row_im.push(q_var, 1.0 / 3.0);
            }

            program.equalities.push(row_re);
            program.equalities.push(row_im);
        }

        // -- battery equalities --
        for (k, bat) in fleet.batteries.iter().enumerate() {
            // real(s_battery) = p_disch - p_char
            let mut link = LinExpr::default();
            link.push(layout.bat_re(t, k), 1.0)
                .push(layout.bat_disch(t, k), -1.0)
                .push(layout.bat_char(t, k), 1.0);
            program.equalities.push(link);

            // e_t = e_{t-1} + (p_char - n_char - p_disch - n_disch) dt
            let mut rec = LinExpr::default();
            rec.push(layout.bat_e(t, k), 1.0)
                .push(layout.bat_char(t, k), -dt)
                .push(layout.bat_nchar(t, k), dt)
                .push(layout.bat_disch(t, k), dt)
                .push(layout.bat_ndisch(t, k), dt);
            if t == 0 {
                rec.constant = -bat.e_init;
            } else {
                rec.push(layout.bat_e(t - 1, k), -1.0);
            }
            program.equalities.push(rec);
        }

        // -- simple bounds --
        for k in 0..layout.n_pv {
            let mut up = LinExpr::constant(-pv_ceiling[t][k]);
            up.push(layout.pv_p(t, k), 1.0);
            program.inequalities.push(up);
            program.inequalities.push(LinExpr::term(layout.pv_p(t, k), -1.0));
        }
        for k in 0..layout.n_wind {
            let mut up = LinExpr::constant(-wind_ceiling[t][k]);
            up.push(layout.wind_p(t, k), 1.0);
            program.inequalities.push(up);
            program.inequalities.push(LinExpr::term(layout.wind_p(t, k), -1.0));
        }
        for (k, bat) in fleet.batteries.iter().enumerate() {
            let mut row = LinExpr::constant(-bat.p_char_max);
            row.push(layout.bat_char(t, k), 1.0);
            program.inequalities.push(row);
            program.inequalities.push(LinExpr::term(layout.bat_char(t, k), -1.0));

            let mut row = LinExpr::constant(-bat.p_disch_max);
            row.push(layout.bat_disch(t, k), 1.0);
            program.inequalities.push(row);
            program.inequalities.push(LinExpr::term(layout.bat_disch(t, k), -1.0));

            let mut row = LinExpr::constant(-bat.e_max);
            row.push(layout.bat_e(t, k), 1.0);
            program.inequalities.push(row);
            let mut row = LinExpr::constant(bat.e_min);
            row.push(layout.bat_e(t, k), -1.0);
            program.inequalities.push(row);

            program.inequalities.push(LinExpr::term(layout.bat_nchar(t, k), -1.0));
            program.inequalities.push(LinExpr::term(layout.bat_ndisch(t, k), -1.0));
        }

        // -- grid power relaxation: p_grid >= Re(S_slack(V)) --
        let (slack_re, slack_im) = slack_power_exprs(&layout, t, slack_const, &slack_w);
        let mut relax = slack_re.clone();
        relax.push(layout.p_grid(t), -1.0);
        program.inequalities.push(relax);

        // -- surplus limitation (case 2): the physical slack exchange itself
        // must stay nonnegative in both parts, not just the cost variable --
        if !problem.options.surplus_allowed {
            program.inequalities.push(LinExpr::term(layout.p_grid(t), -1.0));
            for expr in [&slack_re, &slack_im] {
                let mut row = LinExpr::constant(-expr.constant);
                for &(j, c) in &expr.coeffs {
                    row.push(j, -c);
                }
                program.inequalities.push(row);
            }
        }

        // -- loss cone: ||F u||^2 <= p_loss - offset --
        let mut terms = Vec::new();
        for bf in &branch_factors {
            for (rx, ry) in bf.rows_x.iter().zip(&bf.rows_y) {
                let remap = |row: &LinExpr, imag: bool| -> LinExpr {
                    let mut out = LinExpr::constant(row.constant);
                    for &(i, c) in &row.coeffs {
                        let var = if imag { layout.vy(t, i) } else { layout.vx(t, i) };
                        out.push(var, c);
                    }
                    out
                };
                terms.push(remap(rx, false));
                terms.push(remap(ry, true));
            }
        }
        let mut bound = LinExpr::constant(-tweaks.loss_bound_offset);
        bound.push(layout.p_loss(t), 1.0);
        program.quadratics.push(QuadConstraint { terms, bound });

        // -- battery loss cones: a p^2 <= n - b p - c --
        for (k, bat) in fleet.batteries.iter().enumerate() {
            for (curve, p_var, n_var) in [
                (&bat.loss_char, layout.bat_char(t, k), layout.bat_nchar(t, k)),
                (&bat.loss_disch, layout.bat_disch(t, k), layout.bat_ndisch(t, k)),
            ] {
                let mut bound = LinExpr::constant(-curve.c);
                bound.push(n_var, 1.0).push(p_var, -curve.b);
                program.quadratics.push(QuadConstraint {
                    terms: vec![LinExpr::term(p_var, curve.a.sqrt())],
                    bound,
                });
            }
        }

        // -- converter capacity cones --
        let mut push_cone = |p_var: usize, q_var: usize, s_max: f64| {
            program.socs.push(SocConstraint {
                terms: vec![LinExpr::term(p_var, 1.0), LinExpr::term(q_var, 1.0)],
                bound: LinExpr::constant(s_max),
            });
        };
        for (k, pv) in fleet.pv_units.iter().enumerate() {
            push_cone(layout.pv_p(t, k), layout.pv_q(t, k), pv.s_max);
        }
        for (k, wt) in fleet.wind_turbines.iter().enumerate() {
            push_cone(layout.wind_p(t, k), layout.wind_q(t, k), wt.s_max);
        }
        for (k, bat) in fleet.batteries.iter().enumerate() {
            push_cone(layout.bat_re(t, k), layout.bat_im(t, k), bat.s_max);
        }

        // -- voltage cones: |v - v_nom e^{j phi}| <= delta v_nom --
        let delta = problem.options.delta_v;
        for (i, npair) in net.n_phases().iter().enumerate() {
            let center = v_nom * npair.phase.unit_phasor();
            program.socs.push(SocConstraint {
                terms: vec![
                    LinExpr { coeffs: vec![(layout.vx(t, i), 1.0)], constant: -center.re },
                    LinExpr { coeffs: vec![(layout.vy(t, i), 1.0)], constant: -center.im },
                ],
                bound: LinExpr::constant(delta * v_nom),
            });
        }
    }

    if problem.options.reserve_enabled {
        add_static_reserve(problem, &layout, &mut program)?;
    }

    Ok(AssembledProgram { program, layout })
}

/// Evaluate the slack complex power from a solved voltage (used when
/// extracting schedules and in audits).
pub(super) fn slack_power_from_solution(
    problem: &ScheduleProblem,
    v_n: &nalgebra::DVector<Complex64>,
) -> Complex64 {
    crate::network::grid_power(&problem.partition, &problem.v_slack, v_n)
}
