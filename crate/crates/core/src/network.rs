//! Three-phase network model.
//!
//! A microgrid is a connected hypergraph: hypernodes are three-phase buses,
//! hyperbranches are line sections carrying a 3x3 complex admittance block.
//! The first hypernode is always the slack (the point of common coupling,
//! held at a fixed balanced voltage); every other bus contributes voltage
//! variables.
//!
//! Vector layout is phase-major everywhere: all phase-A entries come first,
//! then phase B, then phase C. The slack occupies full indices
//! `{0, H, 2H}`. Buses with missing phases (single- or two-phase laterals)
//! carry an explicit phase mask; masked phases have zeroed admittance
//! rows/columns and no variables.
//!
//! All quantities are per-unit on `base_power` / `base_voltage`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

/// One of the three phases, with the paper-standard phasing convention:
/// A at 0 rad, B at -2pi/3, C at +2pi/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    /// Phase angle in radians: 0, -2pi/3, +2pi/3.
    pub fn angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * std::f64::consts::PI / 3.0,
            Phase::C => 2.0 * std::f64::consts::PI / 3.0,
        }
    }

    /// Unit phasor `e^{j*angle}`.
    pub fn unit_phasor(self) -> Complex64 {
        Complex64::from_polar(1.0, self.angle())
    }

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        match i {
            0 => Some(Phase::A),
            1 => Some(Phase::B),
            2 => Some(Phase::C),
            _ => None,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::A => write!(f, "a"),
            Phase::B => write!(f, "b"),
            Phase::C => write!(f, "c"),
        }
    }
}

/// A three-phase bus. `phases[p]` marks whether phase `p` is present.
#[derive(Debug, Clone)]
pub struct Hypernode {
    pub id: u32,
    pub phases: [bool; 3],
}

impl Hypernode {
    pub fn full(id: u32) -> Self {
        Hypernode { id, phases: [true; 3] }
    }

    pub fn has_phase(&self, phase: Phase) -> bool {
        self.phases[phase.index()]
    }
}

/// A line section between two hypernodes with its 3x3 per-unit admittance.
///
/// Rows/columns on phases absent at either endpoint must be zero.
#[derive(Debug, Clone)]
pub struct HyperBranch {
    pub from: u32,
    pub to: u32,
    pub admittance: Matrix3<Complex64>,
}

impl HyperBranch {
    pub fn new(from: u32, to: u32, admittance: Matrix3<Complex64>) -> Self {
        HyperBranch { from, to, admittance }
    }

    /// Branch with identical per-phase admittance `y` and no cross-phase coupling.
    pub fn diagonal(from: u32, to: u32, y: Complex64) -> Self {
        HyperBranch::new(from, to, Matrix3::from_diagonal_element(y))
    }
}

/// A non-slack (node, phase) pair carrying a voltage variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodePhase {
    /// Position of the node in the network's node list (never 0, the slack).
    pub node: usize,
    pub phase: Phase,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network must contain at least two hypernodes (slack plus one)")]
    TooFewNodes,
    #[error("duplicate hypernode id {0}")]
    DuplicateNodeId(u32),
    #[error("branch {from}-{to} references unknown hypernode {id}")]
    UnknownNode { from: u32, to: u32, id: u32 },
    #[error("branch {0}-{0} is a self loop")]
    SelfLoop(u32),
    #[error("branch {from}-{to} has a non-finite admittance entry")]
    NonFiniteAdmittance { from: u32, to: u32 },
    #[error("branch {from}-{to} has an all-zero admittance matrix")]
    ZeroAdmittance { from: u32, to: u32 },
    #[error("branch {from}-{to} couples phase {phase} which is absent at one endpoint")]
    InactivePhaseCoupling { from: u32, to: u32, phase: Phase },
    #[error("hypergraph is disconnected: node {0} is unreachable from the slack")]
    Disconnected(u32),
    #[error("slack hypernode must carry all three phases")]
    SlackMissingPhase,
    #[error("nominal voltage must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error("base power and voltage must be positive")]
    NonPositiveBase,
}

/// Immutable three-phase network model. The first hypernode is the slack.
#[derive(Debug, Clone)]
pub struct ThreePhaseNetwork {
    nodes: Vec<Hypernode>,
    branches: Vec<HyperBranch>,
    /// Power base in VA.
    pub base_power: f64,
    /// Phase-to-neutral voltage base in volts.
    pub base_voltage: f64,
    /// Nominal slack voltage magnitude in per-unit.
    pub v_nom: f64,
    /// Node id -> position in `nodes`.
    id_to_pos: Vec<(u32, usize)>,
    /// Active non-slack (node, phase) pairs in phase-major order.
    n_phases: Vec<NodePhase>,
    /// `[node][phase] -> position in n_phases`, for active non-slack pairs.
    n_lookup: Vec<[Option<usize>; 3]>,
}

impl ThreePhaseNetwork {
    /// Build and validate a network. `nodes[0]` is taken as the slack.
    pub fn new(
        nodes: Vec<Hypernode>,
        branches: Vec<HyperBranch>,
        base_power: f64,
        base_voltage: f64,
        v_nom: f64,
    ) -> Result<Self, NetworkError> {
        if nodes.len() < 2 {
            return Err(NetworkError::TooFewNodes);
        }
        if !(base_power > 0.0 && base_voltage > 0.0) {
            return Err(NetworkError::NonPositiveBase);
        }
        if !(v_nom > 0.0) {
            return Err(NetworkError::NonPositiveVoltage(v_nom));
        }
        if nodes[0].phases != [true; 3] {
            return Err(NetworkError::SlackMissingPhase);
        }

        let mut id_to_pos: Vec<(u32, usize)> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        id_to_pos.sort_unstable_by_key(|(id, _)| *id);
        for w in id_to_pos.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(NetworkError::DuplicateNodeId(w[0].0));
            }
        }

        let lookup = |id: u32| -> Option<usize> {
            id_to_pos
                .binary_search_by_key(&id, |(i, _)| *i)
                .ok()
                .map(|k| id_to_pos[k].1)
        };

        for br in &branches {
            if br.from == br.to {
                return Err(NetworkError::SelfLoop(br.from));
            }
            let fp = lookup(br.from).ok_or(NetworkError::UnknownNode {
                from: br.from,
                to: br.to,
                id: br.from,
            })?;
            let tp = lookup(br.to).ok_or(NetworkError::UnknownNode {
                from: br.from,
                to: br.to,
                id: br.to,
            })?;
            if br.admittance.iter().any(|y| !y.re.is_finite() || !y.im.is_finite()) {
                return Err(NetworkError::NonFiniteAdmittance { from: br.from, to: br.to });
            }
            if br.admittance.iter().all(|y| *y == Complex64::ZERO) {
                return Err(NetworkError::ZeroAdmittance { from: br.from, to: br.to });
            }
            // No coupling through a phase that is missing at either end.
            for p in Phase::ALL {
                let active = nodes[fp].has_phase(p) && nodes[tp].has_phase(p);
                if active {
                    continue;
                }
                let pi = p.index();
                let row_used = (0..3).any(|q| br.admittance[(pi, q)] != Complex64::ZERO);
                let col_used = (0..3).any(|q| br.admittance[(q, pi)] != Complex64::ZERO);
                if row_used || col_used {
                    return Err(NetworkError::InactivePhaseCoupling { from: br.from, to: br.to, phase: p });
                }
            }
        }

        // Connectivity over the hypernode graph (branch level).
        let h = nodes.len();
        let mut adj = vec![Vec::new(); h];
        for br in &branches {
            let fp = lookup(br.from).unwrap();
            let tp = lookup(br.to).unwrap();
            adj[fp].push(tp);
            adj[tp].push(fp);
        }
        let mut seen = vec![false; h];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Disconnected(nodes[k].id));
        }

        // Phase-major list of active non-slack phase-nodes.
        let mut n_phases = Vec::new();
        let mut n_lookup = vec![[None; 3]; h];
        for p in Phase::ALL {
            for (pos, node) in nodes.iter().enumerate().skip(1) {
                if node.has_phase(p) {
                    n_lookup[pos][p.index()] = Some(n_phases.len());
                    n_phases.push(NodePhase { node: pos, phase: p });
                }
            }
        }

        Ok(ThreePhaseNetwork {
            nodes,
            branches,
            base_power,
            base_voltage,
            v_nom,
            id_to_pos,
            n_phases,
            n_lookup,
        })
    }

    pub fn nodes(&self) -> &[Hypernode] {
        &self.nodes
    }

    pub fn branches(&self) -> &[HyperBranch] {
        &self.branches
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Dimension of the full phase-major vector space, `3 * |H|`.
    pub fn full_dim(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Number of active non-slack phase-nodes (voltage variables).
    pub fn n_dim(&self) -> usize {
        self.n_phases.len()
    }

    /// Active non-slack phase-nodes in phase-major order.
    pub fn n_phases(&self) -> &[NodePhase] {
        &self.n_phases
    }

    /// Full phase-major index of `(node position, phase)`.
    pub fn full_index(&self, node_pos: usize, phase: Phase) -> usize {
        phase.index() * self.nodes.len() + node_pos
    }

    /// Position in the non-slack variable vector, if that phase is active.
    pub fn n_index(&self, node_pos: usize, phase: Phase) -> Option<usize> {
        self.n_lookup.get(node_pos).and_then(|row| row[phase.index()])
    }

    /// Node position for an external node id.
    pub fn node_pos(&self, id: u32) -> Option<usize> {
        self.id_to_pos
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|k| self.id_to_pos[k].1)
    }

    /// Balanced flat-start voltage over the non-slack phase-nodes:
    /// `v_nom * e^{j*phi}` per entry, with the phase of that entry.
    pub fn flat_n_voltage(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.n_dim(),
            self.n_phases.iter().map(|np| self.v_nom * np.phase.unit_phasor()),
        )
    }
}

/// Assemble the full three-phase admittance matrix `Y_H` (phase-major,
/// `3H x 3H`) as `(I3 (x) A) * Y_E * (I3 (x) A)^T`, with `A` the node-branch
/// incidence matrix and `Y_E` the per-branch admittances laid out phase-major.
///
/// Rows/columns of masked phases are zero.
pub fn build_admittance(net: &ThreePhaseNetwork) -> DMatrix<Complex64> {
    let h = net.num_nodes();
    let e = net.branches().len();

    // Incidence: +1 leaving `from`, -1 entering `to`.
    let mut incidence = DMatrix::<Complex64>::zeros(h, e);
    for (l, br) in net.branches().iter().enumerate() {
        let fp = net.node_pos(br.from).expect("validated");
        let tp = net.node_pos(br.to).expect("validated");
        incidence[(fp, l)] = Complex64::new(1.0, 0.0);
        incidence[(tp, l)] = Complex64::new(-1.0, 0.0);
    }

    // I3 (x) A, conformal with the phase-major layout.
    let mut expanded = DMatrix::<Complex64>::zeros(3 * h, 3 * e);
    for p in 0..3 {
        expanded.view_mut((p * h, p * e), (h, e)).copy_from(&incidence);
    }

    // Y_E in phase-major branch layout: block (p, q) is diag over branches of Y_l[p, q].
    let mut y_branches = DMatrix::<Complex64>::zeros(3 * e, 3 * e);
    for (l, br) in net.branches().iter().enumerate() {
        for p in 0..3 {
            for q in 0..3 {
                y_branches[(p * e + l, q * e + l)] = br.admittance[(p, q)];
            }
        }
    }

    &expanded * y_branches * expanded.transpose()
}

/// The slack/non-slack partition of `Y_H`, restricted to active phases.
///
/// Slack blocks are ordered (phase A, B, C); non-slack blocks follow the
/// network's phase-major active ordering.
#[derive(Debug, Clone)]
pub struct AdmittancePartition {
    pub yss: Matrix3<Complex64>,
    pub ysn: DMatrix<Complex64>,
    pub yns: DMatrix<Complex64>,
    pub ynn: DMatrix<Complex64>,
}

impl AdmittancePartition {
    pub fn n_dim(&self) -> usize {
        self.ynn.nrows()
    }
}

/// Partition the assembled `Y_H` into slack and non-slack blocks.
pub fn partition(y_full: &DMatrix<Complex64>, net: &ThreePhaseNetwork) -> AdmittancePartition {
    let n = net.n_dim();
    let slack_idx: [usize; 3] = [
        net.full_index(0, Phase::A),
        net.full_index(0, Phase::B),
        net.full_index(0, Phase::C),
    ];
    let n_idx: Vec<usize> = net
        .n_phases()
        .iter()
        .map(|np| net.full_index(np.node, np.phase))
        .collect();

    let mut yss = Matrix3::<Complex64>::zeros();
    for (i, &fi) in slack_idx.iter().enumerate() {
        for (j, &fj) in slack_idx.iter().enumerate() {
            yss[(i, j)] = y_full[(fi, fj)];
        }
    }
    let mut ysn = DMatrix::<Complex64>::zeros(3, n);
    let mut yns = DMatrix::<Complex64>::zeros(n, 3);
    for (i, &fi) in slack_idx.iter().enumerate() {
        for (j, &fj) in n_idx.iter().enumerate() {
            ysn[(i, j)] = y_full[(fi, fj)];
            yns[(j, i)] = y_full[(fj, fi)];
        }
    }
    let mut ynn = DMatrix::<Complex64>::zeros(n, n);
    for (i, &fi) in n_idx.iter().enumerate() {
        for (j, &fj) in n_idx.iter().enumerate() {
            ynn[(i, j)] = y_full[(fi, fj)];
        }
    }

    AdmittancePartition { yss, ysn, yns, ynn }
}

/// Balanced slack voltage `v_nom * (1, e^{-2pi j/3}, e^{2pi j/3})`.
pub fn slack_voltage(v_nom: f64) -> Result<Vector3<Complex64>, NetworkError> {
    if !(v_nom > 0.0) {
        return Err(NetworkError::NonPositiveVoltage(v_nom));
    }
    Ok(Vector3::from_iterator(
        Phase::ALL.iter().map(|p| v_nom * p.unit_phasor()),
    ))
}

/// Exact nodal complex power `s = v o conj(i)` over the non-slack
/// phase-nodes, with `i = Yns Vs + Ynn Vn` the current injected into the
/// network.
pub fn nodal_power(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    v_n: &DVector<Complex64>,
) -> DVector<Complex64> {
    let i_n = &part.yns * v_s + &part.ynn * v_n;
    DVector::from_iterator(v_n.len(), v_n.iter().zip(i_n.iter()).map(|(v, i)| v * i.conj()))
}

/// Total active losses `real(V^H Y V)` over the full voltage vector.
///
/// Equals the per-branch `real(U_l^H Y_l U_l)` summation exactly for any
/// network assembled from branch admittances.
pub fn total_losses(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    v_n: &DVector<Complex64>,
) -> f64 {
    let i_s = part.yss * v_s + &part.ysn * v_n;
    let i_n = &part.yns * v_s + &part.ynn * v_n;
    // V^H I = sum conj(v) i over both partitions.
    let s = v_s.dotc(&i_s) + v_n.dotc(&i_n);
    s.re
}

/// Complex power drawn from the main grid at the slack:
/// `sum_p v_s,p * conj(i_s,p)` with `i_s = Yss Vs + Ysn Vn`.
pub fn grid_power(
    part: &AdmittancePartition,
    v_s: &Vector3<Complex64>,
    v_n: &DVector<Complex64>,
) -> Complex64 {
    let i_s = part.yss * v_s + &part.ysn * v_n;
    // i^H v = sum conj(i) v = sum v conj(i)
    i_s.dotc(v_s)
}
