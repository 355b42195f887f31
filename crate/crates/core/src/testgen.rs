//! Seeded generators for randomized verification: connected radial networks
//! with unbalanced cross-phase coupling, and exponential loads on them.
//!
//! Used by property tests and the acceptance suite; not part of the
//! modelling API.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::devices::ExponentialLoad;
use crate::network::{HyperBranch, Hypernode, ThreePhaseNetwork};

/// A connected radial network with 2..=max_nodes hypernodes, symmetric
/// branch admittances, mild unbalance, positive branch conductance.
pub fn random_radial_network(rng: &mut ChaCha8Rng, max_nodes: usize) -> ThreePhaseNetwork {
    let h = rng.gen_range(2..=max_nodes.max(2));
    let nodes: Vec<Hypernode> = (0..h as u32).map(|i| Hypernode::full(i + 1)).collect();
    let mut branches = Vec::with_capacity(h - 1);
    for k in 1..h {
        let parent = rng.gen_range(0..k);
        let self_y = Complex64::new(rng.gen_range(4.0..30.0), -rng.gen_range(8.0..50.0));
        let mut m = Matrix3::from_diagonal_element(self_y);
        let coupling = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        for p in 0..3 {
            for q in (p + 1)..3 {
                m[(p, q)] = coupling;
                m[(q, p)] = coupling;
            }
        }
        branches.push(HyperBranch::new(nodes[parent].id, nodes[k].id, m));
    }
    ThreePhaseNetwork::new(nodes, branches, 100_000.0, 230.94, 1.0).expect("generated net is valid")
}

/// Exponential loads with the given exponent on every non-slack node,
/// unevenly split across phases.
pub fn random_loads(
    rng: &mut ChaCha8Rng,
    net: &ThreePhaseNetwork,
    alpha: f64,
    horizon: usize,
) -> Vec<ExponentialLoad> {
    let mut loads = Vec::new();
    for node in net.nodes().iter().skip(1) {
        let peak = Complex64::new(rng.gen_range(0.005..0.05), rng.gen_range(0.0..0.02));
        let series: Vec<Complex64> =
            (0..horizon).map(|_| peak * rng.gen_range(0.3..1.0)).collect();
        let a = rng.gen_range(0.2..0.45);
        let b = rng.gen_range(0.2..0.45);
        loads.push(
            ExponentialLoad::new(node.id, alpha, series, [a, b, 1.0 - a - b])
                .expect("generated load is valid"),
        );
    }
    loads
}

/// Deterministic RNG for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
