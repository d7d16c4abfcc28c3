//! Seeded generators for random grids, used by sweeps and property suites.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coordination::{NodeCapacities, NodeCapacity};
use crate::graph::GridTopology;

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability `extra_edge_prob`.
pub fn connected_topology<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    extra_edge_prob: f64,
) -> GridTopology {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push((parent, order[k]));
    }
    for i in 0..n {
        for j in i + 1..n {
            let present = edges
                .iter()
                .any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
            if !present && rng.random_bool(extra_edge_prob) {
                edges.push((i, j));
            }
        }
    }
    GridTopology::new(n, &edges).expect("spanning tree keeps the graph connected")
}

/// Random capacities with positive generation ranges inside wider net-power ranges.
pub fn capacities<R: Rng + ?Sized>(rng: &mut R, n: usize) -> NodeCapacities {
    let nodes = (0..n)
        .map(|_| {
            let lo = rng.random_range(0.0..50.0);
            let hi = lo + rng.random_range(1.0..80.0);
            let net_lo = lo - rng.random_range(0.0..10.0);
            let net_hi = hi + rng.random_range(0.0..60.0);
            NodeCapacity::new((lo, hi), (net_lo, net_hi))
        })
        .collect();
    NodeCapacities::new(nodes).expect("bounds are ordered by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_graphs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=12 {
            for p in [0.0, 0.3, 1.0] {
                let t = connected_topology(&mut rng, n, p);
                assert_eq!(t.node_count(), n);
                if p == 0.0 {
                    assert!(t.is_tree());
                }
                if p == 1.0 {
                    assert_eq!(t.edges().len(), n * (n - 1) / 2);
                }
            }
        }
        let caps = capacities(&mut rng, 8);
        assert!(caps.containment_violations().is_empty());
    }
}
