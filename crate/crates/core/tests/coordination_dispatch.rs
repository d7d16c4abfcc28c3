use gridconsensus_core::consensus::ConvergenceCriteria;
use gridconsensus_core::coordination::{
    coordinate_closed_form, coordinate_distributed, NodeCapacities,
};
use gridconsensus_core::dispatch::{
    apply_step, compute_delta_bounds, flow_control, generation_closed_form, generation_distributed,
    FlowMatrix, GridState,
};
use gridconsensus_core::graph::{GridTopology, MetropolisMatrix};
use gridconsensus_core::random;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ANCHOR: [f64; 6] = [
    20.612244897959183,
    35.91836734693877,
    25.306122448979593,
    19.285714285714285,
    26.93877551020408,
    21.93877551020408,
];

/// A random generation instance: grid, capacities, last generation and per-node targets.
struct Instance {
    topo: GridTopology,
    caps: NodeCapacities,
    state: GridState,
    desired: Vec<f64>,
    demand: f64,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=12);
    let p = rng.random_range(0.0..0.5);
    let topo = random::connected_topology(&mut rng, n, p);
    let caps = random::capacities(&mut rng, n);
    let p_gen = caps
        .nodes()
        .iter()
        .map(|c| rng.random_range(c.gen.lo..=c.gen.hi))
        .collect();
    let demand = rng.random_range(caps.gen_lo_sum()..=caps.gen_hi_sum());
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let desired = weights.iter().map(|w| demand * w / wsum).collect();
    Instance {
        topo,
        caps,
        state: GridState::initial(p_gen),
        desired,
        demand,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Steady-state edge accumulators on a tree, found by cutting each edge.
///
/// Removing edge `(i, j)` leaves the part `T` containing `j`. Inside `T` the
/// accumulators cancel in pairs, so `h_ji = |T| * mean - sum_{T} g0`.
fn tree_accumulators(topo: &GridTopology, g0: &[f64]) -> Vec<((usize, usize), f64)> {
    let n = topo.node_count();
    let mean = g0.iter().sum::<f64>() / n as f64;
    topo.edges()
        .iter()
        .map(|&(i, j)| {
            let mut seen = vec![false; n];
            seen[i] = true;
            seen[j] = true;
            let mut stack = vec![j];
            let (mut size, mut sum) = (0usize, 0.0);
            while let Some(v) = stack.pop() {
                size += 1;
                sum += g0[v];
                for &w in topo.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            let h_ji = size as f64 * mean - sum;
            ((i, j), -h_ji)
        })
        .collect()
}

#[test]
fn six_node_anchor() {
    let caps = NodeCapacities::reference_six_node();
    let topo = GridTopology::ring_with_chord(6).unwrap();
    let exact = coordinate_closed_form(150.0, &caps).unwrap();
    let dist =
        coordinate_distributed(150.0, &caps, &topo, 0, &ConvergenceCriteria::default()).unwrap();
    for ((e, d), a) in exact.desired.iter().zip(&dist.desired).zip(ANCHOR) {
        assert!((e - a).abs() <= 1e-12 * a);
        assert!((d - a).abs() <= 1e-8 * a);
    }
}

#[test]
fn six_node_distributed_matches_closed_form() {
    let caps = NodeCapacities::reference_six_node();
    let c = ConvergenceCriteria::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..100 {
        let topo = random::connected_topology(&mut rng, 6, 0.3);
        let demand = rng.random_range(85.0..=330.0);
        let exact = coordinate_closed_form(demand, &caps).unwrap();
        let dist = coordinate_distributed(demand, &caps, &topo, round % 6, &c).unwrap();
        for (a, b) in dist.desired.iter().zip(&exact.desired) {
            assert!(
                (a - b).abs() <= 1e-8 * b.abs(),
                "demand {demand}: {a} vs {b}"
            );
        }
        let total: f64 = dist.desired.iter().sum();
        assert!((total - demand).abs() <= 1e-8 * demand);
        assert!(caps.gen_violations(&dist.desired, 0.0).is_empty());
    }
}

#[test]
fn generation_oracle_sweep() {
    let c = ConvergenceCriteria::default();
    for seed in 0..1000u64 {
        let inst = instance(seed);
        let db = compute_delta_bounds(&inst.state, &inst.caps);
        let exact = generation_closed_form(inst.demand, &inst.state, &db).unwrap();
        let dist = generation_distributed(&inst.desired, &inst.state, &db, &inst.topo, &c).unwrap();
        let scale = max_abs(&exact).max(1.0);
        for (a, b) in dist.delta.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-8 * scale, "seed {seed}: {a} vs {b}");
        }
        assert!(db.violations(&dist.delta, 1e-8).is_empty(), "seed {seed}");
        let gap = inst.demand - inst.state.total_generation();
        let closed: f64 = dist.delta.iter().sum();
        assert!(
            (closed - gap).abs() <= 1e-8 * (1.0 + inst.demand),
            "seed {seed}"
        );
    }
}

#[test]
fn flow_annihilation_sweep() {
    let c = ConvergenceCriteria::default();
    for seed in 0..1000u64 {
        let inst = instance(seed);
        let db = compute_delta_bounds(&inst.state, &inst.caps);
        let gen = generation_distributed(&inst.desired, &inst.state, &db, &inst.topo, &c).unwrap();
        let zeros = FlowMatrix::zeros(inst.topo.node_count());
        let pre = apply_step(&inst.state, &inst.desired, &gen.delta, &zeros, &inst.caps).unwrap();
        let s = MetropolisMatrix::new(&inst.topo);
        let flow = flow_control(&pre.state, &inst.topo, &s, &c).unwrap();
        let n = inst.topo.node_count();
        for i in 0..n {
            for j in 0..n {
                assert!((flow.flows.get(i, j) + flow.flows.get(j, i)).abs() <= 1e-12);
                if flow.flows.get(i, j) != 0.0 {
                    assert!(inst.topo.is_edge(i, j));
                }
            }
        }
        let post = apply_step(
            &inst.state,
            &inst.desired,
            &gen.delta,
            &flow.flows,
            &inst.caps,
        )
        .unwrap();
        assert!(
            post.state.max_abs_error() <= 1e-6,
            "seed {seed}: {}",
            post.state.max_abs_error()
        );
        assert!(post.audit.gen_violations.is_empty());
    }
}

#[test]
fn path_flow_example() {
    let topo = GridTopology::path(3).unwrap();
    let s = MetropolisMatrix::new(&topo);
    let state = GridState {
        k: 1,
        p_gen: vec![13.0, 10.0, 7.0],
        p_net: vec![13.0, 10.0, 7.0],
        p_desired: vec![10.0, 10.0, 10.0],
        p_flow_net: vec![0.0; 3],
        p_error: vec![3.0, 0.0, -3.0],
    };
    let flow = flow_control(&state, &topo, &s, &ConvergenceCriteria::default()).unwrap();
    // Entry (j, i) carries h_ij.
    assert!((flow.flows.get(1, 0) + 3.0).abs() <= 1e-8);
    assert!((flow.flows.get(1, 2) - 3.0).abs() <= 1e-8);
    assert!((flow.flows.get(0, 1) - 3.0).abs() <= 1e-8);
    assert_eq!(flow.flows.get(0, 2), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tree_flows_match_cut_sums(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random::connected_topology(&mut rng, n, 0.0);
        let mut g0: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mean = g0.iter().sum::<f64>() / n as f64;
        g0.iter_mut().for_each(|g| *g -= mean);
        let desired: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..50.0)).collect();
        let p_gen: Vec<f64> = desired.iter().zip(&g0).map(|(d, g)| d + g).collect();
        let state = GridState {
            k: 1,
            p_net: p_gen.clone(),
            p_gen,
            p_desired: desired,
            p_flow_net: vec![0.0; n],
            p_error: g0.clone(),
        };
        let s = MetropolisMatrix::new(&topo);
        let flow = flow_control(&state, &topo, &s, &ConvergenceCriteria::default()).unwrap();
        for ((i, j), h) in tree_accumulators(&topo, &g0) {
            prop_assert!((flow.flows.get(j, i) - h).abs() <= 1e-8, "edge ({}, {}): {} vs {}", i, j, flow.flows.get(j, i), h);
        }
    }

    #[test]
    fn leader_choice_does_not_matter(seed in any::<u64>(), n in 1usize..=12, frac in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random::connected_topology(&mut rng, n, 0.3);
        let caps = random::capacities(&mut rng, n);
        let demand = caps.gen_lo_sum() + frac * (caps.gen_hi_sum() - caps.gen_lo_sum());
        let c = ConvergenceCriteria::default();
        let base = coordinate_distributed(demand, &caps, &topo, 0, &c).unwrap();
        for leader in 1..n {
            let other = coordinate_distributed(demand, &caps, &topo, leader, &c).unwrap();
            for (a, b) in other.desired.iter().zip(&base.desired) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn targets_grow_with_demand(seed in any::<u64>(), n in 1usize..=12, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random::connected_topology(&mut rng, n, 0.3);
        let caps = random::capacities(&mut rng, n);
        let (lo, hi) = (caps.gen_lo_sum(), caps.gen_hi_sum());
        let (a, b) = (a.min(b), a.max(b));
        let c = ConvergenceCriteria::default();
        let small = coordinate_distributed(lo + a * (hi - lo), &caps, &topo, 0, &c).unwrap();
        let large = coordinate_distributed(lo + b * (hi - lo), &caps, &topo, 0, &c).unwrap();
        for (x, y) in small.desired.iter().zip(&large.desired) {
            prop_assert!(*x <= y + 1e-8 * y.abs().max(1.0));
        }
        prop_assert!(caps.gen_violations(&small.desired, 0.0).is_empty());
    }
}
