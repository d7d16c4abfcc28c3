//! Power coordination: split a total demand into per-node desired net power.
//!
//! Each node receives its lower generation bound plus a share of the surplus
//! `p_D - sum(gen_lo)` proportional to its generation range. The closed form
//! needs global sums; the distributed form recovers the same allocation with
//! ratio consensus where only the leading node knows `p_D`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::consensus::{ratio_consensus, ConsensusError, ConvergenceCriteria};
use crate::graph::{GridTopology, QMatrix};

/// Closed interval `[lo, hi]` in power units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    #[inline]
    pub fn contains_with_slack(&self, v: f64, slack: f64) -> bool {
        self.lo - slack <= v && v <= self.hi + slack
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Generation bounds and net-power bounds of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCapacity {
    pub gen: Interval,
    pub net: Interval,
}

impl NodeCapacity {
    pub const fn new(gen: (f64, f64), net: (f64, f64)) -> Self {
        Self {
            gen: Interval::new(gen.0, gen.1),
            net: Interval::new(net.0, net.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityField {
    Generation,
    Net,
}

impl core::fmt::Display for CapacityField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            CapacityField::Generation => "gen",
            CapacityField::Net => "net",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("no nodes")]
    Empty,
    #[error("node {node}: {field} bounds [{lo}, {hi}] are inverted or not finite")]
    InvalidBounds {
        node: usize,
        field: CapacityField,
        lo: f64,
        hi: f64,
    },
}

/// Per-node capacities for the whole grid.
///
/// Each interval is validated to be finite with `lo <= hi`. Containment of
/// the generation range in the net-power range is reported by
/// [`NodeCapacities::containment_violations`] rather than rejected, since
/// the reference six-node data has one node (index 5) whose lower
/// generation bound sits below its lower net-power bound.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCapacities(Vec<NodeCapacity>);

impl NodeCapacities {
    pub fn new(nodes: Vec<NodeCapacity>) -> Result<Self, CapacityError> {
        if nodes.is_empty() {
            return Err(CapacityError::Empty);
        }
        for (node, cap) in nodes.iter().enumerate() {
            for (field, iv) in [
                (CapacityField::Generation, cap.gen),
                (CapacityField::Net, cap.net),
            ] {
                if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                    return Err(CapacityError::InvalidBounds {
                        node,
                        field,
                        lo: iv.lo,
                        hi: iv.hi,
                    });
                }
            }
        }
        Ok(Self(nodes))
    }

    /// The six-node reference capacities.
    pub fn reference_six_node() -> Self {
        Self(Vec::from(TABLE1))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn nodes(&self) -> &[NodeCapacity] {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize) -> &NodeCapacity {
        &self.0[i]
    }

    pub fn gen_lo_sum(&self) -> f64 {
        self.0.iter().map(|c| c.gen.lo).sum()
    }

    pub fn gen_hi_sum(&self) -> f64 {
        self.0.iter().map(|c| c.gen.hi).sum()
    }

    pub fn gen_ranges(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.gen.width()).collect()
    }

    /// Nodes whose generation range is not inside their net-power range.
    pub fn containment_violations(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.net.covers(&c.gen))
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes whose `values` fall outside the net-power bounds by more than `slack`.
    pub fn net_violations(&self, values: &[f64], slack: f64) -> Vec<usize> {
        self.0
            .iter()
            .zip(values)
            .enumerate()
            .filter(|(_, (c, &v))| !c.net.contains_with_slack(v, slack))
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes whose `values` fall outside the generation bounds by more than `slack`.
    pub fn gen_violations(&self, values: &[f64], slack: f64) -> Vec<usize> {
        self.0
            .iter()
            .zip(values)
            .enumerate()
            .filter(|(_, (c, &v))| !c.gen.contains_with_slack(v, slack))
            .map(|(i, _)| i)
            .collect()
    }
}

const TABLE1: [NodeCapacity; 6] = [
    NodeCapacity::new((10.0, 50.0), (10.0, 80.0)),
    NodeCapacity::new((20.0, 80.0), (20.0, 120.0)),
    NodeCapacity::new((20.0, 40.0), (20.0, 60.0)),
    NodeCapacity::new((10.0, 45.0), (10.0, 75.0)),
    NodeCapacity::new((15.0, 60.0), (15.0, 90.0)),
    NodeCapacity::new((10.0, 55.0), (15.0, 80.0)),
];

/// Outcome of the realizability test `sum(gen_lo) <= p_D <= sum(gen_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realizability {
    pub demand: f64,
    pub total_lo: f64,
    pub total_hi: f64,
}

impl Realizability {
    /// `p_D - sum(gen_lo)`; negative when demand is below total minimum generation.
    pub fn lower_margin(&self) -> f64 {
        self.demand - self.total_lo
    }

    /// `sum(gen_hi) - p_D`; negative when demand exceeds total capacity.
    pub fn upper_margin(&self) -> f64 {
        self.total_hi - self.demand
    }

    pub fn is_realizable(&self) -> bool {
        self.lower_margin() >= 0.0 && self.upper_margin() >= 0.0
    }
}

impl core::fmt::Display for Realizability {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "demand {} in [{}, {}]: lower margin {}, upper margin {}",
            self.demand,
            self.total_lo,
            self.total_hi,
            self.lower_margin(),
            self.upper_margin()
        )
    }
}

pub fn check_realizability(demand: f64, caps: &NodeCapacities) -> Realizability {
    Realizability {
        demand,
        total_lo: caps.gen_lo_sum(),
        total_hi: caps.gen_hi_sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinationError {
    #[error("demand is not realizable ({0})")]
    NotRealizable(Realizability),
    #[error("all generators are fixed; demand {demand} must equal total generation {fixed}")]
    ZeroRange { demand: f64, fixed: f64 },
    #[error("topology has {topology} nodes but capacities describe {capacities}")]
    NodeCountMismatch { topology: usize, capacities: usize },
    #[error("leading node {leader} is out of range for {n} nodes")]
    LeaderOutOfRange { leader: usize, n: usize },
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinationMethod {
    ClosedForm,
    Distributed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinationResult {
    pub desired: Vec<f64>,
    pub method: CoordinationMethod,
    /// Consensus rounds; numerator and denominator advance together. Zero for the closed form.
    pub iters: usize,
}

/// Capacity-proportional allocation using global sums.
pub fn coordinate_closed_form(
    demand: f64,
    caps: &NodeCapacities,
) -> Result<CoordinationResult, CoordinationError> {
    let real = check_realizability(demand, caps);
    if !real.is_realizable() {
        return Err(CoordinationError::NotRealizable(real));
    }
    let total_range = real.total_hi - real.total_lo;
    let desired = if total_range > 0.0 {
        let share = real.lower_margin() / total_range;
        caps.nodes()
            .iter()
            .map(|c| c.gen.lo + c.gen.width() * share)
            .collect()
    } else if demand == real.total_lo {
        caps.nodes().iter().map(|c| c.gen.lo).collect()
    } else {
        return Err(CoordinationError::ZeroRange {
            demand,
            fixed: real.total_lo,
        });
    };
    Ok(CoordinationResult {
        desired,
        method: CoordinationMethod::ClosedForm,
        iters: 0,
    })
}

/// Distributed allocation by ratio consensus.
///
/// The leading node seeds its numerator with `p_D - gen_lo`, every other
/// node with `-gen_lo`; denominators start at each node's generation range.
/// The steady-state ratio at every node equals
/// `(p_D - sum(gen_lo)) / (sum(gen_hi) - sum(gen_lo))`, which lies in
/// `[0, 1]` for a realizable demand; each node clamps its ratio to that
/// interval so roundoff never pushes a target past its own bounds.
pub fn coordinate_distributed(
    demand: f64,
    caps: &NodeCapacities,
    topo: &GridTopology,
    leader: usize,
    criteria: &ConvergenceCriteria,
) -> Result<CoordinationResult, CoordinationError> {
    let n = topo.node_count();
    if n != caps.len() {
        return Err(CoordinationError::NodeCountMismatch {
            topology: n,
            capacities: caps.len(),
        });
    }
    if leader >= n {
        return Err(CoordinationError::LeaderOutOfRange { leader, n });
    }
    let real = check_realizability(demand, caps);
    if !real.is_realizable() {
        return Err(CoordinationError::NotRealizable(real));
    }

    let x0: Vec<f64> = caps
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == leader {
                demand - c.gen.lo
            } else {
                -c.gen.lo
            }
        })
        .collect();
    let y0 = caps.gen_ranges();

    let q = QMatrix::new(topo);
    let ratio = ratio_consensus(&q, &x0, &y0, criteria)?;
    let desired = caps
        .nodes()
        .iter()
        .zip(&ratio.values)
        .map(|(c, r)| c.gen.lo + c.gen.width() * r.clamp(0.0, 1.0))
        .collect();
    Ok(CoordinationResult {
        desired,
        method: CoordinationMethod::Distributed,
        iters: ratio.iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // lo + range * 65/245 = lo + range * 13/49, evaluated with exact fractions.
    const ANCHOR_150: [f64; 6] = [
        20.612244897959183,
        35.91836734693877,
        25.306122448979593,
        19.285714285714285,
        26.93877551020408,
        21.93877551020408,
    ];

    #[test]
    fn table1_sums() {
        let caps = NodeCapacities::reference_six_node();
        assert_eq!(caps.gen_lo_sum(), 85.0);
        assert_eq!(caps.gen_hi_sum(), 330.0);
        assert_eq!(caps.containment_violations(), vec![5]);
    }

    #[test]
    fn realizability_boundaries() {
        let caps = NodeCapacities::reference_six_node();
        let r = check_realizability(150.0, &caps);
        assert!(r.is_realizable());
        assert_eq!(r.lower_margin(), 65.0);
        assert_eq!(r.upper_margin(), 180.0);
        assert!(!check_realizability(84.0, &caps).is_realizable());
        assert!(check_realizability(85.0, &caps).is_realizable());
        assert!(check_realizability(330.0, &caps).is_realizable());
        assert!(!check_realizability(330.5, &caps).is_realizable());
    }

    #[test]
    fn closed_form_extremes_and_anchor() {
        let caps = NodeCapacities::reference_six_node();
        let lo = coordinate_closed_form(85.0, &caps).unwrap();
        assert_eq!(lo.desired, vec![10.0, 20.0, 20.0, 10.0, 15.0, 10.0]);
        let hi = coordinate_closed_form(330.0, &caps).unwrap();
        assert_eq!(hi.desired, vec![50.0, 80.0, 40.0, 45.0, 60.0, 55.0]);
        let mid = coordinate_closed_form(150.0, &caps).unwrap();
        for (a, b) in mid.desired.iter().zip(ANCHOR_150) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((mid.desired.iter().sum::<f64>() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_rejects_unrealizable() {
        let caps = NodeCapacities::reference_six_node();
        assert!(matches!(
            coordinate_closed_form(400.0, &caps),
            Err(CoordinationError::NotRealizable(_))
        ));
    }

    #[test]
    fn zero_range_grid() {
        let caps = NodeCapacities::new(vec![
            NodeCapacity::new((5.0, 5.0), (0.0, 10.0)),
            NodeCapacity::new((7.0, 7.0), (0.0, 10.0)),
        ])
        .unwrap();
        let r = coordinate_closed_form(12.0, &caps).unwrap();
        assert_eq!(r.desired, vec![5.0, 7.0]);
        let topo = GridTopology::path(2).unwrap();
        assert!(matches!(
            coordinate_distributed(12.0, &caps, &topo, 0, &ConvergenceCriteria::default()),
            Err(CoordinationError::Consensus(
                ConsensusError::InvalidDenominator
            ))
        ));
    }

    #[test]
    fn zero_range_node_gets_its_floor() {
        let caps = NodeCapacities::new(vec![
            NodeCapacity::new((5.0, 5.0), (0.0, 10.0)),
            NodeCapacity::new((0.0, 10.0), (0.0, 10.0)),
            NodeCapacity::new((0.0, 30.0), (0.0, 30.0)),
        ])
        .unwrap();
        let topo = GridTopology::path(3).unwrap();
        let r =
            coordinate_distributed(25.0, &caps, &topo, 1, &ConvergenceCriteria::default()).unwrap();
        assert_eq!(r.desired[0], 5.0);
        assert!((r.desired[1] - 5.0).abs() < 1e-8);
        assert!((r.desired[2] - 15.0).abs() < 1e-8);
    }

    #[test]
    fn single_node_distributed() {
        let caps =
            NodeCapacities::new(vec![NodeCapacity::new((10.0, 50.0), (10.0, 50.0))]).unwrap();
        let topo = GridTopology::new(1, &[]).unwrap();
        let r =
            coordinate_distributed(30.0, &caps, &topo, 0, &ConvergenceCriteria::default()).unwrap();
        assert_eq!(r.desired, vec![30.0]);
    }

    #[test]
    fn distributed_matches_anchor_for_any_leader() {
        let caps = NodeCapacities::reference_six_node();
        let topo = GridTopology::ring_with_chord(6).unwrap();
        let c = ConvergenceCriteria::default();
        for leader in 0..6 {
            let r = coordinate_distributed(150.0, &caps, &topo, leader, &c).unwrap();
            assert_eq!(r.method, CoordinationMethod::Distributed);
            for (a, b) in r.desired.iter().zip(ANCHOR_150) {
                assert!((a - b).abs() <= 1e-8 * b, "leader {leader}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn distributed_input_checks() {
        let caps = NodeCapacities::reference_six_node();
        let c = ConvergenceCriteria::default();
        let topo = GridTopology::ring_with_chord(6).unwrap();
        assert!(matches!(
            coordinate_distributed(150.0, &caps, &topo, 6, &c),
            Err(CoordinationError::LeaderOutOfRange { leader: 6, n: 6 })
        ));
        let small = GridTopology::path(3).unwrap();
        assert!(matches!(
            coordinate_distributed(150.0, &caps, &small, 0, &c),
            Err(CoordinationError::NodeCountMismatch { .. })
        ));
        assert!(matches!(
            coordinate_distributed(84.0, &caps, &topo, 0, &c),
            Err(CoordinationError::NotRealizable(_))
        ));
    }

    #[test]
    fn capacity_validation_names_node_and_field() {
        let err = NodeCapacities::new(vec![
            NodeCapacity::new((10.0, 50.0), (10.0, 80.0)),
            NodeCapacity::new((20.0, 10.0), (0.0, 80.0)),
        ])
        .unwrap_err();
        assert_eq!(
            err,
            CapacityError::InvalidBounds {
                node: 1,
                field: CapacityField::Generation,
                lo: 20.0,
                hi: 10.0
            }
        );
    }
}
