//! Generation and flow control for one physical step.
//!
//! With coordination, every node moves its generation straight to its
//! coordinated target and no power flows. Without coordination, the
//! generators first close the global supply-demand gap in proportion to
//! their remaining headroom, then flows between neighbors remove each node's
//! leftover mismatch against its individually given target.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::consensus::{
    flow_accumulate, ratio_consensus, ConsensusError, ConvergenceCriteria, FlowAccumulator,
};
use crate::coordination::NodeCapacities;
use crate::graph::{GridTopology, MetropolisMatrix, QMatrix};

/// Slack allowed on capacity bounds for consensus-derived values.
pub const BOUND_SLACK: f64 = 1e-8;

/// Relative tolerance on `sum(p_G) - sum(p_d)` before flow control refuses to run.
pub const FLOW_BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error("expected {expected} per-node values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {node}: desired {value} is outside generation bounds [{lo}, {hi}]")]
    DesiredOutOfBounds {
        node: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("required generation change {required} is outside the feasible range [{min}, {max}]")]
    InfeasibleStep { required: f64, min: f64, max: f64 },
    #[error("no generation headroom but a change of {required} is required")]
    ZeroRange { required: f64 },
    #[error(
        "generation and desired totals differ by {residual:e}; flows cannot fix a global imbalance"
    )]
    Imbalanced { residual: f64, tolerance: f64 },
    #[error("flow matrix is not antisymmetric at ({0}, {1})")]
    NotAntisymmetric(usize, usize),
    #[error("flow between {0} and {1} but they are not neighbors")]
    FlowOffEdge(usize, usize),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

fn check_len(expected: usize, got: usize) -> Result<(), DispatchError> {
    if expected != got {
        return Err(DispatchError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Per-node state after a physical step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub k: usize,
    /// Generated power `p_G`.
    pub p_gen: Vec<f64>,
    /// Net power `p = p_G + net inflow`.
    pub p_net: Vec<f64>,
    /// Desired net power `p_d`.
    pub p_desired: Vec<f64>,
    /// Net inflow `sum_j p_F_ji`.
    pub p_flow_net: Vec<f64>,
    /// Coordination error `p - p_d`.
    pub p_error: Vec<f64>,
}

impl GridState {
    /// Step-0 state: no flows, and the desired power equals the generation.
    pub fn initial(p_gen: Vec<f64>) -> Self {
        let n = p_gen.len();
        Self {
            k: 0,
            p_net: p_gen.clone(),
            p_desired: p_gen.clone(),
            p_flow_net: vec![0.0; n],
            p_error: vec![0.0; n],
            p_gen,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.p_gen.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.p_gen.is_empty()
    }

    pub fn total_generation(&self) -> f64 {
        self.p_gen.iter().sum()
    }

    pub fn total_net(&self) -> f64 {
        self.p_net.iter().sum()
    }

    pub fn max_abs_error(&self) -> f64 {
        self.p_error.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// Antisymmetric matrix of pairwise flows; entry `(i, j)` is power sent from `i` to `j`.
///
/// Only neighbor pairs can be nonzero. Constructors enforce both properties.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    n: usize,
    data: Vec<f64>,
}

impl FlowMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Sets `p_F_ij = v` and `p_F_ji = -v` for each `(i, j, v)`.
    pub fn from_edge_flows(
        topo: &GridTopology,
        flows: &[(usize, usize, f64)],
    ) -> Result<Self, DispatchError> {
        let mut m = Self::zeros(topo.node_count());
        for &(i, j, v) in flows {
            if !topo.is_edge(i, j) {
                return Err(DispatchError::FlowOffEdge(i, j));
            }
            m.set_pair(i, j, v);
        }
        Ok(m)
    }

    /// Flows from a settled accumulator: `p_F_ji = h_ij`.
    pub fn from_accumulator(acc: &FlowAccumulator) -> Self {
        let mut m = Self::zeros(acc.g().len());
        for (i, j, h) in acc.edge_values() {
            // h is h_ij for i < j, so p_F_ji = h and p_F_ij = -h.
            m.set_pair(j, i, h);
        }
        m
    }

    fn set_pair(&mut self, from: usize, to: usize, v: f64) {
        self.data[from * self.n + to] = v;
        self.data[to * self.n + from] = -v;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Power sent from `i` to `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `sum_j p_F_ji` for every node `i`.
    pub fn net_inflow(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(j, i)).sum())
            .collect()
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.first_asymmetry().is_none()
    }

    fn first_asymmetry(&self) -> Option<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i..self.n).map(move |j| (i, j)))
            .find(|&(i, j)| self.get(i, j) != -self.get(j, i))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-node limits on the generation change for the coming step.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DeltaBounds {
    pub fn ranges(&self) -> impl Iterator<Item = f64> + '_ {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l)
    }

    pub fn violations(&self, delta: &[f64], slack: f64) -> Vec<usize> {
        delta
            .iter()
            .enumerate()
            .filter(|&(i, &d)| d < self.lo[i] - slack || d > self.hi[i] + slack)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn compute_delta_bounds(state: &GridState, caps: &NodeCapacities) -> DeltaBounds {
    let (lo, hi) = caps
        .nodes()
        .iter()
        .zip(&state.p_gen)
        .map(|(c, &p)| (c.gen.lo - p, c.gen.hi - p))
        .unzip();
    DeltaBounds { lo, hi }
}

/// `delta_i = p_d_i - p_G_i(k-1)`; requires `desired` inside generation bounds.
pub fn generation_with_coordination(
    state: &GridState,
    desired: &[f64],
    caps: &NodeCapacities,
) -> Result<Vec<f64>, DispatchError> {
    check_len(state.len(), desired.len())?;
    check_len(state.len(), caps.len())?;
    for (node, (c, &d)) in caps.nodes().iter().zip(desired).enumerate() {
        if !c.gen.contains_with_slack(d, BOUND_SLACK) {
            return Err(DispatchError::DesiredOutOfBounds {
                node,
                value: d,
                lo: c.gen.lo,
                hi: c.gen.hi,
            });
        }
    }
    Ok(desired
        .iter()
        .zip(&state.p_gen)
        .map(|(d, p)| d - p)
        .collect())
}

/// Headroom-proportional generation change using global sums.
///
/// Every node starts from its lowest allowed change and receives a share of
/// the remaining gap proportional to its own `delta_hi - delta_lo`.
pub fn generation_closed_form(
    demand: f64,
    state: &GridState,
    db: &DeltaBounds,
) -> Result<Vec<f64>, DispatchError> {
    check_len(state.len(), db.lo.len())?;
    check_len(state.len(), db.hi.len())?;
    let required = demand - state.total_generation();
    let min: f64 = db.lo.iter().sum();
    let max: f64 = db.hi.iter().sum();
    let tol = 1e-9 * (1.0 + demand.abs());
    if required < min - tol || required > max + tol {
        return Err(DispatchError::InfeasibleStep { required, min, max });
    }
    let total_range = max - min;
    if total_range <= 0.0 {
        if (required - min).abs() <= tol {
            return Ok(db.lo.clone());
        }
        return Err(DispatchError::ZeroRange { required });
    }
    let surplus = required - min;
    Ok(db
        .lo
        .iter()
        .zip(db.ranges())
        .map(|(lo, r)| lo + r / total_range * surplus)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub delta: Vec<f64>,
    pub iters: usize,
}

/// Distributed counterpart of [`generation_closed_form`].
///
/// Each node knows only its own target, last generation and delta bounds.
/// The demand gap is never formed explicitly: the numerators
/// `p_d_i - p_G_i(k-1) - delta_lo_i` sum to it because the targets sum to
/// the demand. As in coordination, the steady-state ratio is clamped to
/// `[0, 1]` so the change stays inside the node's own delta bounds.
pub fn generation_distributed(
    desired: &[f64],
    state: &GridState,
    db: &DeltaBounds,
    topo: &GridTopology,
    criteria: &ConvergenceCriteria,
) -> Result<GenerationOutcome, DispatchError> {
    let n = topo.node_count();
    check_len(n, desired.len())?;
    check_len(n, state.len())?;
    check_len(n, db.lo.len())?;
    let z0: Vec<f64> = desired
        .iter()
        .zip(&state.p_gen)
        .zip(&db.lo)
        .map(|((d, p), lo)| d - p - lo)
        .collect();
    let w0: Vec<f64> = db.ranges().collect();
    let q = QMatrix::new(topo);
    let ratio = ratio_consensus(&q, &z0, &w0, criteria)?;
    let delta = db
        .lo
        .iter()
        .zip(&w0)
        .zip(&ratio.values)
        .map(|((lo, w), r)| lo + w * r.clamp(0.0, 1.0))
        .collect();
    Ok(GenerationOutcome {
        delta,
        iters: ratio.iters,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub flows: FlowMatrix,
    pub iters: usize,
}

/// Pairwise flows that cancel every node's mismatch `p_G - p_d`.
///
/// Requires the grid to be balanced already; flows only move power around.
pub fn flow_control(
    state: &GridState,
    topo: &GridTopology,
    s: &MetropolisMatrix,
    criteria: &ConvergenceCriteria,
) -> Result<FlowOutcome, DispatchError> {
    check_len(topo.node_count(), state.len())?;
    let g0: Vec<f64> = state
        .p_gen
        .iter()
        .zip(&state.p_desired)
        .map(|(p, d)| p - d)
        .collect();
    let residual: f64 = g0.iter().sum();
    let scale: f64 = state.p_desired.iter().map(|d| d.abs()).sum();
    let tolerance = FLOW_BALANCE_TOL * (1.0 + scale);
    if residual.abs() > tolerance {
        return Err(DispatchError::Imbalanced {
            residual,
            tolerance,
        });
    }
    let run = flow_accumulate(topo, s, &g0, criteria)?;
    Ok(FlowOutcome {
        flows: FlowMatrix::from_accumulator(&run.accumulator),
        iters: run.iters,
    })
}

/// Capacity checks on a state. Empty lists mean the state is within bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateAudit {
    pub gen_violations: Vec<usize>,
    pub net_violations: Vec<usize>,
}

impl StateAudit {
    pub fn check(state: &GridState, caps: &NodeCapacities) -> Self {
        Self {
            gen_violations: caps.gen_violations(&state.p_gen, BOUND_SLACK),
            net_violations: caps.net_violations(&state.p_net, BOUND_SLACK),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.gen_violations.is_empty() && self.net_violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: GridState,
    pub audit: StateAudit,
}

/// Applies a generation change and flows to `prev`, producing step `k + 1`.
///
/// Bound violations in the result are reported in the audit, not as errors.
pub fn apply_step(
    prev: &GridState,
    desired: &[f64],
    delta: &[f64],
    flows: &FlowMatrix,
    caps: &NodeCapacities,
) -> Result<StepOutcome, DispatchError> {
    let n = prev.len();
    check_len(n, desired.len())?;
    check_len(n, delta.len())?;
    check_len(n, flows.dim())?;
    check_len(n, caps.len())?;
    if let Some((i, j)) = flows.first_asymmetry() {
        return Err(DispatchError::NotAntisymmetric(i, j));
    }
    let p_gen: Vec<f64> = prev.p_gen.iter().zip(delta).map(|(p, d)| p + d).collect();
    let p_flow_net = flows.net_inflow();
    let p_net: Vec<f64> = p_gen.iter().zip(&p_flow_net).map(|(g, f)| g + f).collect();
    let p_error = p_net.iter().zip(desired).map(|(p, d)| p - d).collect();
    let state = GridState {
        k: prev.k + 1,
        p_gen,
        p_net,
        p_desired: desired.to_vec(),
        p_flow_net,
        p_error,
    };
    let audit = StateAudit::check(&state, caps);
    Ok(StepOutcome { state, audit })
}
