//! Synchronous-round linear consensus.
//!
//! All iterations here are `x(t+1) = W x(t)` with every node reading the
//! previous round's values. On top of that sit ratio consensus (two coupled
//! sum-preserving iterations whose per-node ratio converges to the ratio of
//! initial sums) and the flow accumulator used to derive pairwise flows.

use alloc::vec;
use alloc::vec::Vec;
use core::mem;

use thiserror::Error;

use crate::graph::{GridTopology, MetropolisMatrix, QMatrix, WeightMatrix};

/// Smallest steady-state denominator accepted by [`ratio_consensus`].
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("convergence tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, vector has {vector} entries")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("weight matrix has a negative entry")]
    NegativeWeight,
    #[error("weight matrix does not match the topology on edge ({0}, {1})")]
    TopologyMismatch(usize, usize),
    #[error("denominator seed must be nonnegative with a positive sum")]
    InvalidDenominator,
    #[error("degenerate denominator {value:e} at node {node}")]
    DegenerateDenominator { node: usize, value: f64 },
    #[error("no convergence within {iters} rounds")]
    NotConverged { iters: usize, values: Vec<f64> },
}

/// Stopping rule: stop at the first round whose max per-node change is at most `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriteria {
    eps: f64,
    max_iters: usize,
}

impl ConvergenceCriteria {
    pub const DEFAULT_EPS: f64 = 1e-10;
    pub const DEFAULT_MAX_ITERS: usize = 100_000;

    pub fn new(eps: f64, max_iters: usize) -> Result<Self, ConsensusError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ConsensusError::InvalidTolerance(eps));
        }
        if max_iters == 0 {
            return Err(ConsensusError::ZeroIterations);
        }
        Ok(Self { eps, max_iters })
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn max_iters(&self) -> usize {
        self.max_iters
    }
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            eps: Self::DEFAULT_EPS,
            max_iters: Self::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    pub values: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

impl ConsensusResult {
    /// Turns a non-converged result into [`ConsensusError::NotConverged`].
    pub fn into_converged(self) -> Result<Self, ConsensusError> {
        if self.converged {
            Ok(self)
        } else {
            Err(ConsensusError::NotConverged {
                iters: self.iters,
                values: self.values,
            })
        }
    }
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_dims(w: &WeightMatrix, len: usize) -> Result<(), ConsensusError> {
    if w.dim() != len {
        return Err(ConsensusError::DimensionMismatch {
            matrix: w.dim(),
            vector: len,
        });
    }
    Ok(())
}

/// Iterator over successive rounds `W x0, W^2 x0, ...`.
#[derive(Debug, Clone)]
pub struct LinearRounds<'a> {
    w: &'a WeightMatrix,
    current: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> LinearRounds<'a> {
    pub fn new(w: &'a WeightMatrix, x0: Vec<f64>) -> Result<Self, ConsensusError> {
        check_dims(w, x0.len())?;
        let scratch = vec![0.0; x0.len()];
        Ok(Self {
            w,
            current: x0,
            scratch,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    /// Advances one round and returns the max per-node change.
    pub fn advance(&mut self) -> f64 {
        self.w.apply_into(&self.current, &mut self.scratch);
        mem::swap(&mut self.current, &mut self.scratch);
        max_change(&self.current, &self.scratch)
    }
}

impl Iterator for LinearRounds<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        self.advance();
        Some(self.current.clone())
    }
}

/// Runs `x(t+1) = W x(t)` until the max per-node change is within `eps`.
///
/// Hitting `max_iters` is not an error here; the result carries
/// `converged = false` and the last iterate.
pub fn iterate_linear(
    w: &WeightMatrix,
    x0: &[f64],
    criteria: &ConvergenceCriteria,
) -> Result<ConsensusResult, ConsensusError> {
    if !w.is_nonnegative() {
        return Err(ConsensusError::NegativeWeight);
    }
    let mut rounds = LinearRounds::new(w, x0.to_vec())?;
    for iter in 1..=criteria.max_iters {
        if rounds.advance() <= criteria.eps {
            return Ok(ConsensusResult {
                values: rounds.current,
                iters: iter,
                converged: true,
            });
        }
    }
    Ok(ConsensusResult {
        values: rounds.current,
        iters: criteria.max_iters,
        converged: false,
    })
}

/// Geometric tail bound on the remaining movement of an iterate.
///
/// With per-round contraction `r = change / last_change`, the ratios can
/// still move by about `change * r / (1 - r)`. Slowly mixing graphs (long
/// paths) have `r` near one, so a small last step alone does not mean the
/// iterate is within `eps` of its limit. Changes a thousand times below `eps`
/// are accepted outright, since at that level the estimate is roundoff.
fn tail_within(change: f64, last_change: f64, eps: f64) -> bool {
    if change <= 1e-3 * eps || change == 0.0 {
        return true;
    }
    let r = change / last_change;
    r < 1.0 && change * r / (1.0 - r) <= eps
}

/// Ratio consensus over `Q`: iterates numerator and denominator together and
/// returns the per-node ratio `x_i / y_i` at steady state.
///
/// Convergence is judged on the ratio itself. Individually `x` and `y`
/// settle onto the Perron vector scaled by their initial sums, so every
/// node's ratio tends to `sum(x0) / sum(y0)`. A round counts as converged
/// when the max ratio change is within `eps` and the geometric tail implied
/// by the last two changes is within `eps` as well.
pub fn ratio_consensus(
    q: &QMatrix,
    x0: &[f64],
    y0: &[f64],
    criteria: &ConvergenceCriteria,
) -> Result<ConsensusResult, ConsensusError> {
    let w = q.as_matrix();
    check_dims(w, x0.len())?;
    check_dims(w, y0.len())?;
    let total: f64 = y0.iter().sum();
    if y0.iter().any(|&y| y.is_nan() || y < 0.0) || total.is_nan() || total <= 0.0 {
        return Err(ConsensusError::InvalidDenominator);
    }

    let n = x0.len();
    let mut num = LinearRounds::new(w, x0.to_vec())?;
    let mut den = LinearRounds::new(w, y0.to_vec())?;
    let ratio = |x: &[f64], y: &[f64], out: &mut Vec<f64>| -> bool {
        out.clear();
        let mut ok = true;
        for (&a, &b) in x.iter().zip(y) {
            ok &= b >= DENOMINATOR_FLOOR;
            out.push(a / b);
        }
        ok
    };

    let mut prev = Vec::with_capacity(n);
    let mut prev_ok = ratio(num.current(), den.current(), &mut prev);
    let mut cur = Vec::with_capacity(n);
    let mut last_change = f64::INFINITY;
    for iter in 1..=criteria.max_iters {
        num.advance();
        den.advance();
        let ok = ratio(num.current(), den.current(), &mut cur);
        let change = if ok && prev_ok {
            max_change(&cur, &prev)
        } else {
            f64::INFINITY
        };
        if change <= criteria.eps && tail_within(change, last_change, criteria.eps) {
            return Ok(ConsensusResult {
                values: cur,
                iters: iter,
                converged: true,
            });
        }
        mem::swap(&mut cur, &mut prev);
        prev_ok = ok;
        last_change = change;
    }

    if let Some((node, &value)) = den
        .current()
        .iter()
        .enumerate()
        .find(|(_, &y)| y < DENOMINATOR_FLOOR)
    {
        return Err(ConsensusError::DegenerateDenominator { node, value });
    }
    Err(ConsensusError::NotConverged {
        iters: criteria.max_iters,
        values: prev,
    })
}

/// Per-edge flow accumulators `h_ij` together with the node values `g_i`.
///
/// Each undirected edge stores a single value for its `(lo, hi)` orientation;
/// the reverse orientation is its negation, so `h_ij = -h_ji` holds exactly.
/// A round computes every increment `a_ij (g_j - g_i)` from the previous
/// round's `g`, adds it to `h_ij` and to `g_i`, and subtracts it from `g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAccumulator {
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    h: Vec<f64>,
    g: Vec<f64>,
    increments: Vec<f64>,
}

impl FlowAccumulator {
    /// Initial state `h = 0`, `g = g0`.
    pub fn new(
        topo: &GridTopology,
        s: &MetropolisMatrix,
        g0: &[f64],
    ) -> Result<Self, ConsensusError> {
        let n = topo.node_count();
        check_dims(s.as_matrix(), n)?;
        check_dims(s.as_matrix(), g0.len())?;
        let edges = topo.edges().to_vec();
        let mut weights = Vec::with_capacity(edges.len());
        for &(i, j) in &edges {
            let a = s.weight(i, j);
            if a.is_nan() || a <= 0.0 || a != s.weight(j, i) {
                return Err(ConsensusError::TopologyMismatch(i, j));
            }
            weights.push(a);
        }
        let m = edges.len();
        Ok(Self {
            edges,
            weights,
            h: vec![0.0; m],
            g: g0.to_vec(),
            increments: vec![0.0; m],
        })
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// `h_ij` for an ordered neighbor pair; zero when `{i, j}` is not an edge.
    pub fn h(&self, i: usize, j: usize) -> f64 {
        let (lo, hi, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        self.edges
            .iter()
            .position(|&e| e == (lo, hi))
            .map_or(0.0, |k| sign * self.h[k])
    }

    /// `(lo, hi, h_lo_hi)` for every edge.
    pub fn edge_values(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges
            .iter()
            .zip(&self.h)
            .map(|(&(i, j), &h)| (i, j, h))
    }

    /// `sum_{j in N_i} h_ij` for every node.
    pub fn accumulated(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.g.len()];
        for (i, j, h) in self.edge_values() {
            out[i] += h;
            out[j] -= h;
        }
        out
    }

    /// One synchronous round; returns the max per-node change in `g`.
    pub fn step(&mut self) -> f64 {
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            self.increments[k] = self.weights[k] * (self.g[j] - self.g[i]);
        }
        let mut delta = vec![0.0; self.g.len()];
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            let d = self.increments[k];
            self.h[k] += d;
            delta[i] += d;
            delta[j] -= d;
        }
        let mut change: f64 = 0.0;
        for (g, d) in self.g.iter_mut().zip(delta) {
            *g += d;
            change = change.max(d.abs());
        }
        change
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub accumulator: FlowAccumulator,
    pub iters: usize,
}

/// Runs the flow accumulator until `g` stops moving by more than `eps`,
/// with the same geometric tail check as [`ratio_consensus`].
///
/// On return `g_i = g_i(0) + sum_j h_ij` up to roundoff; with a doubly
/// stochastic `S`, `g` settles at the mean of `g0`.
pub fn flow_accumulate(
    topo: &GridTopology,
    s: &MetropolisMatrix,
    g0: &[f64],
    criteria: &ConvergenceCriteria,
) -> Result<FlowResult, ConsensusError> {
    let mut acc = FlowAccumulator::new(topo, s, g0)?;
    let mut last_change = f64::INFINITY;
    for iter in 1..=criteria.max_iters {
        let change = acc.step();
        if change <= criteria.eps && tail_within(change, last_change, criteria.eps) {
            return Ok(FlowResult {
                accumulator: acc,
                iters: iter,
            });
        }
        last_change = change;
    }
    Err(ConsensusError::NotConverged {
        iters: criteria.max_iters,
        values: acc.g,
    })
}
