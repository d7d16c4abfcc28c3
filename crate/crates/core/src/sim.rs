//! Multi-step scenario runner.
//!
//! Each physical step runs its consensus phases to convergence before the
//! grid state advances, so the communication layer is always settled within
//! one step. Two pipelines are supported:
//!
//! - [`Mode::WithCoordination`]: coordination, then generation to target, no flows.
//! - [`Mode::WithoutCoordination`]: headroom-proportional generation, then flows.
//!
//! Runs are deterministic: the only randomness comes from a ChaCha stream
//! seeded by [`ScenarioConfig::seed`].

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consensus::ConvergenceCriteria;
use crate::coordination::{
    check_realizability, coordinate_distributed, CoordinationError, NodeCapacities, Realizability,
};
use crate::dispatch::{
    apply_step, compute_delta_bounds, flow_control, generation_distributed,
    generation_with_coordination, DispatchError, FlowMatrix, GridState, BOUND_SLACK,
};
use crate::graph::{GridTopology, MetropolisMatrix};

/// Largest accepted `|sum(p_G) - p_D|` after a step.
pub const BALANCE_TOL: f64 = 1e-6;
/// Largest accepted per-node coordination error after a step.
pub const ERROR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    WithCoordination,
    WithoutCoordination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuditMode {
    #[default]
    FailFast,
    ContinueAndFlag,
}

/// Where per-step total demand comes from (coordinated mode).
#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    Explicit(Vec<f64>),
    /// Uniform over `[sum(gen_lo), sum(gen_hi)]` of each step's capacities.
    UniformRandom,
}

/// Where per-step, per-node desired net power comes from (uncoordinated mode).
#[derive(Debug, Clone, PartialEq)]
pub enum DesiredSource {
    Explicit(Vec<Vec<f64>>),
    /// Uniform within net-power bounds, then pulled toward a feasible center
    /// until the total is realizable.
    UniformRandom,
}

/// Capacities for each step: a base set plus an optional per-step schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPlan {
    pub base: NodeCapacities,
    /// Entry `k - 1` applies to step `k`.
    pub schedule: Option<Vec<NodeCapacities>>,
}

impl CapacityPlan {
    pub fn constant(base: NodeCapacities) -> Self {
        Self {
            base,
            schedule: None,
        }
    }

    /// Capacities in force at step `k` (1-based); step 0 uses the base.
    pub fn at(&self, k: usize) -> &NodeCapacities {
        match (&self.schedule, k) {
            (Some(s), k) if k >= 1 => &s[k - 1],
            _ => &self.base,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub horizon: usize,
    pub topology: GridTopology,
    pub capacities: CapacityPlan,
    pub demand: Option<DemandSource>,
    pub desired: Option<DesiredSource>,
    pub seed: u64,
    pub leader: usize,
    pub criteria: ConvergenceCriteria,
    /// Defaults to each node's lower generation bound.
    pub initial_generation: Option<Vec<f64>>,
    pub audit_mode: AuditMode,
}

impl ScenarioConfig {
    /// Coordinated scenario on `topology` with seeded uniform demand.
    pub fn with_coordination(
        topology: GridTopology,
        capacities: NodeCapacities,
        horizon: usize,
        seed: u64,
    ) -> Self {
        Self {
            mode: Mode::WithCoordination,
            horizon,
            topology,
            capacities: CapacityPlan::constant(capacities),
            demand: Some(DemandSource::UniformRandom),
            desired: None,
            seed,
            leader: 0,
            criteria: ConvergenceCriteria::default(),
            initial_generation: None,
            audit_mode: AuditMode::FailFast,
        }
    }

    /// Uncoordinated scenario on `topology` with seeded desired profiles.
    pub fn without_coordination(
        topology: GridTopology,
        capacities: NodeCapacities,
        horizon: usize,
        seed: u64,
    ) -> Self {
        Self {
            mode: Mode::WithoutCoordination,
            demand: None,
            desired: Some(DesiredSource::UniformRandom),
            ..Self::with_coordination(topology, capacities, horizon, seed)
        }
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn initial_generation(&self) -> Vec<f64> {
        self.initial_generation.clone().unwrap_or_else(|| {
            self.capacities
                .base
                .nodes()
                .iter()
                .map(|c| c.gen.lo)
                .collect()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.node_count();
        if self.horizon == 0 {
            return Err(ConfigError::ZeroHorizon);
        }
        if self.capacities.base.len() != n {
            return Err(ConfigError::NodeCount {
                expected: n,
                got: self.capacities.base.len(),
            });
        }
        if let Some(schedule) = &self.capacities.schedule {
            if schedule.len() != self.horizon {
                return Err(ConfigError::ScheduleLength {
                    expected: self.horizon,
                    got: schedule.len(),
                });
            }
            if let Some(bad) = schedule.iter().find(|c| c.len() != n) {
                return Err(ConfigError::NodeCount {
                    expected: n,
                    got: bad.len(),
                });
            }
        }
        if self.leader >= n {
            return Err(ConfigError::Leader(self.leader));
        }
        let p0 = self.initial_generation();
        if p0.len() != n {
            return Err(ConfigError::NodeCount {
                expected: n,
                got: p0.len(),
            });
        }
        if let Some(&node) = self.capacities.base.gen_violations(&p0, 0.0).first() {
            return Err(ConfigError::InitialGeneration {
                node,
                value: p0[node],
            });
        }
        match (self.mode, &self.demand, &self.desired) {
            (Mode::WithCoordination, Some(d), None) => {
                if let DemandSource::Explicit(v) = d {
                    if v.len() != self.horizon {
                        return Err(ConfigError::ProfileLength {
                            expected: self.horizon,
                            got: v.len(),
                        });
                    }
                }
            }
            (Mode::WithoutCoordination, None, Some(d)) => {
                if let DesiredSource::Explicit(v) = d {
                    if v.len() != self.horizon {
                        return Err(ConfigError::ProfileLength {
                            expected: self.horizon,
                            got: v.len(),
                        });
                    }
                    if let Some(row) = v.iter().find(|r| r.len() != n) {
                        return Err(ConfigError::NodeCount {
                            expected: n,
                            got: row.len(),
                        });
                    }
                }
            }
            (mode, _, _) => return Err(ConfigError::Source(mode)),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("expected {expected} nodes, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("capacity schedule has {got} entries, horizon is {expected}")]
    ScheduleLength { expected: usize, got: usize },
    #[error("profile has {got} steps, horizon is {expected}")]
    ProfileLength { expected: usize, got: usize },
    #[error("leading node {0} is out of range")]
    Leader(usize),
    #[error("initial generation {value} at node {node} is outside its generation bounds")]
    InitialGeneration { node: usize, value: f64 },
    #[error(
        "{0:?} needs exactly one source: demand for coordinated runs, desired power otherwise"
    )]
    Source(Mode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Coordination,
    Generation,
    Flow,
    Apply,
}

impl core::fmt::Display for Phase {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Phase::Coordination => "coordination",
            Phase::Generation => "generation",
            Phase::Flow => "flow",
            Phase::Apply => "apply",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseError {
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    #[error("step {step}: demand not realizable ({realizability})")]
    NotRealizable {
        step: usize,
        realizability: Realizability,
    },
    #[error("step {step}: desired profile is incompatible with capacities: {reason}")]
    DesiredProfile { step: usize, reason: ProfileIssue },
    #[error("step {step}, {phase} phase: {source}")]
    Phase {
        step: usize,
        phase: Phase,
        #[source]
        source: PhaseError,
    },
    #[error("step {step}: audit failed ({audit})")]
    Audit { step: usize, audit: StepAudit },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileIssue {
    /// Generation and net-power ranges of this node do not overlap.
    NoFeasibleCenter(usize),
    NetBound {
        node: usize,
        value: f64,
    },
    Total(Realizability),
}

impl core::fmt::Display for ProfileIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProfileIssue::NoFeasibleCenter(i) => {
                write!(f, "node {i} has disjoint generation and net-power ranges")
            }
            ProfileIssue::NetBound { node, value } => {
                write!(
                    f,
                    "node {node} desired {value} outside its net-power bounds"
                )
            }
            ProfileIssue::Total(r) => write!(f, "total not realizable: {r}"),
        }
    }
}

fn phase<E: Into<PhaseError>>(step: usize, phase: Phase) -> impl FnOnce(E) -> SimError {
    move |e| SimError::Phase {
        step,
        phase,
        source: e.into(),
    }
}

/// Per-step demand. Random demand is uniform over each step's realizable interval.
pub fn generate_demand_profile(
    source: &DemandSource,
    plan: &CapacityPlan,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    match source {
        DemandSource::Explicit(values) => {
            for (i, &d) in values.iter().enumerate() {
                let r = check_realizability(d, plan.at(i + 1));
                if !r.is_realizable() {
                    return Err(SimError::NotRealizable {
                        step: i + 1,
                        realizability: r,
                    });
                }
            }
            Ok(values.clone())
        }
        DemandSource::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (1..=horizon)
                .map(|k| {
                    let caps = plan.at(k);
                    let (lo, hi) = (caps.gen_lo_sum(), caps.gen_hi_sum());
                    Ok(rng.random_range(lo..=hi))
                })
                .collect()
        }
    }
}

fn total_tolerance(total: f64) -> f64 {
    1e-9 * (1.0 + total.abs())
}

fn check_desired_step(step: usize, values: &[f64], caps: &NodeCapacities) -> Result<(), SimError> {
    if let Some(&node) = caps.net_violations(values, 0.0).first() {
        return Err(SimError::DesiredProfile {
            step,
            reason: ProfileIssue::NetBound {
                node,
                value: values[node],
            },
        });
    }
    let total: f64 = values.iter().sum();
    let r = check_realizability(total, caps);
    let tol = total_tolerance(total);
    if r.lower_margin() < -tol || r.upper_margin() < -tol {
        return Err(SimError::DesiredProfile {
            step,
            reason: ProfileIssue::Total(r),
        });
    }
    Ok(())
}

/// Samples one step of desired net power.
///
/// Each node draws uniformly from its net-power range. If the total misses
/// `[sum(gen_lo), sum(gen_hi)]`, the whole vector is moved along the segment
/// toward the center point (the midpoint of each node's generation and
/// net-power overlap) just far enough for the total to land on the nearer
/// bound. Both endpoints lie in the net-power box, so the result does too.
fn sample_desired_step<R: Rng>(
    rng: &mut R,
    caps: &NodeCapacities,
) -> Result<Vec<f64>, ProfileIssue> {
    let mut center = Vec::with_capacity(caps.len());
    for (i, c) in caps.nodes().iter().enumerate() {
        let overlap = c
            .gen
            .intersect(&c.net)
            .ok_or(ProfileIssue::NoFeasibleCenter(i))?;
        center.push(0.5 * (overlap.lo + overlap.hi));
    }
    let raw: Vec<f64> = caps
        .nodes()
        .iter()
        .map(|c| rng.random_range(c.net.lo..=c.net.hi))
        .collect();

    let (lo, hi) = (caps.gen_lo_sum(), caps.gen_hi_sum());
    let total: f64 = raw.iter().sum();
    let center_total: f64 = center.iter().sum();
    let target = if total > hi {
        hi
    } else if total < lo {
        lo
    } else {
        return Ok(raw);
    };
    let lambda = (target - center_total) / (total - center_total);
    Ok(center
        .iter()
        .zip(&raw)
        .map(|(c, x)| c + lambda * (x - c))
        .collect())
}

/// Per-step, per-node desired net power. Generation bounds are not enforced.
pub fn generate_desired_profile(
    source: &DesiredSource,
    plan: &CapacityPlan,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    match source {
        DesiredSource::Explicit(rows) => {
            for (i, row) in rows.iter().enumerate() {
                check_desired_step(i + 1, row, plan.at(i + 1))?;
            }
            Ok(rows.clone())
        }
        DesiredSource::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (1..=horizon)
                .map(|k| {
                    sample_desired_step(&mut rng, plan.at(k))
                        .map_err(|reason| SimError::DesiredProfile { step: k, reason })
                })
                .collect()
        }
    }
}

/// Checks recorded for one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepAudit {
    /// Nodes whose generation left its bounds.
    pub gen_violations: Vec<usize>,
    /// Nodes whose generation change left its delta bounds.
    pub delta_violations: Vec<usize>,
    /// Nodes whose net power left its net-power bounds. Reported, never fatal:
    /// it can only happen when a node's generation range pokes outside its
    /// net-power range.
    pub net_violations: Vec<usize>,
    /// Nonzero flows in the coordinated pipeline.
    pub unexpected_flows: bool,
    /// `sum(p_G) - p_D`.
    pub balance_residual: f64,
    pub max_error: f64,
}

impl StepAudit {
    pub fn passed(&self) -> bool {
        self.gen_violations.is_empty()
            && self.delta_violations.is_empty()
            && !self.unexpected_flows
            && self.balance_residual.abs() <= BALANCE_TOL
            && self.max_error <= ERROR_TOL
    }
}

impl core::fmt::Display for StepAudit {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "gen violations {:?}, delta violations {:?}, net warnings {:?}, unexpected flows {}, balance residual {:e}, max error {:e}",
            self.gen_violations,
            self.delta_violations,
            self.net_violations,
            self.unexpected_flows,
            self.balance_residual,
            self.max_error
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub demand: f64,
    pub desired: Vec<f64>,
    pub delta: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub flow_net: Vec<f64>,
    pub p_net: Vec<f64>,
    pub error: Vec<f64>,
    pub flows: FlowMatrix,
    pub coord_iters: usize,
    pub gen_iters: usize,
    pub flow_iters: usize,
    pub audit: StepAudit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub mode: Mode,
    pub node_count: usize,
    pub steps: Vec<StepRecord>,
}

impl SimulationRecord {
    pub fn max_abs_error(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.audit.max_error))
    }

    pub fn max_balance_residual(&self) -> f64 {
        self.steps
            .iter()
            .fold(0.0, |m, s| m.max(s.audit.balance_residual.abs()))
    }

    pub fn max_consensus_iters(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.coord_iters.max(s.gen_iters).max(s.flow_iters))
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_flow(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.flows.max_abs()))
    }

    pub fn audits_passed(&self) -> bool {
        self.steps.iter().all(|s| s.audit.passed())
    }

    pub fn failed_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| !s.audit.passed())
            .map(|s| s.k)
            .collect()
    }

    pub fn net_warnings(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.audit.net_violations.len())
            .sum()
    }
}

/// Per-step inputs after sources are resolved.
enum Inputs {
    Demand(Vec<f64>),
    Desired(Vec<Vec<f64>>),
}

/// Runs a full scenario.
pub fn run(config: &ScenarioConfig) -> Result<SimulationRecord, SimError> {
    config.validate()?;
    let topo = &config.topology;
    let n = topo.node_count();
    let plan = &config.capacities;
    let criteria = &config.criteria;
    let metropolis = MetropolisMatrix::new(topo);

    let inputs = match (&config.demand, &config.desired) {
        (Some(d), _) if config.mode == Mode::WithCoordination => Inputs::Demand(
            generate_demand_profile(d, plan, config.horizon, config.seed)?,
        ),
        (_, Some(d)) => Inputs::Desired(generate_desired_profile(
            d,
            plan,
            config.horizon,
            config.seed,
        )?),
        _ => unreachable!("validated above"),
    };

    let mut state = GridState::initial(config.initial_generation());
    let mut steps = Vec::with_capacity(config.horizon);
    for k in 1..=config.horizon {
        let caps = plan.at(k);
        let db = compute_delta_bounds(&state, caps);
        let (demand, desired, delta, flows, coord_iters, gen_iters, flow_iters) = match &inputs {
            Inputs::Demand(profile) => {
                let demand = profile[k - 1];
                let coord = coordinate_distributed(demand, caps, topo, config.leader, criteria)
                    .map_err(|e| match e {
                        CoordinationError::NotRealizable(r) => SimError::NotRealizable {
                            step: k,
                            realizability: r,
                        },
                        e => phase(k, Phase::Coordination)(e),
                    })?;
                let delta = generation_with_coordination(&state, &coord.desired, caps)
                    .map_err(phase(k, Phase::Generation))?;
                (
                    demand,
                    coord.desired,
                    delta,
                    FlowMatrix::zeros(n),
                    coord.iters,
                    0,
                    0,
                )
            }
            Inputs::Desired(profile) => {
                let desired = profile[k - 1].clone();
                let demand: f64 = desired.iter().sum();
                let gen = generation_distributed(&desired, &state, &db, topo, criteria)
                    .map_err(phase(k, Phase::Generation))?;
                let pre = apply_step(&state, &desired, &gen.delta, &FlowMatrix::zeros(n), caps)
                    .map_err(phase(k, Phase::Apply))?;
                let flow = flow_control(&pre.state, topo, &metropolis, criteria)
                    .map_err(phase(k, Phase::Flow))?;
                (
                    demand, desired, gen.delta, flow.flows, 0, gen.iters, flow.iters,
                )
            }
        };

        let out =
            apply_step(&state, &desired, &delta, &flows, caps).map_err(phase(k, Phase::Apply))?;
        let next = out.state;
        let audit = StepAudit {
            gen_violations: out.audit.gen_violations,
            delta_violations: db.violations(&delta, BOUND_SLACK),
            net_violations: out.audit.net_violations,
            unexpected_flows: config.mode == Mode::WithCoordination && !flows.is_zero(),
            balance_residual: next.total_generation() - demand,
            max_error: next.max_abs_error(),
        };
        if !audit.passed() && config.audit_mode == AuditMode::FailFast {
            return Err(SimError::Audit { step: k, audit });
        }
        steps.push(StepRecord {
            k,
            demand,
            desired,
            delta,
            p_gen: next.p_gen.clone(),
            flow_net: next.p_flow_net.clone(),
            p_net: next.p_net.clone(),
            error: next.p_error.clone(),
            flows,
            coord_iters,
            gen_iters,
            flow_iters,
            audit,
        });
        state = next;
    }

    Ok(SimulationRecord {
        mode: config.mode,
        node_count: n,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn six_node_topo() -> GridTopology {
        GridTopology::ring_with_chord(6).unwrap()
    }

    #[test]
    fn single_step_at_lower_bound() {
        let caps = NodeCapacities::reference_six_node();
        let mut cfg = ScenarioConfig::with_coordination(six_node_topo(), caps, 1, 0);
        cfg.demand = Some(DemandSource::Explicit(vec![85.0]));
        // Node 5's floor is below its net-power floor; that is a warning only.
        let rec = run(&cfg).unwrap();
        let s = &rec.steps[0];
        assert!(s.delta.iter().all(|d| d.abs() < 1e-7));
        assert!(s.error.iter().all(|e| e.abs() < 1e-9));
        assert!(s.audit.passed());
        assert_eq!(s.audit.net_violations, vec![5]);
    }

    #[test]
    fn demand_profile_is_seeded_and_in_range() {
        let plan = CapacityPlan::constant(NodeCapacities::reference_six_node());
        let a = generate_demand_profile(&DemandSource::UniformRandom, &plan, 200, 7).unwrap();
        let b = generate_demand_profile(&DemandSource::UniformRandom, &plan, 200, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| (85.0..=330.0).contains(&d)));
        let c = generate_demand_profile(&DemandSource::UniformRandom, &plan, 200, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn explicit_demand_passes_through() {
        let plan = CapacityPlan::constant(NodeCapacities::reference_six_node());
        let v = vec![100.0, 200.0, 300.0];
        assert_eq!(
            generate_demand_profile(&DemandSource::Explicit(v.clone()), &plan, 3, 0).unwrap(),
            v
        );
        assert!(matches!(
            generate_demand_profile(&DemandSource::Explicit(vec![100.0, 400.0]), &plan, 2, 0),
            Err(SimError::NotRealizable { step: 2, .. })
        ));
    }

    #[test]
    fn desired_profile_bounds() {
        let caps = NodeCapacities::reference_six_node();
        let plan = CapacityPlan::constant(caps.clone());
        let a = generate_desired_profile(&DesiredSource::UniformRandom, &plan, 500, 3).unwrap();
        assert_eq!(
            a,
            generate_desired_profile(&DesiredSource::UniformRandom, &plan, 500, 3).unwrap()
        );
        for row in &a {
            assert!((10.0..=80.0).contains(&row[0]));
            assert!(caps.net_violations(row, 1e-9).is_empty());
            let total: f64 = row.iter().sum();
            assert!((85.0 - 1e-9..=330.0 + 1e-9).contains(&total), "{total}");
        }
    }

    #[test]
    fn explicit_desired_validation() {
        let plan = CapacityPlan::constant(NodeCapacities::reference_six_node());
        let bad_net = vec![vec![90.0, 20.0, 20.0, 10.0, 15.0, 15.0]];
        assert!(matches!(
            generate_desired_profile(&DesiredSource::Explicit(bad_net), &plan, 1, 0),
            Err(SimError::DesiredProfile {
                reason: ProfileIssue::NetBound { node: 0, .. },
                ..
            })
        ));
        let sum_too_high = vec![vec![80.0, 120.0, 60.0, 75.0, 90.0, 80.0]];
        assert!(matches!(
            generate_desired_profile(&DesiredSource::Explicit(sum_too_high), &plan, 1, 0),
            Err(SimError::DesiredProfile {
                reason: ProfileIssue::Total(_),
                ..
            })
        ));
    }

    #[test]
    fn config_validation() {
        let caps = NodeCapacities::reference_six_node();
        let mut cfg = ScenarioConfig::with_coordination(six_node_topo(), caps.clone(), 0, 0);
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroHorizon));
        cfg.horizon = 2;
        cfg.desired = Some(DesiredSource::UniformRandom);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::Source(Mode::WithCoordination))
        );
        cfg.desired = None;
        cfg.initial_generation = Some(vec![0.0; 6]);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::InitialGeneration {
                node: 0,
                value: 0.0
            })
        );
        cfg.initial_generation = None;
        cfg.leader = 9;
        assert_eq!(cfg.validate(), Err(ConfigError::Leader(9)));
        cfg.leader = 0;
        cfg.capacities.schedule = Some(vec![caps]);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::ScheduleLength {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn non_convergence_surfaces_with_phase() {
        let caps = NodeCapacities::reference_six_node();
        let mut cfg = ScenarioConfig::with_coordination(six_node_topo(), caps, 3, 1);
        cfg.criteria = ConvergenceCriteria::new(1e-14, 2).unwrap();
        assert!(matches!(
            run(&cfg),
            Err(SimError::Phase {
                step: 1,
                phase: Phase::Coordination,
                ..
            })
        ));
    }

    #[test]
    fn fail_fast_vs_continue_and_flag() {
        // A loose tolerance stops coordination early, so targets miss the demand.
        let caps = NodeCapacities::reference_six_node();
        let mut cfg = ScenarioConfig::with_coordination(six_node_topo(), caps, 4, 5);
        cfg.criteria = ConvergenceCriteria::new(1e-3, 1000).unwrap();
        assert!(matches!(run(&cfg), Err(SimError::Audit { step: 1, .. })));
        cfg.audit_mode = AuditMode::ContinueAndFlag;
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.steps.len(), 4);
        assert!(!rec.audits_passed());
        assert_eq!(rec.failed_steps().len(), 4);
        assert!(rec.max_balance_residual() > BALANCE_TOL);
    }
}
