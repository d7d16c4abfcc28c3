//! JSON scenario files.
//!
//! Node ids and edge endpoints are 1-based in files and 0-based in the core
//! library. Every field is checked; errors name the offending field.

use std::fs;
use std::path::{Path, PathBuf};

use gridconsensus_core::consensus::ConvergenceCriteria;
use gridconsensus_core::coordination::{CapacityError, NodeCapacities, NodeCapacity};
use gridconsensus_core::graph::GridTopology;
use gridconsensus_core::sim::{
    self, AuditMode, CapacityPlan, DemandSource, DesiredSource, Mode, ScenarioConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WITH: &str = include_str!("../configs/default_with.json");
pub const DEFAULT_WITHOUT: &str = include_str!("../configs/default_without.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: usize,
    pub gen: [f64; 2],
    pub net: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    WithCoordination,
    WithoutCoordination,
}

impl ModeSpec {
    pub fn name(self) -> &'static str {
        match self {
            ModeSpec::WithCoordination => "with-coordination",
            ModeSpec::WithoutCoordination => "without-coordination",
        }
    }
}

impl From<ModeSpec> for Mode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::WithCoordination => Mode::WithCoordination,
            ModeSpec::WithoutCoordination => Mode::WithoutCoordination,
        }
    }
}

impl From<Mode> for ModeSpec {
    fn from(m: Mode) -> Self {
        match m {
            Mode::WithCoordination => ModeSpec::WithCoordination,
            Mode::WithoutCoordination => ModeSpec::WithoutCoordination,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditSpec {
    #[default]
    FailFast,
    ContinueAndFlag,
}

/// Seeded random profile or an explicit list with one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileSpec<T> {
    Random,
    Explicit { values: Vec<T> },
}

fn default_eps() -> f64 {
    ConvergenceCriteria::default().eps()
}

fn default_max_iters() -> usize {
    ConvergenceCriteria::default().max_iters()
}

fn default_leader() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<[usize; 2]>,
    pub mode: ModeSpec,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<ProfileSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired: Option<ProfileSpec<Vec<f64>>>,
    pub seed: u64,
    #[serde(default = "default_leader")]
    pub leader: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_generation: Option<Vec<f64>>,
    /// Per-step capacities, one full node list per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_schedule: Option<Vec<Vec<NodeSpec>>>,
    #[serde(default)]
    pub audit: AuditSpec,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures to read or parse the document, false for bad values.
    pub fn is_parse_or_io(&self) -> bool {
        !matches!(self, ConfigError::Invalid { .. })
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "document".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config values are always serializable")
    }

    /// Builds and validates the core scenario.
    pub fn to_scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let n = self.nodes.len();
        let base = capacities("nodes", &self.nodes)?;
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| {
                if a == 0 || b == 0 || a > n || b > n {
                    Err(ConfigError::invalid(
                        format!("edges[{e}]"),
                        format!("node ids must lie in 1..={n}, got [{a}, {b}]"),
                    ))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let topology = GridTopology::new(n, &edges)
            .map_err(|e| ConfigError::invalid("edges", one_based_topology_message(&e)))?;

        let schedule = match &self.capacity_schedule {
            None => None,
            Some(steps) => Some(
                steps
                    .iter()
                    .enumerate()
                    .map(|(k, nodes)| capacities(&format!("capacity_schedule[{k}]"), nodes))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };

        if self.leader == 0 || self.leader > n {
            return Err(ConfigError::invalid(
                "leader",
                format!("must be a node id in 1..={n}, got {}", self.leader),
            ));
        }
        let criteria = ConvergenceCriteria::new(self.eps, self.max_iters).map_err(|e| {
            let field = if self.max_iters == 0 {
                "max_iters"
            } else {
                "eps"
            };
            ConfigError::invalid(field, e.to_string())
        })?;

        let demand = self.demand.as_ref().map(|d| match d {
            ProfileSpec::Random => DemandSource::UniformRandom,
            ProfileSpec::Explicit { values } => DemandSource::Explicit(values.clone()),
        });
        let desired = self.desired.as_ref().map(|d| match d {
            ProfileSpec::Random => DesiredSource::UniformRandom,
            ProfileSpec::Explicit { values } => DesiredSource::Explicit(values.clone()),
        });

        let scenario = ScenarioConfig {
            mode: self.mode.into(),
            horizon: self.horizon,
            topology,
            capacities: CapacityPlan { base, schedule },
            demand,
            desired,
            seed: self.seed,
            leader: self.leader - 1,
            criteria,
            initial_generation: self.initial_generation.clone(),
            audit_mode: match self.audit {
                AuditSpec::FailFast => AuditMode::FailFast,
                AuditSpec::ContinueAndFlag => AuditMode::ContinueAndFlag,
            },
        };
        scenario.validate().map_err(|e| self.scenario_error(e))?;
        Ok(scenario)
    }

    fn scenario_error(&self, e: sim::ConfigError) -> ConfigError {
        use sim::ConfigError as E;
        let n = self.nodes.len();
        let profile = match self.mode {
            ModeSpec::WithCoordination => "demand",
            ModeSpec::WithoutCoordination => "desired",
        };
        let field = match &e {
            E::ZeroHorizon => "horizon".to_string(),
            E::ScheduleLength { .. } => "capacity_schedule".to_string(),
            E::ProfileLength { .. } => format!("{profile}.values"),
            E::NodeCount { .. } => {
                if self
                    .initial_generation
                    .as_ref()
                    .is_some_and(|v| v.len() != n)
                {
                    "initial_generation".to_string()
                } else if self
                    .capacity_schedule
                    .as_ref()
                    .is_some_and(|s| s.iter().any(|r| r.len() != n))
                {
                    "capacity_schedule".to_string()
                } else {
                    "desired.values".to_string()
                }
            }
            E::Leader(_) => "leader".to_string(),
            E::InitialGeneration { node, .. } => format!("initial_generation[{node}]"),
            E::Source(_) => profile.to_string(),
        };
        let message = match e {
            E::InitialGeneration { node, value } => {
                format!(
                    "node {} starts at {value}, outside its generation bounds",
                    node + 1
                )
            }
            E::Source(_) => format!(
                "{} runs need a {profile} source and nothing else",
                self.mode.name()
            ),
            e => e.to_string(),
        };
        ConfigError::invalid(field, message)
    }

    /// Serializable view of a scenario. Inverse of [`ConfigFile::to_scenario`].
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        let specs = |caps: &NodeCapacities| {
            caps.nodes()
                .iter()
                .enumerate()
                .map(|(i, c)| NodeSpec {
                    id: i + 1,
                    gen: [c.gen.lo, c.gen.hi],
                    net: [c.net.lo, c.net.hi],
                })
                .collect::<Vec<_>>()
        };
        ConfigFile {
            nodes: specs(&s.capacities.base),
            edges: s
                .topology
                .edges()
                .iter()
                .map(|&(a, b)| [a + 1, b + 1])
                .collect(),
            mode: s.mode.into(),
            horizon: s.horizon,
            demand: s.demand.as_ref().map(|d| match d {
                DemandSource::UniformRandom => ProfileSpec::Random,
                DemandSource::Explicit(v) => ProfileSpec::Explicit { values: v.clone() },
            }),
            desired: s.desired.as_ref().map(|d| match d {
                DesiredSource::UniformRandom => ProfileSpec::Random,
                DesiredSource::Explicit(v) => ProfileSpec::Explicit { values: v.clone() },
            }),
            seed: s.seed,
            leader: s.leader + 1,
            eps: s.criteria.eps(),
            max_iters: s.criteria.max_iters(),
            initial_generation: s.initial_generation.clone(),
            capacity_schedule: s
                .capacities
                .schedule
                .as_ref()
                .map(|steps| steps.iter().map(specs).collect()),
            audit: match s.audit_mode {
                AuditMode::FailFast => AuditSpec::FailFast,
                AuditMode::ContinueAndFlag => AuditSpec::ContinueAndFlag,
            },
        }
    }

    /// Switches the mode, supplying a seeded random source when the new mode lacks one.
    pub fn set_mode(&mut self, mode: ModeSpec) {
        if mode == self.mode {
            return;
        }
        self.mode = mode;
        match mode {
            ModeSpec::WithCoordination => {
                self.desired = None;
                self.demand.get_or_insert(ProfileSpec::Random);
            }
            ModeSpec::WithoutCoordination => {
                self.demand = None;
                self.desired.get_or_insert(ProfileSpec::Random);
            }
        }
    }

    /// Built-in six-node scenario for the given mode.
    pub fn builtin(mode: ModeSpec) -> Self {
        let text = match mode {
            ModeSpec::WithCoordination => DEFAULT_WITH,
            ModeSpec::WithoutCoordination => DEFAULT_WITHOUT,
        };
        Self::from_json(text).expect("shipped configs parse")
    }
}

fn capacities(field: &str, nodes: &[NodeSpec]) -> Result<NodeCapacities, ConfigError> {
    for (i, node) in nodes.iter().enumerate() {
        if node.id != i + 1 {
            return Err(ConfigError::invalid(
                format!("{field}[{i}].id"),
                format!(
                    "expected id {} (ids run 1..=n in order), got {}",
                    i + 1,
                    node.id
                ),
            ));
        }
    }
    let list = nodes
        .iter()
        .map(|s| NodeCapacity::new((s.gen[0], s.gen[1]), (s.net[0], s.net[1])))
        .collect();
    NodeCapacities::new(list).map_err(|e| match e {
        CapacityError::Empty => ConfigError::invalid(field, "at least one node is required"),
        CapacityError::InvalidBounds { node, field: which, lo, hi } => ConfigError::invalid(
            format!("{field}[{node}].{which}"),
            format!("node {} {which} range [{lo}, {hi}] has lower bound above upper bound or is not finite", node + 1),
        ),
    })
}

fn one_based_topology_message(e: &gridconsensus_core::graph::TopologyError) -> String {
    use gridconsensus_core::graph::TopologyError as T;
    match *e {
        T::Empty => "graph has no nodes".into(),
        T::OutOfRange { a, b, n } => format!("edge [{}, {}] leaves 1..={n}", a + 1, b + 1),
        T::SelfLoop(i) => format!("self-loop on node {}", i + 1),
        T::DuplicateEdge(a, b) => format!("duplicate edge [{}, {}]", a + 1, b + 1),
        T::Disconnected { unreachable } => {
            format!(
                "graph is disconnected: node {} cannot be reached from node 1",
                unreachable + 1
            )
        }
    }
}
