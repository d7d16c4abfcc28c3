//! Consensus-based supply-demand balancing for distributed power grids.
//!
//! Every node in the grid only talks to its neighbors. From that local
//! exchange the crate computes:
//!
//! - each node's desired net power from a total demand known to a single
//!   leading node ([`coordination`]),
//! - capacity-bounded generation adjustments that close the supply-demand
//!   gap ([`dispatch`]),
//! - pairwise power flows that move surplus generation to nodes whose
//!   desired net power exceeds what they can generate ([`dispatch`]).
//!
//! Each distributed routine has a closed-form counterpart that uses global
//! information. The closed forms serve as oracles for the consensus results.
//!
//! Multi-step scenarios are driven by [`sim`]. The crate is `no_std` and
//! needs only `alloc`.
//!
//! ```
//! use gridconsensus_core::{
//!     consensus::ConvergenceCriteria,
//!     coordination::{coordinate_closed_form, coordinate_distributed, NodeCapacities},
//!     graph::GridTopology,
//! };
//!
//! let caps = NodeCapacities::reference_six_node();
//! let topo = GridTopology::ring_with_chord(6).unwrap();
//! let exact = coordinate_closed_form(150.0, &caps).unwrap();
//! let dist = coordinate_distributed(150.0, &caps, &topo, 0, &ConvergenceCriteria::default()).unwrap();
//! for (a, b) in exact.desired.iter().zip(&dist.desired) {
//!     assert!((a - b).abs() <= 1e-8 * a.abs());
//! }
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(missing_debug_implementations)]

extern crate alloc;

pub mod consensus;
pub mod coordination;
pub mod dispatch;
pub mod graph;
pub mod random;
pub mod sim;

pub use consensus::{ConsensusError, ConsensusResult, ConvergenceCriteria, FlowAccumulator};
pub use coordination::{
    CapacityError, CoordinationError, CoordinationMethod, CoordinationResult, Interval,
    NodeCapacities, NodeCapacity, Realizability,
};
pub use dispatch::{DeltaBounds, DispatchError, FlowMatrix, GridState};
pub use graph::{GridTopology, MetropolisMatrix, QMatrix, TopologyError, WeightMatrix};
pub use sim::{Mode, ScenarioConfig, SimError, SimulationRecord, StepRecord};
