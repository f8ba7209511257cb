//! Robust dynamic average consensus over undirected networks.
//!
//! Every agent `i` holds a private time-varying signal `phi_i(t)` and
//! estimates the network-wide average using only neighbor exchanges. Two
//! estimators are provided: one that communicates continuously
//! ([`estimator`]) and one that broadcasts only when a dynamic trigger
//! fires ([`event_triggered`]). Both use per-link adaptive gains, so no
//! bound on the signals is needed to run them.
//!
//! [`harness`] drives scenarios (with links added or removed mid-run) and
//! [`export`] writes the results as CSV/JSON.

pub mod error;
pub mod estimator;
pub mod event_triggered;
pub mod export;
pub mod graph;
pub mod harness;
pub mod scenario;
pub mod signals;
pub mod stacked;

pub use error::{Error, Result};
pub use estimator::{EstimatorParams, EstimatorState, GainTable, Signum};
pub use event_triggered::{AgentTriggerParams, ETParams, ETState, TriggerStats};
pub use graph::{DenseMatrix, EdgeAction, Topology, TopologyEvent, UndirectedEdge};
pub use harness::{Mode, Outcome, PairedResult, RunResult, Simulator, Variant};
pub use scenario::{Overrides, Prepared, Scenario};
pub use signals::{Channel, ReferenceSignal, SignalBounds, Wave};
pub use stacked::AgentVectors;
