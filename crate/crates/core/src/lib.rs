//! Discrete-event simulator for secure on-demand route discovery with
//! end-to-end authenticated route replies, optional QoS metric lists,
//! scripted adversaries, and verifiers for the properties accepted routes
//! must satisfy.

pub mod error;
pub mod identity;
pub mod qos;
pub mod simcore;
pub mod srp;
pub mod trace;
pub mod adversary;
pub mod verifier;
pub mod scenario;
pub mod engine;
pub mod harness;
pub mod corpus;

pub use error::{AttackError, ScenarioError, SimError};
pub use identity::{KeyRing, NodeId, QueryId};
pub use qos::{GKind, LinkMetricModel, Metric};
pub use simcore::{SimConfig, Time, Topology};
