//! Deterministic simulator for the dispersion problem: `k` mobile agents on
//! an anonymous port-numbered graph must end up on `k` distinct nodes.
//!
//! - [`graph`]: port-numbered graphs, generators and the text file format.
//! - [`engine`]: agent configurations, the synchronous step and run loop.
//! - [`algorithms`]: the local rules.
//! - [`monitor`]: per-step invariant checks.
//! - [`experiment`]: single runs and parameter sweeps.

pub mod algorithms;
pub mod engine;
pub mod experiment;
pub mod graph;
pub mod monitor;
pub mod state;
pub mod trace;

pub use algorithms::Algorithm;
pub use engine::{Configuration, LocalRule, Placement, RunResult};
pub use graph::{Family, GraphSpec, NodeId, PortGraph};
pub use state::{AgentId, AgentMode, AgentState, Port};
