//! Running agents as separate processes: a TCP carrier between agents and
//! an HTTP/WebSocket service through which a person acts for one of them.

pub mod deployment;
pub mod host;
pub mod runtime;
pub mod service;
pub mod tcp;

pub use deployment::{AgentEntry, Deployment, DeploymentError, TransportKind};
pub use host::{CaseSummary, Effects, Host, HostError, Workspace};
pub use runtime::{serve, start, NodeError, RunningNode, Shared};
