//! Decentralized execution of grammatical workflow models: artifacts, view
//! projection, merging and expansion of partial replicas, tree-automata
//! consensus, and the agent reaction protocol with a deterministic simulator.

pub mod artifact;
pub mod consensus;
pub mod engine;
pub mod fixtures;
pub mod grammar;
pub mod merge;
pub mod projection;
pub mod script;
pub mod transport;

pub use artifact::{conforms, create_case, is_prefix, Artifact, ArtifactError, BudRef, DeweyAddress, Node, NodeState};
pub use engine::{
    AgentModel, AgentState, Decision, DecisionProvider, EngineError, OfferedBud, Outgoing, Phase, Step, TraceEvent,
};
pub use grammar::{
    augment_axiom, validate, Accreditation, Actor, Gmawfp, Gmwf, GrammarError, Mode, Production, Sort, SortKind,
    Violation,
};
pub use merge::{
    find_merge_guide, merge_artifacts, prune_upstairs, recompute_bud_states, replica_bud_states, three_way_expand,
    MergeError,
};
pub use projection::{project_artifact, project_gmwf, LocalModel, ProjectionError, Projector, Signature, View};
pub use script::{Script, ScriptedProvider};
pub use transport::{Message, MessageKind, Policy, RunReport, SimError, Simulator};

/// JSON with object keys sorted, arrays kept in order.
pub fn canonical_json<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}
