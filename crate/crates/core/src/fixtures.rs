//! Bundled example models: the peer-review process and the small
//! three-sort grammar with its two conflicting replicas.

use crate::artifact::Artifact;
use crate::grammar::{Gmawfp, Gmwf};

pub const PEER_REVIEW_JSON: &str = include_str!("../data/peer-review.json");
pub const SMALL_GRAMMAR_JSON: &str = include_str!("../data/conflict/grammar.json");
pub const REPLICA_AB_JSON: &str = include_str!("../data/conflict/replica-ab.json");
pub const REPLICA_AC_JSON: &str = include_str!("../data/conflict/replica-ac.json");
pub const ACCEPT_SCRIPT_JSON: &str = include_str!("../data/peer-review.accept.json");
pub const REJECT_SCRIPT_JSON: &str = include_str!("../data/peer-review.reject.json");

/// Peer-review model as written, before axiom augmentation.
pub fn peer_review() -> Gmawfp {
    Gmawfp::from_json(PEER_REVIEW_JSON).expect("bundled peer-review model parses")
}

/// Peer-review model with the synthesized axiom `A_G`.
pub fn peer_review_augmented() -> Gmawfp {
    peer_review().augmented().expect("bundled peer-review model augments")
}

pub fn small_grammar() -> Gmwf {
    Gmawfp::from_json(SMALL_GRAMMAR_JSON).expect("bundled grammar parses").gmwf
}

/// Replica on view {A, B}.
pub fn replica_ab() -> Artifact {
    Artifact::from_json(REPLICA_AB_JSON).expect("bundled replica parses")
}

/// Replica on view {A, C}.
pub fn replica_ac() -> Artifact {
    Artifact::from_json(REPLICA_AC_JSON).expect("bundled replica parses")
}
