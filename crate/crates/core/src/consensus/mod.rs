//! Consensus between partial replicas: each replica becomes a tree automaton
//! over the global grammar and the product of those automata describes the
//! trees every replica agrees with.

pub mod automaton;
pub mod dyck;
pub mod tree;

pub use automaton::{Automaton, ConsensusError, State, StateKind, Transition};
pub use dyck::{BracketMap, DyckWord, Symbol};
pub use tree::{consensual_merge_pair, Tree};

use crate::artifact::Artifact;
use crate::grammar::Gmwf;
use crate::projection::View;

/// Product of the automata of all `replicas`, folded left to right.
pub fn consensus(g: &Gmwf, replicas: &[(Artifact, View)]) -> Result<Automaton, ConsensusError> {
    let mut automata = replicas.iter().map(|(t, v)| Automaton::from_replica(g, v, t));
    let first = automata.next().ok_or(ConsensusError::NoReplica)??;
    automata.try_fold(first, |acc, next| Ok(acc.product(&next?)))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::fixtures;

    fn replicas() -> (Gmwf, Automaton, Automaton) {
        let g = fixtures::small_grammar();
        let a1 = Automaton::from_replica(&g, &View::new(["A", "B"]), &fixtures::replica_ab()).unwrap();
        let a2 = Automaton::from_replica(&g, &View::new(["A", "C"]), &fixtures::replica_ac()).unwrap();
        (g, a1, a2)
    }

    #[test]
    fn product_states_and_exits() {
        let (_, a1, a2) = replicas();
        let product = a1.product(&a2);
        let reachable = product.reachable();
        assert_eq!(reachable.len(), 22);
        let exits: BTreeSet<String> = product.exit_states().iter().map(|&q| product.states[q].description()).collect();
        let expected: BTreeSet<String> = [
            "(⟨B,()⟩, ⟨B,[]()[]()⟩)",
            "(⟨B,()()⟩, ⟨B,[]⟩)",
            "(⟨B,()⟩, ⟨B,()[]()⟩)",
            "(⟨B,()()⟩, ⟨B,[]()[]⟩)",
            "(⟨B,()⟩, ⟨B,()⟩)",
            "(⟨B,()()⟩, ⟨B,[]()[]()⟩)",
            "(⟨C,()⟩, ⟨C,ε⟩)",
            "(Open C, Open C)",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(exits, expected);
    }

    #[test]
    fn four_simplest_trees() {
        let (_, a1, a2) = replicas();
        let trees = a1.product(&a2).generate_simplest_trees();
        let shared = |x: &str| format!("A P1[C P5[A P1[C P7, {x}], C P7], B P3[C P6[C P7, C P7], A P2]]");
        let expected: BTreeSet<String> = [
            "B P4[B P3[C P5[A P2, Cω], A P2], Bω]",
            "B P4[Bω, Bω]",
            "B P4[B P3[Cω, A P2], B P3[C P7, A P2]]",
            "B P4[Bω, B P3[Cω, A P2]]",
        ]
        .into_iter()
        .map(shared)
        .collect();
        let got: BTreeSet<String> = trees.iter().map(Tree::to_string).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn generated_trees_project_back_to_the_replicas() {
        let (g, a1, _) = replicas();
        let view = View::new(["A", "B"]);
        for t in a1.generate_trees(5).iter().filter(|t| !t.has_bud()) {
            let projected = crate::projection::project_artifact(&t.to_artifact(&g), &view, &g).unwrap();
            assert!(crate::artifact::is_prefix(&projected, &fixtures::replica_ab()));
            assert!(crate::artifact::is_prefix(&fixtures::replica_ab(), &projected));
        }
    }

    #[test]
    fn full_view_consensus_of_conflicting_documents() {
        let g = fixtures::small_grammar();
        let view = View::all(&g);
        let t1: Tree = "A P1[C P7, B P3[C P6[C P7, C P7], A P2]]".parse().unwrap();
        let t2: Tree = "A P1[C P7, B P3[C P5[A P2, C P7], A P2]]".parse().unwrap();
        let product = consensus(&g, &[(t1.to_artifact(&g), view.clone()), (t2.to_artifact(&g), view)]).unwrap();
        let trees = product.generate_simplest_trees();
        assert_eq!(trees, vec![consensual_merge_pair(&t1, &t2)]);
        let merged = trees[0].to_artifact(&g);
        let at = merged.node_at(&"2.1".parse().unwrap()).unwrap();
        assert!(at.is_bud() && at.sort == "C");
        assert_eq!(merged.buds().len(), 1);
    }

    #[test]
    fn three_way_fold_keeps_conflicts() {
        let (g, a1, a2) = replicas();
        let view = View::new(["A", "B"]);
        let pair = a1.product(&a2);
        let triple = consensus(
            &g,
            &[
                (fixtures::replica_ab(), view.clone()),
                (fixtures::replica_ac(), View::new(["A", "C"])),
                (fixtures::replica_ab(), view),
            ],
        )
        .unwrap();
        assert_eq!(triple.generate_trees(7), pair.generate_trees(7));
        assert_eq!(consensus(&g, &[]).unwrap_err(), ConsensusError::NoReplica);
    }

    #[test]
    fn trimming_keeps_the_language() {
        let (_, a1, a2) = replicas();
        for a in [&a1, &a2] {
            let trimmed = a.trim().unwrap();
            assert!(trimmed.states.len() <= a.states.len());
            assert_eq!(trimmed.generate_trees(5), a.generate_trees(5));
        }
    }
}
