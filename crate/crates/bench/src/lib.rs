//! Shared inputs for the benchmarks.

use choreo_core::consensus::Automaton;
use choreo_core::{fixtures, Gmwf, View};

/// The two conflicting replicas as automata over the small grammar.
pub fn replica_automata() -> (Gmwf, Automaton, Automaton) {
    let g = fixtures::small_grammar();
    let a1 =
        Automaton::from_replica(&g, &View::new(["A", "B"]), &fixtures::replica_ab()).expect("replica_ab automaton");
    let a2 =
        Automaton::from_replica(&g, &View::new(["A", "C"]), &fixtures::replica_ac()).expect("replica_ac automaton");
    (g, a1, a2)
}
