mod common;

use std::collections::BTreeSet;

use choreo_core::consensus::{consensus, Automaton, Tree};
use choreo_core::{conforms, fixtures, project_artifact, Artifact, Gmwf, Policy, ScriptedProvider, Simulator, View};

const DEPTH: usize = 6;

fn language(a: &Automaton) -> BTreeSet<String> {
    a.generate_trees(DEPTH).iter().map(Tree::to_string).collect()
}

fn replicas(g: &Gmwf) -> Vec<(Artifact, View)> {
    let a1 = Automaton::from_replica(g, &View::new(["A", "B"]), &fixtures::replica_ab()).unwrap();
    let sample = a1.generate_simplest_trees().into_iter().next().unwrap().to_artifact(g);
    let third = View::new(["A"]);
    vec![
        (fixtures::replica_ab(), View::new(["A", "B"])),
        (fixtures::replica_ac(), View::new(["A", "C"])),
        (project_artifact(&sample, &third, g).unwrap(), third),
    ]
}

#[test]
fn consensus_oracle_one_level_deeper() {
    common::consensus_oracle(7).unwrap();
}

#[test]
fn consensus_product_is_commutative() {
    let g = fixtures::small_grammar();
    let r = replicas(&g);
    let ab = consensus(&g, &[r[0].clone(), r[1].clone()]).unwrap();
    let ba = consensus(&g, &[r[1].clone(), r[0].clone()]).unwrap();
    assert_eq!(language(&ab), language(&ba));
}

#[test]
fn consensus_product_is_associative() {
    let g = fixtures::small_grammar();
    let r = replicas(&g);
    let auto = |i: usize| Automaton::from_replica(&g, &r[i].1, &r[i].0).unwrap();
    let left = auto(0).product(&auto(1)).product(&auto(2));
    let right = auto(0).product(&auto(1).product(&auto(2)));
    assert_eq!(language(&left), language(&right));
    assert_eq!(language(&left), language(&consensus(&g, &r).unwrap()));
}

#[test]
fn generated_consensus_trees_conform() {
    let g = fixtures::small_grammar();
    let r = replicas(&g);
    let product = consensus(&g, &r[..2]).unwrap();
    let trees = product.generate_trees(DEPTH);
    assert!(!trees.is_empty());
    for t in trees.iter().chain(&product.generate_simplest_trees()) {
        assert!(conforms(&t.to_artifact(&g), &g), "{t}");
    }
}

fn closed_sorts(t: &Artifact) -> BTreeSet<String> {
    t.nodes().into_iter().filter(|(_, n)| !n.is_bud()).map(|(_, n)| n.sort.clone()).collect()
}

fn run(policy: Policy, script: &str) -> choreo_core::RunReport {
    let sim = Simulator::new(&fixtures::peer_review(), policy).unwrap();
    let mut provider = ScriptedProvider::from_json(script).unwrap();
    sim.run("case-1", &mut provider).unwrap()
}

#[test]
fn reject_closes_only_the_rejection_branch() {
    let report = run(Policy::Fifo, fixtures::REJECT_SCRIPT_JSON);
    let want: BTreeSet<String> = ["A_G", "A", "B", "D"].into_iter().map(String::from).collect();
    assert_eq!(closed_sorts(&report.finals["EC"]), want);
}

#[test]
fn accept_closes_every_sort() {
    let report = run(Policy::Fifo, fixtures::ACCEPT_SCRIPT_JSON);
    let g = fixtures::peer_review_augmented().gmwf;
    let mut want: BTreeSet<String> = g.sorts.iter().map(|s| s.name.clone()).collect();
    want.remove("B");
    assert_eq!(closed_sorts(&report.finals["EC"]), want);
}

#[test]
fn runs_agree_across_policies() {
    for script in [fixtures::ACCEPT_SCRIPT_JSON, fixtures::REJECT_SCRIPT_JSON] {
        let reference = run(Policy::Fifo, script);
        for seed in [1, 2, 3, 42] {
            let other = run(Policy::Random(seed), script);
            assert!(other.terminated);
            assert_eq!(other.finals, reference.finals);
            assert!(other.monitor.is_clean());
        }
    }
}

#[test]
fn scripted_delivery_order_is_followed() {
    let order = ["EC>AE", "AE>R2", "AE>R1", "R2>AE", "R1>AE", "AE>EC"];
    let policy = Policy::Script(
        order.iter().map(|c| c.split_once('>').map(|(a, b)| (a.to_string(), b.to_string())).unwrap()).collect(),
    );
    let report = run(policy, fixtures::ACCEPT_SCRIPT_JSON);
    assert_eq!(report.channels(), order);
    assert!(report.terminated);
}
