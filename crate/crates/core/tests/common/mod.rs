#![allow(dead_code)]

use std::collections::BTreeSet;

use choreo_core::consensus::{consensual_merge_pair, Automaton, Tree};
use choreo_core::{fixtures, recompute_bud_states, Artifact, Gmawfp, LocalModel, Node, NodeState, View};
use rand::Rng;

pub const AGENTS: [&str; 4] = ["EC", "AE", "R1", "R2"];

pub fn model() -> Gmawfp {
    fixtures::peer_review_augmented()
}

pub fn targets(m: &Gmawfp) -> Vec<Artifact> {
    m.gmwf.enumerate_target_artifacts().unwrap()
}

pub fn local(m: &Gmawfp, agent: &str) -> LocalModel {
    choreo_core::project_gmwf(&m.gmwf, &View::from(m.accreditation(agent).unwrap())).unwrap()
}

fn bud(n: &Node) -> Node {
    Node::bud(n.sort.clone(), NodeState::LockedBud, None)
}

fn node_prefixes(n: &Node) -> Vec<Node> {
    let mut out = vec![bud(n)];
    let mut combos: Vec<Vec<Node>> = vec![Vec::new()];
    for c in &n.children {
        let options = node_prefixes(c);
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect();
    }
    for children in combos {
        out.push(Node { children, ..n.clone() });
    }
    out
}

/// Every prefix of `t`, lock states from precedence.
pub fn all_prefixes(m: &Gmawfp, t: &Artifact) -> Vec<Artifact> {
    node_prefixes(&t.root).into_iter().map(|n| recompute_bud_states(&Artifact::new(n), &m.gmwf, None)).collect()
}

fn random_node_prefix(n: &Node, rng: &mut impl Rng, cut: f64) -> Node {
    if rng.random_bool(cut) {
        return bud(n);
    }
    Node { children: n.children.iter().map(|c| random_node_prefix(c, rng, cut)).collect(), ..n.clone() }
}

pub fn random_prefix(m: &Gmawfp, t: &Artifact, rng: &mut impl Rng) -> Artifact {
    let cut = rng.random_range(0.05..0.5);
    recompute_bud_states(&Artifact::new(random_node_prefix(&t.root, rng, cut)), &m.gmwf, None)
}

fn extend_node(p: &Node, full: &Node, rng: &mut impl Rng) -> Node {
    if p.is_bud() {
        return if rng.random_bool(0.5) { random_node_prefix(full, rng, 0.3) } else { p.clone() };
    }
    Node { children: p.children.iter().zip(&full.children).map(|(a, b)| extend_node(a, b, rng)).collect(), ..p.clone() }
}

/// A random `u` with `prefix ≤ u ≤ full`.
pub fn random_extension(m: &Gmawfp, prefix: &Artifact, full: &Artifact, rng: &mut impl Rng) -> Artifact {
    recompute_bud_states(&Artifact::new(extend_node(&prefix.root, &full.root, rng)), &m.gmwf, None)
}

fn maximal(set: &BTreeSet<Tree>) -> Vec<&Tree> {
    set.iter().filter(|t| !set.iter().any(|u| u != *t && t.is_prefix_of(u))).collect()
}

fn strict_prefixes(t: &Tree, out: &mut Vec<Tree>) {
    if t.is_bud() {
        return;
    }
    out.push(Tree::bud(t.sort.clone()));
    for (i, c) in t.children.iter().enumerate() {
        let mut inner = Vec::new();
        strict_prefixes(c, &mut inner);
        for p in inner {
            let mut copy = t.clone();
            copy.children[i] = p;
            out.push(copy);
        }
    }
}

/// Compares the product of the two trimmed replica automata, up to `depth`,
/// with the brute-force merges of their languages one level deeper.
pub fn consensus_oracle(depth: usize) -> Result<String, String> {
    let g = fixtures::small_grammar();
    let trimmed = |view: View, replica: &Artifact| {
        Automaton::from_replica(&g, &view, replica).and_then(|a| a.trim()).map_err(|e| e.to_string())
    };
    let a1 = trimmed(View::new(["A", "B"]), &fixtures::replica_ab())?;
    let a2 = trimmed(View::new(["A", "C"]), &fixtures::replica_ac())?;
    let product = a1.product(&a2);

    let l1 = a1.generate_trees(depth + 1);
    let l2 = a2.generate_trees(depth + 1);
    let merges: BTreeSet<Tree> =
        l1.iter().flat_map(|t1| l2.iter().map(move |t2| consensual_merge_pair(t1, t2))).collect();
    let generated = product.generate_trees(depth);
    if generated.is_empty() {
        return Err("product generates nothing".into());
    }
    for t in &generated {
        if !merges.contains(t) {
            return Err(format!("product tree {t} is no merge"));
        }
        let mut prefixes = Vec::new();
        strict_prefixes(t, &mut prefixes);
        if let Some(p) = prefixes.iter().find(|p| product.accepts(p)) {
            return Err(format!("strict prefix {p} of {t} accepted"));
        }
    }
    let maximal_merges: Vec<&Tree> = maximal(&merges).into_iter().filter(|m| m.depth() <= depth).collect();
    if let Some(m) = maximal_merges.iter().find(|m| !product.accepts(m)) {
        return Err(format!("maximal merge {m} rejected"));
    }
    Ok(format!(
        "depth {depth}: {} x {} replica trees, {} merges, {} maximal, {} product trees",
        l1.len(),
        l2.len(),
        merges.len(),
        maximal_merges.len(),
        generated.len()
    ))
}
