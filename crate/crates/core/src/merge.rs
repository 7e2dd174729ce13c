//! Merging replicas, merge-guide search, three-way expansion of a partial
//! replica, pruning at upstairs buds, and bud-state recomputation.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::artifact::{is_prefix, Artifact, DeweyAddress, Node, NodeState};
use crate::grammar::{Accreditation, Gmwf, Mode};
use crate::projection::{LocalModel, ProjectionError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MergeError {
    #[error("conflict at {address}: {detail}")]
    Conflict { address: DeweyAddress, detail: String },
    #[error("different statuses at {0}")]
    StatusConflict(DeweyAddress),
    #[error("no target artifact can guide the expansion")]
    NoGuide,
    #[error("replica does not follow the guide's projection at {0}")]
    Desync(DeweyAddress),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Node-wise union of two replicas of the same case.
pub fn merge_artifacts(t1: &Artifact, t2: &Artifact) -> Result<Artifact, MergeError> {
    let root = merge_node(&t1.root, &t2.root, &DeweyAddress::root())?;
    Ok(with_precedence(Artifact::new(root)))
}

fn merge_node(a: &Node, b: &Node, addr: &DeweyAddress) -> Result<Node, MergeError> {
    if a.sort != b.sort {
        return Err(MergeError::Conflict { address: addr.clone(), detail: format!("sorts {} and {}", a.sort, b.sort) });
    }
    let creator = a.creator.clone().or_else(|| b.creator.clone());
    let mut out = match (a.is_bud(), b.is_bud()) {
        (true, true) | (false, true) => a.clone(),
        (true, false) => b.clone(),
        (false, false) => {
            if a.production.is_some() && b.production.is_some() && a.production != b.production {
                return Err(MergeError::Conflict {
                    address: addr.clone(),
                    detail: format!(
                        "productions {} and {}",
                        a.production.as_deref().unwrap_or_default(),
                        b.production.as_deref().unwrap_or_default()
                    ),
                });
            }
            if a.children.len() != b.children.len() || a.mode != b.mode {
                return Err(MergeError::Conflict { address: addr.clone(), detail: "different children".into() });
            }
            let status = match (a.status.is_empty(), b.status.is_empty()) {
                (_, true) => a.status.clone(),
                (true, false) => b.status.clone(),
                (false, false) if a.status == b.status => a.status.clone(),
                _ => return Err(MergeError::StatusConflict(addr.clone())),
            };
            let children = a
                .children
                .iter()
                .zip(&b.children)
                .enumerate()
                .map(|(i, (x, y))| merge_node(x, y, &addr.child(i + 1)))
                .collect::<Result<Vec<_>, _>>()?;
            let state =
                if a.state == NodeState::Closed || b.state == NodeState::Closed { NodeState::Closed } else { a.state };
            Node {
                sort: a.sort.clone(),
                state,
                status,
                mode: a.mode,
                production: a.production.clone().or_else(|| b.production.clone()),
                creator: None,
                children,
            }
        }
    };
    out.creator = creator;
    Ok(out)
}

/// Lock states from the precedence induced by the tree, optionally restricted
/// to the buds `acc` may write (structuring buds of `g` always count as writable).
pub fn recompute_bud_states(t: &Artifact, g: &Gmwf, acc: Option<&Accreditation>) -> Artifact {
    let mut out = t.clone();
    let writable = |sort: &str| acc.is_none_or(|a| g.is_structuring(sort) || a.can_write(sort));
    apply_precedence(&mut out.root, true, &writable);
    out
}

pub(crate) fn with_precedence(mut t: Artifact) -> Artifact {
    apply_precedence(&mut t.root, true, &|_| true);
    t
}

fn apply_precedence(n: &mut Node, enabled: bool, writable: &dyn Fn(&str) -> bool) {
    if n.is_bud() {
        n.state = if enabled && writable(&n.sort) { NodeState::UnlockedBud } else { NodeState::LockedBud };
        return;
    }
    let open = n.state == NodeState::UpstairsBud;
    let mut before_complete = true;
    for c in &mut n.children {
        let complete = c.is_complete();
        let e = enabled && !open && (n.mode == Mode::Par || before_complete);
        apply_precedence(c, e, writable);
        before_complete &= complete;
    }
}

/// A target `t_g` with `t ≤ t_g` and `t_v_maj ≤ π(t_g)`; the smallest one in
/// canonical order when several qualify.
pub fn find_merge_guide(t: &Artifact, t_v_maj: &Artifact, model: &LocalModel) -> Result<Artifact, MergeError> {
    model
        .targets()
        .iter()
        .zip(model.projected_targets())
        .find(|(target, projected)| is_prefix(t, target) && is_prefix(t_v_maj, projected))
        .map(|(target, _)| target.clone())
        .ok_or(MergeError::NoGuide)
}

pub(crate) struct Expansion {
    pub artifact: Artifact,
    /// Replica address to the address of the global node it stands for.
    pub replica_to_global: BTreeMap<DeweyAddress, DeweyAddress>,
}

/// Rebuilds a global artifact from `t` and the edited replica `t_v_maj`,
/// following `guide`. Invisible tasks the replica reached past are emitted
/// as upstairs buds; newly created buds are credited to `agent`.
pub fn three_way_expand(
    t: &Artifact,
    t_v_maj: &Artifact,
    guide: &Artifact,
    model: &LocalModel,
    agent: &str,
) -> Result<Artifact, MergeError> {
    Ok(expand(t, t_v_maj, guide, model, agent)?.artifact)
}

pub(crate) fn expand(
    t: &Artifact,
    t_v_maj: &Artifact,
    guide: &Artifact,
    model: &LocalModel,
    agent: &str,
) -> Result<Expansion, MergeError> {
    let (projected, sources) = model.project_with_sources(guide)?;
    let sources: HashMap<DeweyAddress, DeweyAddress> = sources.into_iter().collect();

    let mut aligner = Aligner { model, sources: &sources, matched: HashMap::new(), replica_to_global: BTreeMap::new() };
    aligner.align(&t_v_maj.root, &projected.root, &DeweyAddress::root())?;

    let mut below = HashSet::new();
    for g_addr in aligner.matched.keys() {
        let mut cur = g_addr.parent();
        while let Some(a) = cur {
            below.insert(a.clone());
            cur = a.parent();
        }
    }
    let builder = Builder { model, matched: &aligner.matched, below, agent };
    let root = builder.build(&guide.root, &DeweyAddress::root(), Some(&t.root));
    Ok(Expansion { artifact: with_precedence(Artifact::new(root)), replica_to_global: aligner.replica_to_global })
}

struct Aligner<'a> {
    model: &'a LocalModel,
    sources: &'a HashMap<DeweyAddress, DeweyAddress>,
    matched: HashMap<DeweyAddress, &'a Node>,
    replica_to_global: BTreeMap<DeweyAddress, DeweyAddress>,
}

impl<'a> Aligner<'a> {
    fn align(&mut self, v: &'a Node, p: &Node, addr: &DeweyAddress) -> Result<(), MergeError> {
        if v.sort != p.sort {
            return Err(MergeError::Desync(addr.clone()));
        }
        let source = self.sources.get(addr).ok_or_else(|| MergeError::Desync(addr.clone()))?;
        self.replica_to_global.insert(addr.clone(), source.clone());
        if self.model.view.contains(&v.sort) {
            self.matched.insert(source.clone(), v);
        }
        if v.is_bud() {
            return Ok(());
        }
        if v.children.len() != p.children.len() || v.mode != p.mode {
            return Err(MergeError::Desync(addr.clone()));
        }
        for (i, (vc, pc)) in v.children.iter().zip(&p.children).enumerate() {
            self.align(vc, pc, &addr.child(i + 1))?;
        }
        Ok(())
    }
}

struct Builder<'a> {
    model: &'a LocalModel,
    matched: &'a HashMap<DeweyAddress, &'a Node>,
    below: HashSet<DeweyAddress>,
    agent: &'a str,
}

impl Builder<'_> {
    fn build(&self, g: &Node, addr: &DeweyAddress, t: Option<&Node>) -> Node {
        if self.model.view.contains(&g.sort) {
            return match self.matched.get(addr) {
                Some(v) if v.is_bud() => match t {
                    Some(tn) if !tn.is_bud() => tn.clone(),
                    _ => Node::bud(v.sort.clone(), v.state, v.creator.clone()),
                },
                Some(v) => Node {
                    sort: g.sort.clone(),
                    state: NodeState::Closed,
                    status: v.status.clone(),
                    mode: g.mode,
                    production: g.production.clone(),
                    creator: v.creator.clone(),
                    children: self.children(g, addr, t),
                },
                None => match t {
                    Some(tn) => tn.clone(),
                    None => self.fresh_bud(g),
                },
            };
        }
        match t {
            Some(tn) if !tn.is_bud() => Node {
                sort: tn.sort.clone(),
                state: tn.state,
                status: tn.status.clone(),
                mode: tn.mode,
                production: tn.production.clone(),
                creator: tn.creator.clone(),
                children: self.children(g, addr, t),
            },
            Some(tn) if self.below.contains(addr) => self.upstairs(g, addr, tn.creator.clone()),
            Some(tn) => tn.clone(),
            None if self.below.contains(addr) => self.upstairs(g, addr, Some(self.agent.to_string())),
            None => self.fresh_bud(g),
        }
    }

    fn children(&self, g: &Node, addr: &DeweyAddress, t: Option<&Node>) -> Vec<Node> {
        let t_children = t.filter(|tn| !tn.is_bud()).map(|tn| tn.children.as_slice()).unwrap_or_default();
        g.children.iter().enumerate().map(|(i, c)| self.build(c, &addr.child(i + 1), t_children.get(i))).collect()
    }

    fn upstairs(&self, g: &Node, addr: &DeweyAddress, creator: Option<String>) -> Node {
        Node {
            sort: g.sort.clone(),
            state: NodeState::UpstairsBud,
            status: String::new(),
            mode: g.mode,
            production: g.production.clone(),
            creator,
            children: self.children(g, addr, None),
        }
    }

    fn fresh_bud(&self, g: &Node) -> Node {
        Node::bud(g.sort.clone(), NodeState::LockedBud, Some(self.agent.to_string()))
    }
}

/// Cuts every root path at its first upstairs bud, which becomes a plain bud.
/// A bud already present in `t_prev` keeps its creator.
pub fn prune_upstairs(t_maj: &Artifact, t_prev: &Artifact) -> Artifact {
    fn prune(n: &Node, addr: &DeweyAddress, prev: &Artifact) -> Node {
        if n.state == NodeState::UpstairsBud {
            let creator = prev
                .node_at(addr)
                .ok()
                .filter(|p| p.is_bud())
                .and_then(|p| p.creator.clone())
                .or_else(|| n.creator.clone());
            return Node::bud(n.sort.clone(), NodeState::LockedBud, creator);
        }
        let mut out = n.clone();
        out.children = n.children.iter().enumerate().map(|(i, c)| prune(c, &addr.child(i + 1), prev)).collect();
        out
    }
    with_precedence(Artifact::new(prune(&t_maj.root, &DeweyAddress::root(), t_prev)))
}

/// Lock states of a partial replica: a bud is unlocked when the global node it
/// stands for is unlocked once the replica is expanded, and the holder may write it.
pub fn replica_bud_states(
    t_global: &Artifact,
    t_partial: &Artifact,
    model: &LocalModel,
    acc: &Accreditation,
    agent: &str,
) -> Result<Artifact, MergeError> {
    let guide = find_merge_guide(t_global, t_partial, model)?;
    let exp = expand(t_global, t_partial, &guide, model, agent)?;
    let mut out = t_partial.clone();
    for bud in t_partial.buds() {
        let global = exp.replica_to_global.get(&bud.address).and_then(|a| exp.artifact.node_at(a).ok());
        let ready = global.is_some_and(|n| n.state == NodeState::UnlockedBud);
        let writable = model.is_structuring(&bud.sort) || acc.can_write(&bud.sort);
        if let Ok(n) = out.node_at_mut(&bud.address) {
            n.state = if ready && writable { NodeState::UnlockedBud } else { NodeState::LockedBud };
        }
    }
    Ok(out)
}
