//! The mobile artifact: a Dewey-addressed tree of tasks with typed buds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::grammar::{Gmwf, Mode, Production};

/// Path of 1-based child positions; empty for the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeweyAddress(Vec<usize>);

impl DeweyAddress {
    pub fn root() -> Self {
        DeweyAddress(Vec::new())
    }

    pub fn from_path(path: Vec<usize>) -> Self {
        DeweyAddress(path)
    }

    pub fn child(&self, position: usize) -> Self {
        let mut p = self.0.clone();
        p.push(position);
        DeweyAddress(p)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            return None;
        }
        Some(DeweyAddress(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn path(&self) -> &[usize] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Ancestor-or-self test.
    pub fn is_prefix_of(&self, other: &DeweyAddress) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for DeweyAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl FromStr for DeweyAddress {
    type Err = ArtifactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "ε" || s == "eps" {
            return Ok(DeweyAddress::root());
        }
        let mut path = Vec::new();
        for part in s.split('.') {
            match part.parse::<usize>() {
                Ok(i) if i >= 1 => path.push(i),
                _ => return Err(ArtifactError::BadAddress(s.to_string())),
            }
        }
        Ok(DeweyAddress(path))
    }
}

impl Serialize for DeweyAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DeweyAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Closed,
    LockedBud,
    UnlockedBud,
    UpstairsBud,
}

impl NodeState {
    pub fn is_bud(self) -> bool {
        matches!(self, NodeState::LockedBud | NodeState::UnlockedBud)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub sort: String,
    pub state: NodeState,
    #[serde(default)]
    pub status: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub production: Option<String>,
    #[serde(default)]
    pub creator: Option<String>,
    #[serde(default)]
    pub children: Vec<Node>,
}

impl Node {
    pub fn bud(sort: impl Into<String>, state: NodeState, creator: Option<String>) -> Node {
        Node {
            sort: sort.into(),
            state,
            status: String::new(),
            mode: Mode::Seq,
            production: None,
            creator,
            children: Vec::new(),
        }
    }

    pub fn closed(sort: impl Into<String>, production: Option<String>, mode: Mode, children: Vec<Node>) -> Node {
        let mode = if children.len() <= 1 { Mode::Seq } else { mode };
        Node {
            sort: sort.into(),
            state: NodeState::Closed,
            status: String::new(),
            mode,
            production,
            creator: None,
            children,
        }
    }

    pub fn is_bud(&self) -> bool {
        self.state.is_bud()
    }

    /// No bud and no upstairs node anywhere below (inclusive).
    pub fn is_complete(&self) -> bool {
        self.state == NodeState::Closed && self.children.iter().all(Node::is_complete)
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Node::depth).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }

    fn get(&self, path: &[usize]) -> Option<&Node> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get(i.checked_sub(1)?)?.get(rest),
        }
    }

    fn get_mut(&mut self, path: &[usize]) -> Option<&mut Node> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get_mut(i.checked_sub(1)?)?.get_mut(rest),
        }
    }

    fn visit<'a>(&'a self, addr: DeweyAddress, out: &mut Vec<(DeweyAddress, &'a Node)>) {
        out.push((addr.clone(), self));
        for (i, c) in self.children.iter().enumerate() {
            c.visit(addr.child(i + 1), out);
        }
    }

    fn strip(&mut self) {
        self.status.clear();
        self.creator = None;
        self.children.iter_mut().for_each(Node::strip);
    }
}

/// An artifact; serialized as its root node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Artifact {
    pub root: Node,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudRef {
    pub address: DeweyAddress,
    pub sort: String,
    pub creator: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArtifactError {
    #[error("no node at address {0}")]
    NoSuchNode(DeweyAddress),
    #[error("node at {0} is not a bud")]
    NotABud(DeweyAddress),
    #[error("bud at {0} is locked")]
    Locked(DeweyAddress),
    #[error("bud at {address} has sort {found}, production expects {expected}")]
    SortMismatch { address: DeweyAddress, expected: String, found: String },
    #[error("grammar has {0} axioms, augment it to a single axiom first")]
    AxiomCount(usize),
    #[error("malformed address {0}")]
    BadAddress(String),
    #[error("invalid artifact: {0}")]
    Parse(String),
}

/// A new case: a single unlocked bud of the sole axiom.
pub fn create_case(g: &Gmwf) -> Result<Artifact, ArtifactError> {
    match g.axioms.as_slice() {
        [axiom] => Ok(Artifact::new(Node::bud(axiom.clone(), NodeState::UnlockedBud, None))),
        other => Err(ArtifactError::AxiomCount(other.len())),
    }
}

impl Artifact {
    pub fn new(root: Node) -> Self {
        Artifact { root }
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        serde_json::from_str(text).map_err(|e| ArtifactError::Parse(e.to_string()))
    }

    pub fn canonical_json(&self) -> String {
        crate::canonical_json(self)
    }

    pub fn node_at(&self, addr: &DeweyAddress) -> Result<&Node, ArtifactError> {
        self.root.get(addr.path()).ok_or_else(|| ArtifactError::NoSuchNode(addr.clone()))
    }

    pub fn node_at_mut(&mut self, addr: &DeweyAddress) -> Result<&mut Node, ArtifactError> {
        self.root.get_mut(addr.path()).ok_or_else(|| ArtifactError::NoSuchNode(addr.clone()))
    }

    /// All nodes with their addresses, in document order.
    pub fn nodes(&self) -> Vec<(DeweyAddress, &Node)> {
        let mut out = Vec::new();
        self.root.visit(DeweyAddress::root(), &mut out);
        out
    }

    pub fn is_closed(&self) -> bool {
        self.root.is_complete()
    }

    pub fn buds(&self) -> Vec<BudRef> {
        self.nodes()
            .into_iter()
            .filter(|(_, n)| n.is_bud())
            .map(|(address, n)| BudRef { address, sort: n.sort.clone(), creator: n.creator.clone() })
            .collect()
    }

    pub fn unlocked_buds(&self) -> Vec<BudRef> {
        self.nodes()
            .into_iter()
            .filter(|(_, n)| n.state == NodeState::UnlockedBud)
            .map(|(address, n)| BudRef { address, sort: n.sort.clone(), creator: n.creator.clone() })
            .collect()
    }

    /// Copy without statuses and creators, for shape comparisons.
    pub fn stripped(&self) -> Artifact {
        let mut a = self.clone();
        a.root.strip();
        a
    }

    /// Develops the unlocked bud at `addr` with `p`.
    pub fn extend_bud(
        &self,
        addr: &DeweyAddress,
        p: &Production,
        status: &str,
        creator: &str,
    ) -> Result<Artifact, ArtifactError> {
        let node = self.node_at(addr)?;
        match node.state {
            NodeState::UnlockedBud => {}
            NodeState::LockedBud => return Err(ArtifactError::Locked(addr.clone())),
            _ => return Err(ArtifactError::NotABud(addr.clone())),
        }
        let mut out = self.clone();
        develop(out.node_at_mut(addr)?, addr, p, status, creator)?;
        Ok(out)
    }
}

/// Turns the bud `node` into a closed node carrying `p`'s children as fresh buds.
pub(crate) fn develop(
    node: &mut Node,
    addr: &DeweyAddress,
    p: &Production,
    status: &str,
    creator: &str,
) -> Result<(), ArtifactError> {
    if node.sort != p.lhs {
        return Err(ArtifactError::SortMismatch {
            address: addr.clone(),
            expected: p.lhs.clone(),
            found: node.sort.clone(),
        });
    }
    node.state = NodeState::Closed;
    node.status = status.to_string();
    node.production = Some(p.id.clone());
    node.mode = p.mode;
    node.children = p
        .rhs
        .iter()
        .enumerate()
        .map(|(i, sort)| {
            let state = if p.mode == Mode::Par || i == 0 { NodeState::UnlockedBud } else { NodeState::LockedBud };
            Node::bud(sort.clone(), state, Some(creator.to_string()))
        })
        .collect();
    Ok(())
}

/// `a ≤ b`: `a` is obtained from `b` by replacing subtrees with buds.
pub fn is_prefix(a: &Artifact, b: &Artifact) -> bool {
    node_prefix(&a.root, &b.root)
}

pub(crate) fn node_prefix(a: &Node, b: &Node) -> bool {
    if a.sort != b.sort {
        return false;
    }
    if a.is_bud() {
        return true;
    }
    if b.is_bud() || a.children.len() != b.children.len() || a.mode != b.mode {
        return false;
    }
    if let (Some(pa), Some(pb)) = (&a.production, &b.production) {
        if pa != pb {
            return false;
        }
    }
    a.children.iter().zip(&b.children).all(|(x, y)| node_prefix(x, y))
}

/// Derivation tree of `g` extended with bud leaves, rooted at an axiom.
pub fn conforms(t: &Artifact, g: &Gmwf) -> bool {
    g.axioms.contains(&t.root.sort) && node_conforms(&t.root, g)
}

fn node_conforms(n: &Node, g: &Gmwf) -> bool {
    if !g.has_sort(&n.sort) {
        return false;
    }
    if n.is_bud() {
        return n.children.is_empty() && n.production.is_none() && n.status.is_empty();
    }
    if n.state != NodeState::Closed && !n.status.is_empty() {
        return false;
    }
    let matches = |p: &Production| {
        p.lhs == n.sort
            && p.mode == n.mode
            && p.rhs.len() == n.children.len()
            && p.rhs.iter().zip(&n.children).all(|(s, c)| *s == c.sort)
    };
    let ok = match &n.production {
        Some(id) => g.production(id).is_some_and(matches),
        None => g.productions.iter().any(matches),
    };
    ok && n.children.iter().all(|c| node_conforms(c, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn production(g: &Gmwf, id: &str) -> Production {
        g.production(id).unwrap().clone()
    }

    #[test]
    fn addresses_round_trip() {
        let a: DeweyAddress = "2.1".parse().unwrap();
        assert_eq!(a.path(), &[2, 1]);
        assert_eq!(a.to_string(), "2.1");
        assert_eq!("ε".parse::<DeweyAddress>().unwrap(), DeweyAddress::root());
        assert!("0.1".parse::<DeweyAddress>().is_err());
        assert_eq!(a.parent().unwrap().to_string(), "2");
        assert!(DeweyAddress::root().is_prefix_of(&a));
    }

    #[test]
    fn create_case_is_single_unlocked_axiom_bud() {
        let g = fixtures::peer_review().augmented().unwrap().gmwf;
        let t = create_case(&g).unwrap();
        assert_eq!(t.root.sort, "A_G");
        assert_eq!(t.root.state, NodeState::UnlockedBud);
        assert!(conforms(&t, &g));
        assert_eq!(create_case(&g).unwrap(), t);
        let unlocked = t.unlocked_buds();
        assert_eq!(unlocked.len(), 1);
        assert!(unlocked[0].address.is_root());
        assert!(create_case(&fixtures::peer_review().gmwf).is_ok());
        let mut two = g.clone();
        two.axioms.push("A".into());
        assert_eq!(create_case(&two), Err(ArtifactError::AxiomCount(2)));
    }

    #[test]
    fn extend_sequential_and_parallel() {
        let g = fixtures::peer_review().gmwf;
        let c = Artifact::new(Node::bud("C", NodeState::UnlockedBud, None));
        let t = c.extend_bud(&DeweyAddress::root(), &production(&g, "P3"), "formatted", "AE").unwrap();
        assert_eq!(t.root.state, NodeState::Closed);
        assert_eq!(t.root.status, "formatted");
        assert_eq!(t.root.children[0].state, NodeState::UnlockedBud);
        assert_eq!(t.root.children[1].state, NodeState::LockedBud);
        assert_eq!(t.root.children[1].creator.as_deref(), Some("AE"));
        assert!(is_prefix(&c, &t));
        assert_eq!(c.root.state, NodeState::UnlockedBud);

        let e = Artifact::new(Node::bud("E", NodeState::UnlockedBud, None));
        let t = e.extend_bud(&DeweyAddress::root(), &production(&g, "P4"), "", "AE").unwrap();
        assert!(t.root.children.iter().all(|c| c.state == NodeState::UnlockedBud));
        assert_eq!(t.root.mode, Mode::Par);

        let b = Artifact::new(Node::bud("B", NodeState::UnlockedBud, None));
        let t = b.extend_bud(&DeweyAddress::root(), &production(&g, "P7"), "", "EC").unwrap();
        assert!(t.is_closed());
    }

    #[test]
    fn extend_errors() {
        let g = fixtures::peer_review().gmwf;
        let root = DeweyAddress::root();
        let locked = Artifact::new(Node::bud("C", NodeState::LockedBud, None));
        assert_eq!(locked.extend_bud(&root, &production(&g, "P3"), "", "AE"), Err(ArtifactError::Locked(root.clone())));
        let wrong = Artifact::new(Node::bud("E", NodeState::UnlockedBud, None));
        assert!(matches!(
            wrong.extend_bud(&root, &production(&g, "P3"), "", "AE"),
            Err(ArtifactError::SortMismatch { .. })
        ));
        let closed = Artifact::new(Node::closed("B", Some("P7".into()), Mode::Seq, vec![]));
        assert_eq!(
            closed.extend_bud(&root, &production(&g, "P7"), "", "EC"),
            Err(ArtifactError::NotABud(root.clone()))
        );
        assert!(matches!(closed.node_at(&"3".parse().unwrap()), Err(ArtifactError::NoSuchNode(_))));
    }

    #[test]
    fn prefix_relation() {
        let targets = fixtures::peer_review().gmwf.enumerate_target_artifacts().unwrap();
        let (rejected, accepted) = (&targets[0], &targets[1]);
        let bud = Artifact::new(Node::bud("A", NodeState::UnlockedBud, None));
        assert!(is_prefix(&bud, rejected));
        assert!(!is_prefix(rejected, accepted));
        assert!(is_prefix(rejected, rejected));
    }

    #[test]
    fn conformity() {
        let g = fixtures::peer_review().gmwf;
        let targets = g.enumerate_target_artifacts().unwrap();
        assert!(conforms(&targets[0], &g));
        let mut bad = targets[0].clone();
        bad.root.children[0].children = vec![Node::bud("D", NodeState::UnlockedBud, None)];
        assert!(!conforms(&bad, &g));
        let mut status_on_bud = create_case(&g).unwrap();
        status_on_bud.root.status = "x".into();
        assert!(!conforms(&status_on_bud, &g));
    }

    #[test]
    fn json_format_keys() {
        let g = fixtures::peer_review().gmwf;
        let t = &g.enumerate_target_artifacts().unwrap()[0];
        let v: serde_json::Value = serde_json::from_str(&t.canonical_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["children", "creator", "mode", "production", "sort", "state", "status"]);
        assert_eq!(Artifact::from_json(&t.canonical_json()).unwrap(), *t);
    }
}
