//! Labeled derivation trees produced and consumed by the automata.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::artifact::{Artifact, Node, NodeState};
use crate::grammar::{Gmwf, Mode};

/// A derivation tree; `production == None` marks a bud.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tree {
    pub sort: String,
    pub production: Option<String>,
    pub children: Vec<Tree>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed tree at {position}: {detail}")]
pub struct TreeParseError {
    pub position: usize,
    pub detail: String,
}

impl Tree {
    pub fn bud(sort: impl Into<String>) -> Self {
        Tree { sort: sort.into(), production: None, children: Vec::new() }
    }

    pub fn node(sort: impl Into<String>, production: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree { sort: sort.into(), production: Some(production.into()), children }
    }

    pub fn is_bud(&self) -> bool {
        self.production.is_none()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn has_bud(&self) -> bool {
        self.is_bud() || self.children.iter().any(Tree::has_bud)
    }

    /// `self` is obtained from `other` by cutting subtrees down to buds.
    pub fn is_prefix_of(&self, other: &Tree) -> bool {
        if self.sort != other.sort {
            return false;
        }
        if self.is_bud() {
            return true;
        }
        self.production == other.production
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.is_prefix_of(b))
    }

    pub fn from_node(n: &Node) -> Tree {
        if n.is_bud() {
            return Tree::bud(n.sort.clone());
        }
        Tree {
            sort: n.sort.clone(),
            production: Some(n.production.clone().unwrap_or_default()),
            children: n.children.iter().map(Tree::from_node).collect(),
        }
    }

    /// The artifact this tree describes, with modes taken from `g`.
    pub fn to_artifact(&self, g: &Gmwf) -> Artifact {
        fn build(t: &Tree, g: &Gmwf) -> Node {
            match &t.production {
                None => Node::bud(t.sort.clone(), NodeState::LockedBud, None),
                Some(p) => {
                    let mode = g.production(p).map_or(Mode::Seq, |p| p.mode);
                    Node::closed(
                        t.sort.clone(),
                        Some(p.clone()),
                        mode,
                        t.children.iter().map(|c| build(c, g)).collect(),
                    )
                }
            }
        }
        Artifact::new(build(self, g))
    }
}

/// Written as `A P1[C P7, B P3[Cω, A P2]]`.
impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.production {
            None => write!(f, "{}ω", self.sort),
            Some(p) => {
                write!(f, "{} {}", self.sort, p)?;
                if !self.children.is_empty() {
                    write!(f, "[")?;
                    for (i, c) in self.children.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{c}")?;
                    }
                    write!(f, "]")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Tree {
    type Err = TreeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        let mut pos = 0;
        let tree = parse_tree(&chars, &mut pos)?;
        skip_spaces(&chars, &mut pos);
        if pos != chars.len() {
            return Err(TreeParseError { position: pos, detail: "trailing input".into() });
        }
        Ok(tree)
    }
}

fn skip_spaces(chars: &[char], pos: &mut usize) {
    while chars.get(*pos).is_some_and(|c| c.is_whitespace()) {
        *pos += 1;
    }
}

fn token(chars: &[char], pos: &mut usize) -> String {
    let start = *pos;
    while chars.get(*pos).is_some_and(|c| !c.is_whitespace() && !matches!(c, 'ω' | '[' | ']' | ',')) {
        *pos += 1;
    }
    chars[start..*pos].iter().collect()
}

fn parse_tree(chars: &[char], pos: &mut usize) -> Result<Tree, TreeParseError> {
    skip_spaces(chars, pos);
    let sort = token(chars, pos);
    if sort.is_empty() {
        return Err(TreeParseError { position: *pos, detail: "expected a sort".into() });
    }
    if chars.get(*pos) == Some(&'ω') {
        *pos += 1;
        return Ok(Tree::bud(sort));
    }
    skip_spaces(chars, pos);
    let production = token(chars, pos);
    if production.is_empty() {
        return Err(TreeParseError { position: *pos, detail: "expected a production or ω".into() });
    }
    let mut children = Vec::new();
    if chars.get(*pos) == Some(&'[') {
        *pos += 1;
        loop {
            children.push(parse_tree(chars, pos)?);
            skip_spaces(chars, pos);
            match chars.get(*pos) {
                Some(',') => *pos += 1,
                Some(']') => {
                    *pos += 1;
                    break;
                }
                _ => return Err(TreeParseError { position: *pos, detail: "expected , or ]".into() }),
            }
        }
    }
    Ok(Tree::node(sort, production, children))
}

/// Pointwise agreement of two trees: equal labels are kept, a bud yields to
/// the other side, and differing productions collapse to a bud.
pub fn consensual_merge_pair(t1: &Tree, t2: &Tree) -> Tree {
    if t1.is_bud() {
        return t2.clone();
    }
    if t2.is_bud() {
        return t1.clone();
    }
    if t1.production != t2.production || t1.children.len() != t2.children.len() {
        return Tree::bud(t1.sort.clone());
    }
    Tree {
        sort: t1.sort.clone(),
        production: t1.production.clone(),
        children: t1.children.iter().zip(&t2.children).map(|(a, b)| consensual_merge_pair(a, b)).collect(),
    }
}
