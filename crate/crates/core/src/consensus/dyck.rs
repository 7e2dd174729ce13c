//! Bracket encoding of replica forests.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::artifact::{Node, NodeState};
use crate::grammar::Mode;
use crate::projection::View;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Open(String),
    Close(String),
    Bud(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DyckError {
    #[error("unexpected character {0:?} at {1}")]
    Unexpected(char, usize),
    #[error("unbalanced word")]
    Unbalanced,
}

/// Per-sort bracket pairs.
#[derive(Clone, Debug, Default)]
pub struct BracketMap {
    pairs: BTreeMap<String, (String, String)>,
}

const PAIRS: [(&str, &str); 4] = [("(", ")"), ("[", "]"), ("{", "}"), ("<", ">")];

impl BracketMap {
    /// `()`, `[]`, `{}`, `<>` to the view's sorts in name order, then `Sort(..)`.
    pub fn for_view(view: &View) -> Self {
        let pairs = view
            .sorts()
            .enumerate()
            .map(|(i, s)| {
                let pair = match PAIRS.get(i) {
                    Some((o, c)) => (o.to_string(), c.to_string()),
                    None => (format!("{s}("), ")".to_string()),
                };
                (s.to_string(), pair)
            })
            .collect();
        BracketMap { pairs }
    }

    fn open(&self, sort: &str) -> String {
        self.pairs.get(sort).map(|p| p.0.clone()).unwrap_or_else(|| format!("{sort}("))
    }

    fn close(&self, sort: &str) -> String {
        self.pairs.get(sort).map(|p| p.1.clone()).unwrap_or_else(|| ")".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DyckWord(pub Vec<Symbol>);

impl DyckWord {
    pub fn from_forest(forest: &[Node]) -> Self {
        fn push(n: &Node, out: &mut Vec<Symbol>) {
            if n.is_bud() {
                out.push(Symbol::Bud(n.sort.clone()));
                return;
            }
            out.push(Symbol::Open(n.sort.clone()));
            n.children.iter().for_each(|c| push(c, out));
            out.push(Symbol::Close(n.sort.clone()));
        }
        let mut out = Vec::new();
        forest.iter().for_each(|n| push(n, &mut out));
        DyckWord(out)
    }

    pub fn to_forest(&self) -> Result<Vec<Node>, DyckError> {
        let mut stack: Vec<(String, Vec<Node>)> = vec![(String::new(), Vec::new())];
        for sym in &self.0 {
            match sym {
                Symbol::Open(s) => stack.push((s.clone(), Vec::new())),
                Symbol::Bud(s) => stack.last_mut().ok_or(DyckError::Unbalanced)?.1.push(Node::bud(
                    s.clone(),
                    NodeState::LockedBud,
                    None,
                )),
                Symbol::Close(s) => {
                    let (sort, children) = stack.pop().ok_or(DyckError::Unbalanced)?;
                    if &sort != s || stack.is_empty() {
                        return Err(DyckError::Unbalanced);
                    }
                    let node = Node::closed(sort, None, Mode::Seq, children);
                    stack.last_mut().ok_or(DyckError::Unbalanced)?.1.push(node);
                }
            }
        }
        match stack.pop() {
            Some((_, forest)) if stack.is_empty() => Ok(forest),
            _ => Err(DyckError::Unbalanced),
        }
    }

    /// Text form; a bud is written as its brackets around `ω`, the empty word as `ε`.
    pub fn render(&self, map: &BracketMap) -> String {
        if self.0.is_empty() {
            return "ε".into();
        }
        self.0
            .iter()
            .map(|s| match s {
                Symbol::Open(x) => map.open(x),
                Symbol::Close(x) => map.close(x),
                Symbol::Bud(x) => format!("{}ω{}", map.open(x), map.close(x)),
            })
            .collect()
    }

    pub fn parse(text: &str, map: &BracketMap) -> Result<Self, DyckError> {
        let mut out = Vec::new();
        if text == "ε" {
            return Ok(DyckWord(out));
        }
        let mut rest = text;
        let mut offset = 0;
        'outer: while !rest.is_empty() {
            for (sort, (open, close)) in &map.pairs {
                let bud = format!("{open}ω{close}");
                let (sym, len) = if rest.starts_with(&bud) {
                    (Symbol::Bud(sort.clone()), bud.len())
                } else if rest.starts_with(open.as_str()) {
                    (Symbol::Open(sort.clone()), open.len())
                } else if rest.starts_with(close.as_str()) && open != close {
                    // A closing bracket shared by several sorts closes the innermost open one.
                    let innermost = out.iter().rev().try_fold(0i32, |depth, s| match s {
                        Symbol::Close(_) => Ok(depth + 1),
                        Symbol::Open(x) if depth == 0 => Err(x.clone()),
                        Symbol::Open(_) => Ok(depth - 1),
                        Symbol::Bud(_) => Ok(depth),
                    });
                    match innermost {
                        Err(x) if map.close(&x) == *close => (Symbol::Close(x), close.len()),
                        _ => continue,
                    }
                } else {
                    continue;
                };
                out.push(sym);
                rest = &rest[len..];
                offset += len;
                continue 'outer;
            }
            return Err(DyckError::Unexpected(rest.chars().next().unwrap_or(' '), offset));
        }
        Ok(DyckWord(out))
    }
}
