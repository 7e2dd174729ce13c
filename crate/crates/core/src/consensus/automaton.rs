//! Tree automata recognizing the global trees compatible with a replica,
//! their synchronized product, and tree generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use super::dyck::{BracketMap, DyckWord};
use super::tree::Tree;
use crate::artifact::{Artifact, Node};
use crate::grammar::Gmwf;
use crate::projection::View;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("replica root {found} is not the axiom {expected}")]
    RootMismatch { expected: String, found: String },
    #[error("the automaton accepts no finite tree")]
    Empty,
    #[error("no replica given")]
    NoReplica,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    /// Still constrained by the replicas.
    Active,
    /// Unconstrained: any development is acceptable here.
    Open,
    /// The replicas disagree; only a bud is acceptable.
    Conflict,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    /// `None` for the bud transition.
    pub production: Option<String>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct State {
    pub sort: String,
    pub kind: StateKind,
    /// One rendering per replica folded into this automaton.
    pub components: Vec<String>,
    pub transitions: Vec<Transition>,
}

impl State {
    pub fn is_exit(&self) -> bool {
        self.kind != StateKind::Active
    }

    pub fn description(&self) -> String {
        match self.components.as_slice() {
            [one] => one.clone(),
            many => format!("({})", many.join(", ")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Automaton {
    pub states: Vec<State>,
    pub initial: usize,
    asleep: BTreeMap<String, usize>,
}

fn bud_transition() -> Transition {
    Transition { production: None, children: Vec::new() }
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Key {
    Open(String),
    Close(String, DyckWord),
}

struct ReplicaBuilder<'a> {
    g: &'a Gmwf,
    view: &'a View,
    map: BracketMap,
    states: Vec<State>,
    forests: Vec<Option<Vec<Node>>>,
    keys: HashMap<Key, usize>,
    queue: VecDeque<usize>,
}

impl ReplicaBuilder<'_> {
    fn open(&mut self, sort: &str) -> usize {
        let key = Key::Open(sort.to_string());
        if let Some(&q) = self.keys.get(&key) {
            return q;
        }
        let q = self.states.len();
        self.states.push(State {
            sort: sort.to_string(),
            kind: StateKind::Open,
            components: vec![format!("Open {sort}")],
            transitions: vec![bud_transition()],
        });
        self.forests.push(None);
        self.keys.insert(key, q);
        q
    }

    fn close(&mut self, sort: &str, forest: &[Node]) -> usize {
        let word = DyckWord::from_forest(forest);
        let key = Key::Close(sort.to_string(), word.clone());
        if let Some(&q) = self.keys.get(&key) {
            return q;
        }
        let q = self.states.len();
        self.states.push(State {
            sort: sort.to_string(),
            kind: StateKind::Active,
            components: vec![format!("⟨{sort},{}⟩", word.render(&self.map))],
            transitions: Vec::new(),
        });
        self.forests.push(Some(forest.to_vec()));
        self.keys.insert(key, q);
        self.queue.push_back(q);
        q
    }

    fn expand(&mut self, q: usize) {
        let Some(forest) = self.forests[q].clone() else { return };
        let sort = self.states[q].sort.clone();
        let mut transitions: Vec<Transition> = Vec::new();
        for p in self.g.productions_of(&sort) {
            let mut splits = Vec::new();
            self.split(&p.rhs, 0, &forest, 0, &mut Vec::new(), &mut splits);
            for children in splits {
                let t = Transition { production: Some(p.id.clone()), children };
                if !transitions.contains(&t) {
                    transitions.push(t);
                }
            }
        }
        self.states[q].transitions = transitions;
    }

    /// Every way of distributing `forest[pos..]` over `rhs[i..]`.
    fn split(
        &mut self,
        rhs: &[String],
        i: usize,
        forest: &[Node],
        pos: usize,
        acc: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let Some(x) = rhs.get(i) else {
            if pos == forest.len() {
                out.push(acc.clone());
            }
            return;
        };
        if self.view.contains(x) {
            if let Some(n) = forest.get(pos).filter(|n| &n.sort == x) {
                let q = if n.is_bud() { self.open(x) } else { self.close(x, &n.children) };
                acc.push(q);
                self.split(rhs, i + 1, forest, pos + 1, acc, out);
                acc.pop();
            }
            return;
        }
        for end in pos..=forest.len() {
            let q = if end == pos { self.open(x) } else { self.close(x, &forest[pos..end]) };
            acc.push(q);
            self.split(rhs, i + 1, forest, end, acc, out);
            acc.pop();
        }
    }
}

impl Automaton {
    /// Recognizes the developments of the axiom whose projection on `view`
    /// is `replica`, an invisible task with nothing visible below being left as a bud.
    pub fn from_replica(g: &Gmwf, view: &View, replica: &Artifact) -> Result<Self, ConsensusError> {
        let axiom = g.axioms.first().cloned().unwrap_or_default();
        if replica.root.sort != axiom {
            return Err(ConsensusError::RootMismatch { expected: axiom, found: replica.root.sort.clone() });
        }
        let mut b = ReplicaBuilder {
            g,
            view,
            map: BracketMap::for_view(view),
            states: Vec::new(),
            forests: Vec::new(),
            keys: HashMap::new(),
            queue: VecDeque::new(),
        };
        let initial = if replica.root.is_bud() { b.open(&axiom) } else { b.close(&axiom, &replica.root.children) };
        let asleep = g.sorts.iter().map(|s| (s.name.clone(), b.open(&s.name))).collect();
        while let Some(q) = b.queue.pop_front() {
            b.expand(q);
        }
        Ok(Automaton { states: b.states, initial, asleep })
    }

    /// The unconstrained state for `sort`.
    pub fn asleep(&self, sort: &str) -> Option<usize> {
        self.asleep.get(sort).copied()
    }

    /// Synchronized product: trees on which both replicas agree, with a bud
    /// wherever they conflict.
    pub fn product(&self, other: &Automaton) -> Automaton {
        let mut p =
            Product { left: self, right: other, states: Vec::new(), keys: HashMap::new(), queue: VecDeque::new() };
        let initial = p.intern(self.initial, other.initial);
        p.drain();
        let mut asleep = BTreeMap::new();
        for (sort, &l) in &self.asleep {
            if let Some(&r) = other.asleep.get(sort) {
                asleep.insert(sort.clone(), p.intern(l, r));
            }
        }
        p.drain();
        Automaton { states: p.states, initial, asleep }
    }

    /// Drops the states from which no finite tree can be derived.
    pub fn trim(&self) -> Result<Automaton, ConsensusError> {
        let mut productive = vec![false; self.states.len()];
        loop {
            let mut changed = false;
            for (q, s) in self.states.iter().enumerate() {
                if !productive[q] && s.transitions.iter().any(|t| t.children.iter().all(|&c| productive[c])) {
                    productive[q] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !productive[self.initial] {
            return Err(ConsensusError::Empty);
        }
        let index: HashMap<usize, usize> =
            (0..self.states.len()).filter(|&q| productive[q]).enumerate().map(|(new, old)| (old, new)).collect();
        let states = self
            .states
            .iter()
            .enumerate()
            .filter(|(q, _)| productive[*q])
            .map(|(_, s)| State {
                transitions: s
                    .transitions
                    .iter()
                    .filter(|t| t.children.iter().all(|&c| productive[c]))
                    .map(|t| Transition {
                        production: t.production.clone(),
                        children: t.children.iter().map(|c| index[c]).collect(),
                    })
                    .collect(),
                ..s.clone()
            })
            .collect();
        let asleep = self.asleep.iter().filter_map(|(s, q)| index.get(q).map(|&n| (s.clone(), n))).collect();
        Ok(Automaton { states, initial: index[&self.initial], asleep })
    }

    /// States reachable from the initial state, in discovery order.
    pub fn reachable(&self) -> Vec<usize> {
        let mut seen = vec![false; self.states.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            order.push(q);
            for t in &self.states[q].transitions {
                for &c in &t.children {
                    if !seen[c] {
                        seen[c] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
        order
    }

    pub fn exit_states(&self) -> Vec<usize> {
        self.reachable().into_iter().filter(|&q| self.states[q].is_exit()).collect()
    }

    pub fn accepts(&self, t: &Tree) -> bool {
        self.accepts_from(self.initial, t)
    }

    fn accepts_from(&self, q: usize, t: &Tree) -> bool {
        let s = &self.states[q];
        s.sort == t.sort
            && s.transitions.iter().any(|tr| {
                tr.production == t.production
                    && tr.children.len() == t.children.len()
                    && tr.children.iter().zip(&t.children).all(|(&c, ct)| self.accepts_from(c, ct))
            })
    }

    /// Trees generated without any state repeating along a root path.
    pub fn generate_simplest_trees(&self) -> Vec<Tree> {
        let mut path = Vec::new();
        self.simplest(self.initial, &mut path).into_iter().collect()
    }

    fn simplest(&self, q: usize, path: &mut Vec<usize>) -> BTreeSet<Tree> {
        path.push(q);
        let s = &self.states[q];
        let mut out = BTreeSet::new();
        for t in &s.transitions {
            if t.children.iter().any(|c| path.contains(c)) {
                continue;
            }
            let sets: Vec<Vec<Tree>> =
                t.children.iter().map(|&c| self.simplest(c, path).into_iter().collect()).collect();
            combine(&s.sort, &t.production, &sets, &mut out);
        }
        path.pop();
        out
    }

    /// Every accepted tree of depth at most `depth`.
    pub fn generate_trees(&self, depth: usize) -> BTreeSet<Tree> {
        let mut memo = HashMap::new();
        self.bounded(self.initial, depth, &mut memo)
    }

    fn bounded(&self, q: usize, depth: usize, memo: &mut HashMap<(usize, usize), BTreeSet<Tree>>) -> BTreeSet<Tree> {
        if depth == 0 {
            return BTreeSet::new();
        }
        if let Some(v) = memo.get(&(q, depth)) {
            return v.clone();
        }
        let s = &self.states[q];
        let mut out = BTreeSet::new();
        for t in &s.transitions {
            let sets: Vec<Vec<Tree>> =
                t.children.iter().map(|&c| self.bounded(c, depth - 1, memo).into_iter().collect()).collect();
            combine(&s.sort, &t.production, &sets, &mut out);
        }
        memo.insert((q, depth), out.clone());
        out
    }
}

fn combine(sort: &str, production: &Option<String>, sets: &[Vec<Tree>], out: &mut BTreeSet<Tree>) {
    if sets.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; sets.len()];
    loop {
        out.insert(Tree {
            sort: sort.to_string(),
            production: production.clone(),
            children: idx.iter().zip(sets).map(|(&i, set)| set[i].clone()).collect(),
        });
        let mut k = 0;
        loop {
            if k == sets.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < sets[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

struct Product<'a> {
    left: &'a Automaton,
    right: &'a Automaton,
    states: Vec<State>,
    keys: HashMap<(usize, usize), usize>,
    queue: VecDeque<(usize, usize)>,
}

impl Product<'_> {
    fn intern(&mut self, l: usize, r: usize) -> usize {
        if let Some(&q) = self.keys.get(&(l, r)) {
            return q;
        }
        let (sl, sr) = (&self.left.states[l], &self.right.states[r]);
        let kind = match (sl.kind, sr.kind) {
            (StateKind::Conflict, _) | (_, StateKind::Conflict) => StateKind::Conflict,
            (StateKind::Open, StateKind::Open) => StateKind::Open,
            (StateKind::Active, StateKind::Active) => {
                let shared = sl.transitions.iter().any(|a| {
                    sr.transitions.iter().any(|b| a.production == b.production && a.children.len() == b.children.len())
                });
                if shared {
                    StateKind::Active
                } else {
                    StateKind::Conflict
                }
            }
            _ => StateKind::Active,
        };
        let q = self.states.len();
        self.states.push(State {
            sort: sl.sort.clone(),
            kind,
            components: sl.components.iter().chain(&sr.components).cloned().collect(),
            transitions: Vec::new(),
        });
        self.keys.insert((l, r), q);
        self.queue.push_back((l, r));
        q
    }

    fn drain(&mut self) {
        while let Some((l, r)) = self.queue.pop_front() {
            let q = self.keys[&(l, r)];
            let transitions = self.transitions(l, r, self.states[q].kind);
            self.states[q].transitions = transitions;
        }
    }

    fn transitions(&mut self, l: usize, r: usize, kind: StateKind) -> Vec<Transition> {
        if kind != StateKind::Active {
            return vec![bud_transition()];
        }
        let (left, right) = (self.left, self.right);
        let (sl, sr) = (&left.states[l], &right.states[r]);
        let mut out: Vec<Transition> = Vec::new();
        let mut push = |t: Transition| {
            if !out.contains(&t) {
                out.push(t);
            }
        };
        match (sl.is_exit(), sr.is_exit()) {
            (false, false) => {
                for a in &sl.transitions {
                    for b in sr.transitions.iter().filter(|b| b.production == a.production) {
                        if a.children.len() == b.children.len() {
                            let children =
                                a.children.iter().zip(&b.children).map(|(&x, &y)| self.intern(x, y)).collect();
                            push(Transition { production: a.production.clone(), children });
                        }
                    }
                }
            }
            (false, true) => {
                for a in &sl.transitions {
                    let children = a
                        .children
                        .iter()
                        .map(|&x| {
                            let y = right.asleep(&left.states[x].sort).unwrap_or(r);
                            self.intern(x, y)
                        })
                        .collect();
                    push(Transition { production: a.production.clone(), children });
                }
            }
            (true, false) => {
                for b in &sr.transitions {
                    let children = b
                        .children
                        .iter()
                        .map(|&y| {
                            let x = left.asleep(&right.states[y].sort).unwrap_or(l);
                            self.intern(x, y)
                        })
                        .collect();
                    push(Transition { production: b.production.clone(), children });
                }
            }
            (true, true) => push(bud_transition()),
        }
        out
    }
}
