//! Workflow grammars (GMWf), actors and accreditations (GMAWfP).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{Artifact, Node};

/// Scheduling mode of a production's right-hand side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Seq,
    Par,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Seq => "seq",
            Mode::Par => "par",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortKind {
    #[default]
    Task,
    Structuring,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SortRepr")]
pub struct Sort {
    pub name: String,
    pub kind: SortKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SortRepr {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        kind: SortKind,
        #[serde(default)]
        description: Option<String>,
    },
}

impl From<SortRepr> for Sort {
    fn from(repr: SortRepr) -> Self {
        match repr {
            SortRepr::Name(name) => Sort::task(name),
            SortRepr::Full { name, kind, description } => Sort { name, kind, description },
        }
    }
}

impl Sort {
    pub fn task(name: impl Into<String>) -> Self {
        Sort { name: name.into(), kind: SortKind::Task, description: None }
    }

    pub fn structuring(name: impl Into<String>) -> Self {
        Sort { name: name.into(), kind: SortKind::Structuring, description: None }
    }
}

/// `lhs -> rhs` with a scheduling mode. Unit and empty productions are always `Seq`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "ProductionRepr")]
pub struct Production {
    pub id: String,
    pub lhs: String,
    pub rhs: Vec<String>,
    pub mode: Mode,
}

#[derive(Deserialize)]
struct ProductionRepr {
    id: String,
    lhs: String,
    #[serde(default)]
    rhs: Vec<String>,
    #[serde(default)]
    mode: Mode,
}

impl From<ProductionRepr> for Production {
    fn from(r: ProductionRepr) -> Self {
        Production::new(r.id, r.lhs, r.rhs, r.mode)
    }
}

impl Production {
    pub fn new(id: impl Into<String>, lhs: impl Into<String>, rhs: Vec<String>, mode: Mode) -> Self {
        let mode = if rhs.len() <= 1 { Mode::Seq } else { mode };
        Production { id: id.into(), lhs: lhs.into(), rhs, mode }
    }

    pub fn is_epsilon(&self) -> bool {
        self.rhs.is_empty()
    }

    /// Same lhs, rhs and mode; ids ignored.
    pub fn same_shape(&self, other: &Production) -> bool {
        self.lhs == other.lhs && self.rhs == other.rhs && self.mode == other.mode
    }
}

impl fmt::Display for Production {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> ", self.id, self.lhs)?;
        if self.rhs.is_empty() {
            return f.write_str("eps");
        }
        let sep = match self.mode {
            Mode::Seq => " ; ",
            Mode::Par => " || ",
        };
        f.write_str(&self.rhs.join(sep))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gmwf {
    pub sorts: Vec<Sort>,
    pub productions: Vec<Production>,
    pub axioms: Vec<String>,
}

impl Gmwf {
    pub fn sort(&self, name: &str) -> Option<&Sort> {
        self.sorts.iter().find(|s| s.name == name)
    }

    pub fn has_sort(&self, name: &str) -> bool {
        self.sort(name).is_some()
    }

    pub fn is_structuring(&self, name: &str) -> bool {
        self.sort(name).is_some_and(|s| s.kind == SortKind::Structuring)
    }

    pub fn production(&self, id: &str) -> Option<&Production> {
        self.productions.iter().find(|p| p.id == id)
    }

    pub fn productions_of<'a>(&'a self, lhs: &'a str) -> impl Iterator<Item = &'a Production> + 'a {
        self.productions.iter().filter(move |p| p.lhs == lhs)
    }

    pub fn is_recursive(&self) -> bool {
        self.recursion_witness().is_some()
    }

    /// A cycle `[X, .., X]` in the sort graph, if any.
    pub fn recursion_witness(&self) -> Option<Vec<String>> {
        let mut graph: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for p in &self.productions {
            let entry = graph.entry(p.lhs.as_str()).or_default();
            for s in &p.rhs {
                entry.insert(s.as_str());
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color: HashMap<&str, u8> = HashMap::new();
        let mut stack: Vec<&str> = Vec::new();

        fn dfs<'a>(
            v: &'a str,
            graph: &BTreeMap<&'a str, BTreeSet<&'a str>>,
            color: &mut HashMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            color.insert(v, 1);
            stack.push(v);
            if let Some(next) = graph.get(v) {
                for &w in next {
                    match color.get(w).copied().unwrap_or(0) {
                        1 => {
                            let start = stack.iter().position(|&s| s == w).unwrap_or(0);
                            let mut cycle: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                            cycle.push(w.to_string());
                            return Some(cycle);
                        }
                        0 => {
                            if let Some(c) = dfs(w, graph, color, stack) {
                                return Some(c);
                            }
                        }
                        _ => {}
                    }
                }
            }
            stack.pop();
            color.insert(v, 2);
            None
        }

        let roots: Vec<&str> = graph.keys().copied().collect();
        for v in roots {
            if color.get(v).copied().unwrap_or(0) == 0 {
                if let Some(c) = dfs(v, &graph, &mut color, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Every closed derivation tree rooted at `sort`.
    pub fn derivations(&self, sort: &str) -> Result<Vec<Node>, GrammarError> {
        let mut memo = HashMap::new();
        let mut active = BTreeSet::new();
        self.derive(sort, &mut memo, &mut active)
    }

    fn derive(
        &self,
        sort: &str,
        memo: &mut HashMap<String, Vec<Node>>,
        active: &mut BTreeSet<String>,
    ) -> Result<Vec<Node>, GrammarError> {
        if let Some(done) = memo.get(sort) {
            return Ok(done.clone());
        }
        if !active.insert(sort.to_string()) {
            return Err(GrammarError::Recursive(sort.to_string()));
        }
        let mut out = Vec::new();
        for p in self.productions_of(sort) {
            let mut partial: Vec<Vec<Node>> = vec![Vec::new()];
            for child in &p.rhs {
                let options = self.derive(child, memo, active)?;
                let mut next = Vec::with_capacity(partial.len() * options.len());
                for prefix in &partial {
                    for opt in &options {
                        let mut v = prefix.clone();
                        v.push(opt.clone());
                        next.push(v);
                    }
                }
                partial = next;
            }
            for children in partial {
                out.push(Node::closed(sort, Some(p.id.clone()), p.mode, children));
            }
        }
        active.remove(sort);
        memo.insert(sort.to_string(), out.clone());
        Ok(out)
    }

    /// All target artifacts, sorted by canonical serialization, duplicates removed.
    pub fn enumerate_target_artifacts(&self) -> Result<Vec<Artifact>, GrammarError> {
        if let Some(cycle) = self.recursion_witness() {
            return Err(GrammarError::Recursive(cycle[0].clone()));
        }
        let mut keyed: BTreeMap<String, Artifact> = BTreeMap::new();
        for axiom in &self.axioms {
            for root in self.derivations(axiom)? {
                let a = Artifact::new(root);
                keyed.insert(a.canonical_json(), a);
            }
        }
        Ok(keyed.into_values().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    #[serde(default)]
    pub address: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accreditation {
    pub actor: String,
    #[serde(default)]
    pub read: Vec<String>,
    #[serde(default)]
    pub write: Vec<String>,
    #[serde(default)]
    pub execute: Vec<String>,
}

impl Accreditation {
    pub fn can_read(&self, sort: &str) -> bool {
        self.read.iter().any(|s| s == sort)
    }
    pub fn can_write(&self, sort: &str) -> bool {
        self.write.iter().any(|s| s == sort)
    }
    pub fn can_execute(&self, sort: &str) -> bool {
        self.execute.iter().any(|s| s == sort)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gmawfp {
    #[serde(flatten)]
    pub gmwf: Gmwf,
    #[serde(default)]
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub accreditations: Vec<Accreditation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initiator: Option<String>,
}

impl Gmawfp {
    pub fn from_json(text: &str) -> Result<Self, GrammarError> {
        serde_json::from_str(text).map_err(|e| GrammarError::Parse(e.to_string()))
    }

    pub fn canonical_json(&self) -> String {
        crate::canonical_json(self)
    }

    pub fn accreditation(&self, actor: &str) -> Option<&Accreditation> {
        self.accreditations.iter().find(|a| a.actor == actor)
    }

    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    /// The unique actor allowed to write `sort`.
    pub fn writer_of(&self, sort: &str) -> Option<&str> {
        let mut writers = self.accreditations.iter().filter(|a| a.can_write(sort));
        match (writers.next(), writers.next()) {
            (Some(w), None) => Some(w.actor.as_str()),
            _ => None,
        }
    }

    /// Initiator: the explicit one, else the unique writer of the single axiom.
    pub fn resolve_initiator(&self) -> Result<String, GrammarError> {
        if let Some(i) = &self.initiator {
            return Ok(i.clone());
        }
        let mut found = BTreeSet::new();
        for axiom in &self.gmwf.axioms {
            if let Some(w) = self.writer_of(axiom) {
                found.insert(w.to_string());
            }
        }
        match found.len() {
            1 => Ok(found.into_iter().next().unwrap_or_default()),
            _ => Err(GrammarError::NoInitiator),
        }
    }

    /// The model with a synthesized single axiom (see [`augment_axiom`]).
    pub fn augmented(&self) -> Result<Gmawfp, GrammarError> {
        let initiator = self.resolve_initiator()?;
        let (gmwf, accreditations) = augment_axiom(&self.gmwf, &self.accreditations, &initiator)?;
        Ok(Gmawfp { gmwf, accreditations, actors: self.actors.clone(), initiator: Some(initiator) })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("sort {0} derives itself")]
    Recursive(String),
    #[error("grammar has no axiom")]
    NoAxiom,
    #[error("grammar has {0} axioms, a single axiom is required")]
    MultipleAxioms(usize),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("cannot determine the case initiator")]
    NoInitiator,
    #[error("invalid model: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("sort {sort} is declared twice")]
    DuplicateSort { sort: String },
    #[error("production id {production} is used twice")]
    DuplicateProduction { production: String },
    #[error("production {production} uses undeclared sort {sort}")]
    UndeclaredSort { production: String, sort: String },
    #[error("axiom {sort} is not a declared sort")]
    UndeclaredAxiom { sort: String },
    #[error("grammar has no axiom")]
    NoAxiom,
    #[error("structuring sort {sort} carries a task description")]
    DescribedStructuring { sort: String },
    #[error("actor {actor} writes {sort} without reading it")]
    WriteNotRead { actor: String, sort: String },
    #[error("task {sort} has no writer")]
    NoWriter { sort: String },
    #[error("task {sort} has several writers: {}", actors.join(", "))]
    SeveralWriters { sort: String, actors: Vec<String> },
    #[error("axiom {sort} is not readable by {actor}")]
    HiddenAxiom { sort: String, actor: String },
    #[error("recursive sorts: {}", cycle.join(" -> "))]
    Recursive { cycle: Vec<String> },
    #[error("accreditation for unknown actor {actor}")]
    UnknownActor { actor: String },
    #[error("actor {actor} has no accreditation")]
    MissingAccreditation { actor: String },
    #[error("actor {actor} has several accreditations")]
    DuplicateAccreditation { actor: String },
    #[error("accreditation of {actor} names undeclared sort {sort}")]
    UnknownAccreditedSort { actor: String, sort: String },
}

/// Every violated standing assumption of the model; empty when valid.
pub fn validate(def: &Gmawfp) -> Vec<Violation> {
    let g = &def.gmwf;
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for s in &g.sorts {
        if !seen.insert(s.name.as_str()) {
            out.push(Violation::DuplicateSort { sort: s.name.clone() });
        }
        if s.kind == SortKind::Structuring && s.description.is_some() {
            out.push(Violation::DescribedStructuring { sort: s.name.clone() });
        }
    }
    let mut ids = BTreeSet::new();
    for p in &g.productions {
        if !ids.insert(p.id.as_str()) {
            out.push(Violation::DuplicateProduction { production: p.id.clone() });
        }
        for s in std::iter::once(&p.lhs).chain(p.rhs.iter()) {
            if !g.has_sort(s) {
                out.push(Violation::UndeclaredSort { production: p.id.clone(), sort: s.clone() });
            }
        }
    }
    if g.axioms.is_empty() {
        out.push(Violation::NoAxiom);
    }
    for a in &g.axioms {
        if !g.has_sort(a) {
            out.push(Violation::UndeclaredAxiom { sort: a.clone() });
        }
    }
    if let Some(cycle) = g.recursion_witness() {
        out.push(Violation::Recursive { cycle });
    }

    let mut accredited = BTreeSet::new();
    for acc in &def.accreditations {
        if def.actor(&acc.actor).is_none() {
            out.push(Violation::UnknownActor { actor: acc.actor.clone() });
        }
        if !accredited.insert(acc.actor.as_str()) {
            out.push(Violation::DuplicateAccreditation { actor: acc.actor.clone() });
        }
        for s in acc.read.iter().chain(&acc.write).chain(&acc.execute) {
            if !g.has_sort(s) {
                out.push(Violation::UnknownAccreditedSort { actor: acc.actor.clone(), sort: s.clone() });
            }
        }
        for s in &acc.write {
            if !acc.can_read(s) {
                out.push(Violation::WriteNotRead { actor: acc.actor.clone(), sort: s.clone() });
            }
        }
    }
    for actor in &def.actors {
        if !accredited.contains(actor.id.as_str()) {
            out.push(Violation::MissingAccreditation { actor: actor.id.clone() });
        }
    }

    for s in &g.sorts {
        if s.kind != SortKind::Task {
            continue;
        }
        let writers: Vec<String> =
            def.accreditations.iter().filter(|a| a.can_write(&s.name)).map(|a| a.actor.clone()).collect();
        match writers.len() {
            0 => out.push(Violation::NoWriter { sort: s.name.clone() }),
            1 => {}
            _ => out.push(Violation::SeveralWriters { sort: s.name.clone(), actors: writers }),
        }
    }
    for a in &g.axioms {
        for acc in &def.accreditations {
            if !acc.can_read(a) {
                out.push(Violation::HiddenAxiom { sort: a.clone(), actor: acc.actor.clone() });
            }
        }
    }
    out
}

fn fresh_name(base: &str, taken: impl Fn(&str) -> bool) -> String {
    if !taken(base) {
        return base.to_string();
    }
    (1..).map(|k| format!("{base}#{k}")).find(|n| !taken(n)).unwrap_or_else(|| base.to_string())
}

/// Adds a fresh sole axiom `A_G` with one unit production per former axiom.
pub fn augment_axiom(
    g: &Gmwf,
    acc: &[Accreditation],
    initiator: &str,
) -> Result<(Gmwf, Vec<Accreditation>), GrammarError> {
    if g.axioms.is_empty() {
        return Err(GrammarError::NoAxiom);
    }
    if !acc.iter().any(|a| a.actor == initiator) {
        return Err(GrammarError::UnknownActor(initiator.to_string()));
    }
    let axiom = fresh_name("A_G", |n| g.has_sort(n));
    let mut out = g.clone();
    out.sorts.insert(0, Sort::structuring(axiom.clone()));
    for (k, former) in g.axioms.iter().enumerate() {
        let id = fresh_name(&format!("PG{}", k + 1), |n| out.production(n).is_some());
        out.productions.insert(k, Production::new(id, axiom.clone(), vec![former.clone()], Mode::Seq));
    }
    out.axioms = vec![axiom.clone()];

    let accs = acc
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.read.insert(0, axiom.clone());
            if a.actor == initiator {
                a.write.insert(0, axiom.clone());
            }
            a
        })
        .collect();
    Ok((out, accs))
}
