//! View projection of artifacts and of grammars.
//!
//! Invisible nodes vanish; the blocks they leave behind are grouped under
//! synthesized structuring nodes whenever splicing them into the parent would
//! mix sequential and parallel scheduling.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::artifact::{Artifact, DeweyAddress, Node, NodeState};
use crate::grammar::{Accreditation, Gmwf, GrammarError, Mode, Production, Sort};

/// The sorts an actor may read.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct View {
    sorts: BTreeSet<String>,
}

impl View {
    pub fn new<I, S>(sorts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        View { sorts: sorts.into_iter().map(Into::into).collect() }
    }

    /// Every sort of `g`.
    pub fn all(g: &Gmwf) -> Self {
        View::new(g.sorts.iter().map(|s| s.name.clone()))
    }

    pub fn contains(&self, sort: &str) -> bool {
        self.sorts.contains(sort)
    }

    pub fn sorts(&self) -> impl Iterator<Item = &str> {
        self.sorts.iter().map(String::as_str)
    }
}

impl From<&Accreditation> for View {
    fn from(acc: &Accreditation) -> Self {
        View::new(acc.read.iter().cloned())
    }
}

/// Canonical encoding of the scheduling a structuring node groups.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Signature(String);

impl Signature {
    fn of(mode: Mode, children: &[Raw]) -> Signature {
        let keys: Vec<String> = children
            .iter()
            .map(|c| match &c.label {
                Label::Visible(s) => serde_json::to_string(s).unwrap_or_default(),
                Label::Group(sig) => sig.0.clone(),
            })
            .collect();
        Signature(format!("{mode}({})", keys.join(",")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Label {
    Visible(String),
    Group(Signature),
}

/// Projected node before structuring sorts are named. `source` is the address
/// in the projected artifact of the visible node, or of the invisible node
/// whose block a group wraps.
#[derive(Clone, Debug)]
pub(crate) struct Raw {
    label: Label,
    state: NodeState,
    status: String,
    mode: Mode,
    creator: Option<String>,
    children: Vec<Raw>,
    source: DeweyAddress,
}

impl Raw {
    fn same_shape(&self, other: &Raw) -> bool {
        self.label == other.label
            && self.state == other.state
            && self.mode == other.mode
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(a, b)| a.same_shape(b))
    }

    fn truncated(&self, source: &DeweyAddress) -> Raw {
        match self.label {
            Label::Visible(_) => Raw {
                label: self.label.clone(),
                state: NodeState::LockedBud,
                status: String::new(),
                mode: Mode::Seq,
                creator: None,
                children: Vec::new(),
                source: source.clone(),
            },
            Label::Group(_) => Raw {
                label: self.label.clone(),
                state: self.state,
                status: String::new(),
                mode: self.mode,
                creator: None,
                children: self.children.iter().map(|c| c.truncated(source)).collect(),
                source: source.clone(),
            },
        }
    }

    fn signatures(&self, out: &mut Vec<Signature>) {
        if let Label::Group(sig) = &self.label {
            if !out.contains(sig) {
                out.push(sig.clone());
            }
        }
        self.children.iter().for_each(|c| c.signatures(out));
    }

    fn to_node(&self, name: &mut dyn FnMut(&Signature) -> String) -> Node {
        let sort = match &self.label {
            Label::Visible(s) => s.clone(),
            Label::Group(sig) => name(sig),
        };
        Node {
            sort,
            state: self.state,
            status: self.status.clone(),
            mode: self.mode,
            production: None,
            creator: self.creator.clone(),
            children: self.children.iter().map(|c| c.to_node(name)).collect(),
        }
    }

    fn sources(&self, addr: DeweyAddress, out: &mut Vec<(DeweyAddress, DeweyAddress)>) {
        out.push((addr.clone(), self.source.clone()));
        for (i, c) in self.children.iter().enumerate() {
            c.sources(addr.child(i + 1), out);
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("axiom {0} is not in the view")]
    HiddenAxiom(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Projection onto one view of one grammar.
///
/// An invisible bud stands for every way its task may still unfold. It
/// projects to what all those completions have in common at the top: the
/// structuring nodes they agree on, with visible nodes cut down to locked
/// buds. When completions disagree it projects to nothing.
#[derive(Clone, Debug)]
pub struct Projector {
    view: View,
    shadows: HashMap<(String, Mode), (Vec<Raw>, bool)>,
}

impl Projector {
    pub fn new(g: &Gmwf, view: View) -> Projector {
        let mut p = Projector { view, shadows: HashMap::new() };
        let mut shadows = HashMap::new();
        for sort in &g.sorts {
            if p.view.contains(&sort.name) {
                continue;
            }
            let completions = g.derivations(&sort.name).unwrap_or_default();
            for mode in [Mode::Seq, Mode::Par] {
                let root = DeweyAddress::root();
                let forests: Vec<(Vec<Raw>, bool)> = completions
                    .iter()
                    .map(|c| {
                        let (items, wrapped) = p.contribution(c, &root, mode);
                        (items.iter().map(|r| r.truncated(&root)).collect(), wrapped)
                    })
                    .collect();
                let agreed = match forests.split_first() {
                    Some((first, rest))
                        if rest.iter().all(|f| {
                            f.1 == first.1
                                && f.0.len() == first.0.len()
                                && f.0.iter().zip(&first.0).all(|(a, b)| a.same_shape(b))
                        }) =>
                    {
                        first.clone()
                    }
                    _ => (Vec::new(), false),
                };
                shadows.insert((sort.name.clone(), mode), agreed);
            }
        }
        p.shadows = shadows;
        p
    }

    pub fn view(&self) -> &View {
        &self.view
    }

    pub(crate) fn raw(&self, t: &Artifact) -> Result<Raw, ProjectionError> {
        if !self.view.contains(&t.root.sort) {
            return Err(ProjectionError::HiddenAxiom(t.root.sort.clone()));
        }
        Ok(self.visible(&t.root, &DeweyAddress::root()))
    }

    /// Projection with structuring sorts named `S#1, S#2, ..` in document order.
    pub fn project(&self, t: &Artifact) -> Result<Artifact, ProjectionError> {
        let raw = self.raw(t)?;
        let mut order = Vec::new();
        raw.signatures(&mut order);
        let mut name = |sig: &Signature| {
            let k = order.iter().position(|s| s == sig).unwrap_or(0);
            format!("S#{}", k + 1)
        };
        Ok(Artifact::new(raw.to_node(&mut name)))
    }

    /// Distinct structuring signatures of `t`'s projection, in document order.
    pub fn signatures(&self, t: &Artifact) -> Result<Vec<Signature>, ProjectionError> {
        let mut out = Vec::new();
        self.raw(t)?.signatures(&mut out);
        Ok(out)
    }

    fn visible(&self, n: &Node, addr: &DeweyAddress) -> Raw {
        let mut children = Vec::new();
        let mut single_wrapped = false;
        for (i, c) in n.children.iter().enumerate() {
            let (items, wrapped) = self.contribution(c, &addr.child(i + 1), n.mode);
            if !items.is_empty() {
                single_wrapped = wrapped;
            }
            children.extend(items);
        }
        let mut mode = n.mode;
        if children.len() == 1 && single_wrapped {
            let group = children.remove(0);
            mode = group.mode;
            children = group.children;
        }
        if children.len() <= 1 {
            mode = Mode::Seq;
        }
        Raw {
            label: Label::Visible(n.sort.clone()),
            state: n.state,
            status: n.status.clone(),
            mode,
            creator: n.creator.clone(),
            children,
            source: addr.clone(),
        }
    }

    /// Items `n` contributes to a parent scheduled in `parent_mode`, and
    /// whether they were grouped at this level.
    fn contribution(&self, n: &Node, addr: &DeweyAddress, parent_mode: Mode) -> (Vec<Raw>, bool) {
        if self.view.contains(&n.sort) {
            return (vec![self.visible(n, addr)], false);
        }
        if n.is_bud() {
            return match self.shadows.get(&(n.sort.clone(), parent_mode)) {
                Some((items, wrapped)) => (items.iter().map(|r| r.truncated(addr)).collect(), *wrapped),
                None => (Vec::new(), false),
            };
        }
        let mut items = Vec::new();
        for (i, c) in n.children.iter().enumerate() {
            items.extend(self.contribution(c, &addr.child(i + 1), n.mode).0);
        }
        if n.mode == parent_mode || items.len() <= 1 {
            return (items, false);
        }
        let group = Raw {
            label: Label::Group(Signature::of(n.mode, &items)),
            state: NodeState::Closed,
            status: String::new(),
            mode: n.mode,
            creator: None,
            children: items,
            source: addr.clone(),
        };
        (vec![group], true)
    }
}

/// π: projection of `t` on `view`.
pub fn project_artifact(t: &Artifact, view: &View, g: &Gmwf) -> Result<Artifact, ProjectionError> {
    Projector::new(g, view.clone()).project(t)
}

type Shape = (String, Vec<String>, Mode);

/// Π: the local grammar of a view, with the machinery to project artifacts
/// consistently with it.
#[derive(Clone, Debug)]
pub struct LocalModel {
    pub view: View,
    pub gmwf: Gmwf,
    names: BTreeMap<Signature, String>,
    by_shape: HashMap<Shape, String>,
    projector: Projector,
    targets: Vec<Artifact>,
    projected: Vec<Artifact>,
}

/// Builds the local grammar of `view` from the projections of all targets of `g`.
pub fn project_gmwf(g: &Gmwf, view: &View) -> Result<LocalModel, ProjectionError> {
    for a in &g.axioms {
        if !view.contains(a) {
            return Err(ProjectionError::HiddenAxiom(a.clone()));
        }
    }
    let targets = g.enumerate_target_artifacts()?;
    let projector = Projector::new(g, view.clone());
    let raws: Vec<Raw> = targets.iter().map(|t| projector.raw(t)).collect::<Result<_, _>>()?;

    let mut order = Vec::new();
    raws.iter().for_each(|r| r.signatures(&mut order));
    let names: BTreeMap<Signature, String> =
        order.iter().enumerate().map(|(k, sig)| (sig.clone(), format!("S#{}", k + 1))).collect();

    let nodes: Vec<Node> =
        raws.iter().map(|r| r.to_node(&mut |sig: &Signature| names.get(sig).cloned().unwrap_or_default())).collect();

    let mut seen: Vec<Shape> = Vec::new();
    for n in &nodes {
        let mut queue = VecDeque::from([n]);
        while let Some(x) = queue.pop_front() {
            if x.state == NodeState::Closed {
                let shape = shape_of(x);
                if !seen.contains(&shape) {
                    seen.push(shape);
                }
            }
            queue.extend(x.children.iter());
        }
    }
    let (mut ordered, epsilons): (Vec<Shape>, Vec<Shape>) = seen.into_iter().partition(|s| !s.1.is_empty());
    ordered.extend(epsilons);
    let productions: Vec<Production> = ordered
        .iter()
        .enumerate()
        .map(|(i, (lhs, rhs, mode))| Production::new(format!("P{}", i + 1), lhs.clone(), rhs.clone(), *mode))
        .collect();
    let by_shape: HashMap<Shape, String> =
        productions.iter().map(|p| ((p.lhs.clone(), p.rhs.clone(), p.mode), p.id.clone())).collect();

    let mut sorts: Vec<Sort> = g.sorts.iter().filter(|s| view.contains(&s.name)).cloned().collect();
    sorts.extend(order.iter().map(|sig| Sort::structuring(names[sig].clone())));

    let gmwf = Gmwf { sorts, productions, axioms: g.axioms.clone() };
    let mut model = LocalModel { view: view.clone(), gmwf, names, by_shape, projector, targets, projected: Vec::new() };
    model.projected = nodes
        .into_iter()
        .map(|mut n| {
            model.resolve(&mut n);
            Artifact::new(n)
        })
        .collect();
    Ok(model)
}

fn shape_of(n: &Node) -> Shape {
    (n.sort.clone(), n.children.iter().map(|c| c.sort.clone()).collect(), n.mode)
}

impl LocalModel {
    /// π through this model: structuring sorts named and production ids resolved.
    pub fn project(&self, t: &Artifact) -> Result<Artifact, ProjectionError> {
        Ok(self.project_with_sources(t)?.0)
    }

    /// Projection plus, for every projected address, the address in `t` it stems from.
    pub(crate) fn project_with_sources(
        &self,
        t: &Artifact,
    ) -> Result<(Artifact, Vec<(DeweyAddress, DeweyAddress)>), ProjectionError> {
        let raw = self.projector.raw(t)?;
        let mut sources = Vec::new();
        raw.sources(DeweyAddress::root(), &mut sources);
        let mut node = raw
            .to_node(&mut |sig: &Signature| self.names.get(sig).cloned().unwrap_or_else(|| sig.as_str().to_string()));
        self.resolve(&mut node);
        Ok((Artifact::new(node), sources))
    }

    fn resolve(&self, n: &mut Node) {
        if !n.is_bud() {
            n.production = self.by_shape.get(&shape_of(n)).cloned();
        }
        n.children.iter_mut().for_each(|c| self.resolve(c));
    }

    pub fn structuring_name(&self, sig: &Signature) -> Option<&str> {
        self.names.get(sig).map(String::as_str)
    }

    pub fn structuring_sorts(&self) -> impl Iterator<Item = &str> {
        self.names.values().map(String::as_str)
    }

    pub fn is_structuring(&self, sort: &str) -> bool {
        self.gmwf.is_structuring(sort)
    }

    /// Global targets, in canonical order.
    pub fn targets(&self) -> &[Artifact] {
        &self.targets
    }

    /// Projection of each global target, index-aligned with [`targets`](Self::targets).
    pub fn projected_targets(&self) -> &[Artifact] {
        &self.projected
    }

    /// The local target artifacts, duplicates removed.
    pub fn local_targets(&self) -> Vec<Artifact> {
        let mut out: Vec<Artifact> = Vec::new();
        for t in &self.projected {
            if !out.contains(t) {
                out.push(t.clone());
            }
        }
        out
    }

    /// The actor's accreditation widened with the local structuring sorts.
    pub fn local_accreditation(&self, acc: &Accreditation) -> Accreditation {
        let mut out = acc.clone();
        for s in self.structuring_sorts() {
            if self.gmwf.sort(s).is_some() && !out.can_read(s) {
                out.read.push(s.to_string());
                out.write.push(s.to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{conforms, is_prefix};
    use crate::fixtures;
    use crate::grammar::Gmawfp;
    use crate::merge::with_precedence;

    fn local(actor: &str) -> (Gmawfp, LocalModel) {
        let m = fixtures::peer_review_augmented();
        let l = project_gmwf(&m.gmwf, &View::from(m.accreditation(actor).unwrap())).unwrap();
        (m, l)
    }

    fn rows(l: &LocalModel) -> Vec<String> {
        l.gmwf.productions.iter().map(|p| format!("{p}")).collect()
    }

    /// Local grammars per actor, as `id: lhs -> rhs`.
    const EXPECTED: [(&str, &[&str]); 4] = [
        (
            "EC",
            &[
                "P1: A_G -> A",
                "P2: A -> B ; D",
                "P3: A -> C ; D",
                "P4: C -> S#1 ; F",
                "P5: S#1 -> S#2 || S#3",
                "P6: S#2 -> H1 ; I1",
                "P7: S#3 -> H2 ; I2",
                "P8: B -> eps",
                "P9: D -> eps",
                "P10: F -> eps",
                "P11: H1 -> eps",
                "P12: I1 -> eps",
                "P13: H2 -> eps",
                "P14: I2 -> eps",
            ],
        ),
        (
            "AE",
            &[
                "P1: A_G -> A",
                "P2: A -> C",
                "P3: C -> E ; F",
                "P4: E -> S#1 || S#2",
                "P5: S#1 -> H1 ; I1",
                "P6: S#2 -> H2 ; I2",
                "P7: A -> eps",
                "P8: F -> eps",
                "P9: H1 -> eps",
                "P10: I1 -> eps",
                "P11: H2 -> eps",
                "P12: I2 -> eps",
            ],
        ),
        (
            "R1",
            &["P1: A_G -> C", "P2: C -> G1", "P3: G1 -> H1 ; I1", "P4: A_G -> eps", "P5: H1 -> eps", "P6: I1 -> eps"],
        ),
        (
            "R2",
            &["P1: A_G -> C", "P2: C -> G2", "P3: G2 -> H2 ; I2", "P4: A_G -> eps", "P5: H2 -> eps", "P6: I2 -> eps"],
        ),
    ];

    #[test]
    fn local_grammars() {
        for (actor, expected) in EXPECTED {
            let (_, l) = local(actor);
            assert_eq!(rows(&l), expected.to_vec(), "{actor}");
            assert!(l.gmwf.productions.iter().all(|p| p.rhs.len() > 1 || p.mode == Mode::Seq));
        }
    }

    #[test]
    fn local_targets_conform_to_local_grammar() {
        for actor in ["EC", "AE", "R1", "R2"] {
            let (_, l) = local(actor);
            assert_eq!(l.projected_targets().len(), 2);
            for t in l.projected_targets() {
                assert!(conforms(t, &l.gmwf), "{actor}");
            }
        }
    }

    #[test]
    fn identity_view_is_identity() {
        let m = fixtures::peer_review_augmented();
        let view = View::all(&m.gmwf);
        for t in m.gmwf.enumerate_target_artifacts().unwrap() {
            let p = project_artifact(&t, &view, &m.gmwf).unwrap();
            assert!(is_prefix(&p, &t) && is_prefix(&t, &p));
            assert_eq!(p.nodes().len(), t.nodes().len());
        }
        let l = project_gmwf(&m.gmwf, &view).unwrap();
        assert_eq!(l.gmwf.productions.len(), m.gmwf.productions.len());
        assert_eq!(l.structuring_sorts().count(), 0);
    }

    #[test]
    fn hidden_axiom_is_rejected() {
        let m = fixtures::peer_review_augmented();
        let err = project_gmwf(&m.gmwf, &View::new(["C"])).unwrap_err();
        assert_eq!(err, ProjectionError::HiddenAxiom("A_G".into()));
    }

    #[test]
    fn reject_branch_on_ae_keeps_a() {
        let (m, l) = local("AE");
        let targets = m.gmwf.enumerate_target_artifacts().unwrap();
        let p = l.project(&targets[0]).unwrap();
        assert_eq!(p.root.children.len(), 1);
        assert_eq!(p.root.children[0].sort, "A");
        assert!(p.root.children[0].children.is_empty());
        assert_eq!(p.root.children[0].production.as_deref(), Some("P7"));
    }

    fn shape(n: &Node) -> String {
        if n.children.is_empty() {
            return if n.is_bud() { format!("{}w", n.sort) } else { n.sort.clone() };
        }
        let sep = if n.mode == Mode::Par { "||" } else { ";" };
        let inner: Vec<String> = n.children.iter().map(shape).collect();
        format!("{}[{}]", n.sort, inner.join(sep))
    }

    #[test]
    fn accepted_submission_on_referee_and_editor() {
        let (m, r1) = local("R1");
        let accepted = &m.gmwf.enumerate_target_artifacts().unwrap()[1];
        assert_eq!(shape(&r1.project(accepted).unwrap().root), "A_G[C[G1[H1;I1]]]");
        let (_, ec) = local("EC");
        let p = ec.project(accepted).unwrap();
        assert_eq!(shape(&p.root), "A_G[A[C[S#1[S#2[H1;I1]||S#3[H2;I2]];F];D]]");
        let standalone = project_artifact(accepted, &ec.view, &m.gmwf).unwrap();
        assert_eq!(shape(&standalone.root), shape(&p.root));
        assert!(standalone.nodes().iter().all(|(_, n)| n.production.is_none()));
    }

    #[test]
    fn editor_sees_pending_reviews_as_groups() {
        let (m, ec) = local("EC");
        let g = &m.gmwf;
        let mut t = g.enumerate_target_artifacts().unwrap()[1].clone();
        let e: DeweyAddress = "1.1.1".parse().unwrap();
        for i in 1..=2 {
            let n = t.node_at_mut(&e.child(i)).unwrap();
            *n = Node::bud(n.sort.clone(), NodeState::LockedBud, Some("AE".into()));
        }
        *t.node_at_mut(&"1.1.2".parse().unwrap()).unwrap() = Node::bud("F", NodeState::LockedBud, None);
        *t.node_at_mut(&"1.2".parse().unwrap()).unwrap() = Node::bud("D", NodeState::LockedBud, None);
        let t = with_precedence(t);
        let p = ec.project(&t).unwrap();
        assert_eq!(shape(&p.root), "A_G[A[C[S#1[S#2[H1w;I1w]||S#3[H2w;I2w]];Fw];Dw]]");
        assert!(is_prefix(&p, &ec.projected_targets()[1]));
        let (_, r1) = local("R1");
        assert_eq!(shape(&r1.project(&t).unwrap().root), "A_G[C[G1w]]");
    }

    #[test]
    fn group_signatures() {
        let (m, _) = local("EC");
        let accepted = &m.gmwf.enumerate_target_artifacts().unwrap()[1];
        let projector = Projector::new(&m.gmwf, View::from(m.accreditation("EC").unwrap()));
        let sigs: Vec<String> =
            projector.signatures(accepted).unwrap().iter().map(|s| s.as_str().to_string()).collect();
        assert_eq!(sigs.len(), 3);
        assert!(sigs[0].starts_with("par("));
        assert_eq!(sigs[1], r#"seq("H1","I1")"#);
    }
}
