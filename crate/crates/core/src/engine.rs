//! One agent's side of a case: merging incoming replicas, building the local
//! replica, executing tasks, folding the work back into the global replica
//! and deciding what to send.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{create_case, develop, Artifact, ArtifactError, DeweyAddress, NodeState};
use crate::grammar::{validate, Accreditation, Gmawfp, GrammarError, Production, Violation};
use crate::merge::{
    find_merge_guide, merge_artifacts, prune_upstairs, replica_bud_states, three_way_expand, MergeError,
};
use crate::projection::{project_gmwf, LocalModel, ProjectionError, View};
use crate::transport::MessageKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("invalid model: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<Violation>),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("{0} is not the initiator")]
    NotInitiator(String),
    #[error("case {0} is already running")]
    CaseStarted(String),
    #[error("case {0} has not reached this agent yet")]
    NoCase(String),
    #[error("no offered bud at {0}")]
    NotOffered(DeweyAddress),
    #[error("production {production} does not develop {sort}")]
    WrongProduction { production: String, sort: String },
    #[error("no unique writer for {0}")]
    NoWriter(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Waiting,
    Terminated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Start,
    Merge,
    Replicate,
    Execute,
    ExpandPrune,
    Diffuse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub case: String,
    pub agent: String,
    pub step: Step,
    pub detail: String,
}

/// A bud the agent may develop now.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OfferedBud {
    pub address: DeweyAddress,
    pub sort: String,
    pub description: String,
    pub productions: Vec<Production>,
}

/// Develop the bud at `address` with the local production `production_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub address: DeweyAddress,
    pub production_id: String,
    #[serde(default)]
    pub status: String,
}

/// Chooses what an agent does with its offered buds; `None` ends the turn.
pub trait DecisionProvider {
    fn decide(&mut self, agent: &str, offered: &[OfferedBud], replica: &Artifact) -> Option<Decision>;
}

/// A message the agent wants delivered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub kind: MessageKind,
    pub recipient: String,
    pub artifact: Artifact,
}

/// Everything an agent knows about one case.
#[derive(Clone, Debug, Serialize)]
pub struct AgentState {
    pub case_id: String,
    pub t_global: Option<Artifact>,
    pub t_partial: Option<Artifact>,
    #[serde(skip)]
    pub req_queue: VecDeque<(String, Artifact)>,
    #[serde(skip)]
    pub ans_queue: VecDeque<(String, Artifact)>,
    pub return_list: Vec<String>,
    pub requested: BTreeSet<DeweyAddress>,
    pub phase: Phase,
    pub trace: Vec<TraceEvent>,
    pub last_closed: Vec<DeweyAddress>,
}

impl AgentState {
    pub fn new(case_id: impl Into<String>) -> Self {
        AgentState {
            case_id: case_id.into(),
            t_global: None,
            t_partial: None,
            req_queue: VecDeque::new(),
            ans_queue: VecDeque::new(),
            return_list: Vec::new(),
            requested: BTreeSet::new(),
            phase: Phase::Idle,
            trace: Vec::new(),
            last_closed: Vec::new(),
        }
    }

    pub fn receive(&mut self, kind: MessageKind, sender: &str, artifact: Artifact) {
        match kind {
            MessageKind::Request => self.req_queue.push_back((sender.to_string(), artifact)),
            MessageKind::Answer => self.ans_queue.push_back((sender.to_string(), artifact)),
        }
    }
}

/// An agent's static configuration: the model, its view and local grammar.
#[derive(Clone, Debug)]
pub struct AgentModel {
    pub agent: String,
    pub model: Gmawfp,
    pub local: LocalModel,
    pub accreditation: Accreditation,
    pub local_accreditation: Accreditation,
    pub initiator: String,
}

const MAX_REJECTIONS: usize = 16;

impl AgentModel {
    /// Augments and validates `model`, then derives `agent`'s local grammar.
    pub fn configure(agent: &str, model: &Gmawfp) -> Result<Self, EngineError> {
        let augmented = model.augmented()?;
        let violations = validate(&augmented);
        if !violations.is_empty() {
            return Err(EngineError::InvalidModel(violations));
        }
        AgentModel::from_augmented(agent, &augmented)
    }

    /// Like [`configure`](Self::configure) for a model already augmented and validated.
    pub fn from_augmented(agent: &str, augmented: &Gmawfp) -> Result<Self, EngineError> {
        let accreditation =
            augmented.accreditation(agent).cloned().ok_or_else(|| EngineError::UnknownActor(agent.to_string()))?;
        let local = project_gmwf(&augmented.gmwf, &View::from(&accreditation))?;
        let local_accreditation = local.local_accreditation(&accreditation);
        Ok(AgentModel {
            agent: agent.to_string(),
            initiator: augmented.resolve_initiator()?,
            model: augmented.clone(),
            local,
            accreditation,
            local_accreditation,
        })
    }

    fn trace(&self, st: &mut AgentState, step: Step, detail: impl Into<String>) {
        st.trace.push(TraceEvent { case: st.case_id.clone(), agent: self.agent.clone(), step, detail: detail.into() });
    }

    /// Opens the case on the initiator; follow with [`react`](Self::react).
    pub fn start_case(&self, st: &mut AgentState) -> Result<(), EngineError> {
        if self.agent != self.initiator {
            return Err(EngineError::NotInitiator(self.agent.clone()));
        }
        if st.t_global.is_some() {
            return Err(EngineError::CaseStarted(st.case_id.clone()));
        }
        let mut t = create_case(&self.model.gmwf)?;
        t.root.creator = Some(self.agent.clone());
        st.t_global = Some(t);
        self.trace(st, Step::Start, "case created");
        Ok(())
    }

    /// A full turn: merge, replicate, execute with `provider`, expand-prune, diffuse.
    pub fn react(
        &self,
        st: &mut AgentState,
        provider: &mut dyn DecisionProvider,
    ) -> Result<Vec<Outgoing>, EngineError> {
        self.prepare(st)?;
        self.execute(st, provider)?;
        self.protocol_expand_prune(st)?;
        self.protocol_diffuse(st)
    }

    /// Merge then replicate: the part of a turn before any decision.
    pub fn prepare(&self, st: &mut AgentState) -> Result<(), EngineError> {
        self.protocol_merge(st)?;
        if st.t_global.is_none() {
            return Err(EngineError::NoCase(st.case_id.clone()));
        }
        self.protocol_replicate(st)
    }

    pub fn protocol_merge(&self, st: &mut AgentState) -> Result<(), EngineError> {
        let incoming: Vec<(String, Artifact, bool)> = st
            .req_queue
            .drain(..)
            .map(|(s, a)| (s, a, true))
            .chain(st.ans_queue.drain(..).map(|(s, a)| (s, a, false)))
            .collect();
        for (sender, artifact, is_request) in incoming {
            st.t_global = Some(match &st.t_global {
                None => merge_artifacts(&artifact, &artifact)?,
                Some(t) => merge_artifacts(t, &artifact)?,
            });
            if is_request && !st.return_list.contains(&sender) {
                st.return_list.push(sender.clone());
            }
            let kind = if is_request { "request" } else { "answer" };
            self.trace(st, Step::Merge, format!("{kind} from {sender}"));
        }
        Ok(())
    }

    pub fn protocol_replicate(&self, st: &mut AgentState) -> Result<(), EngineError> {
        let t_global = st.t_global.as_ref().ok_or_else(|| EngineError::NoCase(st.case_id.clone()))?;
        let projected = self.local.project(t_global)?;
        let partial = match &st.t_partial {
            Some(old) => merge_artifacts(&projected, old)?,
            None => projected,
        };
        st.t_partial = Some(self.settle(t_global, partial)?);
        let buds = st.t_partial.as_ref().map_or(0, |t| t.buds().len());
        self.trace(st, Step::Replicate, format!("{buds} open buds in replica"));
        Ok(())
    }

    /// Auto-develops structuring buds that admit a single production, then
    /// recomputes lock states.
    fn settle(&self, t_global: &Artifact, mut partial: Artifact) -> Result<Artifact, EngineError> {
        loop {
            let next = partial.buds().into_iter().find_map(|b| {
                if !self.local.is_structuring(&b.sort) || !self.local_accreditation.can_write(&b.sort) {
                    return None;
                }
                let mut ps = self.local.gmwf.productions_of(&b.sort);
                match (ps.next(), ps.next()) {
                    (Some(p), None) => Some((b.address, p.clone())),
                    _ => None,
                }
            });
            let Some((addr, p)) = next else { break };
            develop(partial.node_at_mut(&addr)?, &addr, &p, "", &self.agent)?;
        }
        Ok(replica_bud_states(t_global, &partial, &self.local, &self.local_accreditation, &self.agent)?)
    }

    /// Unlocked buds of the local replica this agent may develop.
    pub fn offered(&self, st: &AgentState) -> Vec<OfferedBud> {
        let Some(t) = &st.t_partial else { return Vec::new() };
        t.unlocked_buds()
            .into_iter()
            .filter(|b| !self.local.is_structuring(&b.sort) && self.local_accreditation.can_write(&b.sort))
            .map(|b| OfferedBud {
                description: self.model.gmwf.sort(&b.sort).and_then(|s| s.description.clone()).unwrap_or_default(),
                productions: self.local.gmwf.productions_of(&b.sort).cloned().collect(),
                address: b.address,
                sort: b.sort,
            })
            .collect()
    }

    /// Develops an offered bud of the local replica.
    pub fn apply(&self, st: &mut AgentState, decision: &Decision) -> Result<(), EngineError> {
        let offered = self.offered(st);
        let bud = offered
            .iter()
            .find(|b| b.address == decision.address)
            .ok_or_else(|| EngineError::NotOffered(decision.address.clone()))?;
        let p = bud.productions.iter().find(|p| p.id == decision.production_id).ok_or_else(|| {
            EngineError::WrongProduction { production: decision.production_id.clone(), sort: bud.sort.clone() }
        })?;
        let t_global = st.t_global.as_ref().ok_or_else(|| EngineError::NoCase(st.case_id.clone()))?;
        let partial = st.t_partial.as_ref().ok_or_else(|| EngineError::NoCase(st.case_id.clone()))?;
        let extended = partial.extend_bud(&decision.address, p, &decision.status, &self.agent)?;
        st.t_partial = Some(self.settle(t_global, extended)?);
        let detail = format!("{} {} at {}", bud.sort, p.id, decision.address);
        self.trace(st, Step::Execute, detail);
        Ok(())
    }

    /// Asks `provider` for decisions until it declines; rejected decisions are re-prompted.
    pub fn execute(&self, st: &mut AgentState, provider: &mut dyn DecisionProvider) -> Result<(), EngineError> {
        let mut rejections = 0;
        loop {
            let offered = self.offered(st);
            if offered.is_empty() {
                return Ok(());
            }
            let Some(partial) = st.t_partial.clone() else { return Ok(()) };
            let Some(decision) = provider.decide(&self.agent, &offered, &partial) else { return Ok(()) };
            if let Err(e) = self.apply(st, &decision) {
                self.trace(st, Step::Execute, format!("rejected: {e}"));
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Ok(());
                }
            }
        }
    }

    pub fn protocol_expand_prune(&self, st: &mut AgentState) -> Result<(), EngineError> {
        let (Some(t), Some(partial)) = (&st.t_global, &st.t_partial) else {
            return Err(EngineError::NoCase(st.case_id.clone()));
        };
        let guide = find_merge_guide(t, partial, &self.local)?;
        let expanded = three_way_expand(t, partial, &guide, &self.local, &self.agent)?;
        let pruned = prune_upstairs(&expanded, t);
        let before: BTreeSet<DeweyAddress> =
            t.nodes().into_iter().filter(|(_, n)| n.state == NodeState::Closed).map(|(a, _)| a).collect();
        st.last_closed = pruned
            .nodes()
            .into_iter()
            .filter(|(a, n)| n.state == NodeState::Closed && !before.contains(a))
            .map(|(a, _)| a)
            .collect();
        st.t_global = Some(pruned);
        let detail = format!("{} nodes closed", st.last_closed.len());
        self.trace(st, Step::ExpandPrune, detail);
        Ok(())
    }

    /// Requests work on the buds this agent created for others; answers the
    /// requesters once nothing it asked for and nothing it may do is pending.
    pub fn protocol_diffuse(&self, st: &mut AgentState) -> Result<Vec<Outgoing>, EngineError> {
        let t = st.t_global.clone().ok_or_else(|| EngineError::NoCase(st.case_id.clone()))?;
        let required: Vec<_> = t
            .unlocked_buds()
            .into_iter()
            .filter(|b| b.creator.as_deref() == Some(self.agent.as_str()) && self.accreditation.can_execute(&b.sort))
            .collect();
        let fresh: Vec<_> = required.iter().filter(|b| !st.requested.contains(&b.address)).collect();
        let mut out = Vec::new();
        if !fresh.is_empty() {
            let mut writers: Vec<String> = Vec::new();
            for b in &fresh {
                let w = self.model.writer_of(&b.sort).ok_or_else(|| EngineError::NoWriter(b.sort.clone()))?;
                if !writers.iter().any(|x| x == w) {
                    writers.push(w.to_string());
                }
                st.requested.insert(b.address.clone());
            }
            for w in writers {
                self.trace(st, Step::Diffuse, format!("request to {w}"));
                out.push(Outgoing { kind: MessageKind::Request, recipient: w, artifact: t.clone() });
            }
        }
        let pending = t.buds().iter().any(|b| st.requested.contains(&b.address));
        st.phase = if pending || !out.is_empty() {
            Phase::Waiting
        } else if !st.return_list.is_empty() && self.offered(st).is_empty() {
            for r in std::mem::take(&mut st.return_list) {
                self.trace(st, Step::Diffuse, format!("answer to {r}"));
                out.push(Outgoing { kind: MessageKind::Answer, recipient: r, artifact: t.clone() });
            }
            if t.is_closed() {
                Phase::Terminated
            } else {
                Phase::Idle
            }
        } else if t.is_closed() {
            Phase::Terminated
        } else {
            Phase::Idle
        };
        if st.phase == Phase::Terminated {
            self.trace(st, Step::Diffuse, "terminated");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::script::ScriptedProvider;

    fn models() -> Vec<AgentModel> {
        let aug = fixtures::peer_review_augmented();
        ["EC", "AE", "R1", "R2"].iter().map(|a| AgentModel::from_augmented(a, &aug).unwrap()).collect()
    }

    /// Hand-delivers messages in send order.
    fn run(script: &str) -> (Vec<(String, String)>, Vec<AgentState>) {
        let models = models();
        let mut states: Vec<AgentState> = models.iter().map(|_| AgentState::new("c")).collect();
        let mut provider = ScriptedProvider::from_json(script).unwrap();
        models[0].start_case(&mut states[0]).unwrap();
        let mut queue: VecDeque<(String, Outgoing)> =
            models[0].react(&mut states[0], &mut provider).unwrap().into_iter().map(|o| ("EC".into(), o)).collect();
        let mut log = Vec::new();
        while let Some((from, msg)) = queue.pop_front() {
            log.push((from.clone(), msg.recipient.clone()));
            let i = models.iter().position(|m| m.agent == msg.recipient).unwrap();
            states[i].receive(msg.kind, &from, msg.artifact);
            let out = models[i].react(&mut states[i], &mut provider).unwrap();
            queue.extend(out.into_iter().map(|o| (models[i].agent.clone(), o)));
        }
        (log, states)
    }

    #[test]
    fn accept_run_exchanges_six_messages() {
        let (log, states) = run(fixtures::ACCEPT_SCRIPT_JSON);
        let pairs: Vec<String> = log.iter().map(|(a, b)| format!("{a}>{b}")).collect();
        assert_eq!(pairs, ["EC>AE", "AE>R1", "AE>R2", "R1>AE", "R2>AE", "AE>EC"]);
        assert_eq!(states[0].phase, Phase::Terminated);
        let final_ec = states[0].t_global.as_ref().unwrap();
        let accepted = &fixtures::peer_review_augmented().gmwf.enumerate_target_artifacts().unwrap()[1];
        assert_eq!(final_ec.stripped(), accepted.stripped());
        assert_eq!(final_ec.node_at(&"1".parse().unwrap()).unwrap().status, "pre-validated, sent to review");
    }

    #[test]
    fn reject_run_is_local() {
        let (log, states) = run(fixtures::REJECT_SCRIPT_JSON);
        assert!(log.is_empty());
        assert_eq!(states[0].phase, Phase::Terminated);
        let rejected = &fixtures::peer_review_augmented().gmwf.enumerate_target_artifacts().unwrap()[0];
        assert_eq!(states[0].t_global.as_ref().unwrap().stripped(), rejected.stripped());
    }

    #[test]
    fn only_the_initiator_starts() {
        let models = models();
        let mut st = AgentState::new("c");
        assert_eq!(models[1].start_case(&mut st), Err(EngineError::NotInitiator("AE".into())));
        models[0].start_case(&mut st).unwrap();
        assert!(matches!(models[0].start_case(&mut st), Err(EngineError::CaseStarted(_))));
    }

    #[test]
    fn editor_is_offered_the_root_task() {
        let models = models();
        let mut st = AgentState::new("c");
        models[0].start_case(&mut st).unwrap();
        models[0].prepare(&mut st).unwrap();
        let offered = models[0].offered(&st);
        assert_eq!(offered.len(), 1);
        assert_eq!(offered[0].sort, "A");
        assert_eq!(offered[0].address.to_string(), "1");
        let ids: Vec<&str> = offered[0].productions.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["P2", "P3"]);
        let stale = Decision { address: "1.1".parse().unwrap(), production_id: "P2".into(), status: String::new() };
        assert!(matches!(models[0].apply(&mut st, &stale), Err(EngineError::NotOffered(_))));
        let wrong = Decision { address: "1".parse().unwrap(), production_id: "P9".into(), status: String::new() };
        assert!(matches!(models[0].apply(&mut st, &wrong), Err(EngineError::WrongProduction { .. })));
    }

    #[test]
    fn referees_see_only_their_branch() {
        let (_, states) = run(fixtures::ACCEPT_SCRIPT_JSON);
        let r1 = states[2].t_partial.as_ref().unwrap();
        let sorts: BTreeSet<&str> = r1.nodes().into_iter().map(|(_, n)| n.sort.as_str()).collect();
        assert_eq!(sorts, BTreeSet::from(["A_G", "C", "G1", "H1", "I1"]));
    }
}
