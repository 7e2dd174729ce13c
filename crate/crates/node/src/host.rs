//! One agent's cases, driven either by incoming messages or by decisions
//! posted from outside. Transport-agnostic: every call returns the messages
//! to send and the trace events it produced.

use std::collections::{BTreeMap, HashMap};

use choreo_core::{
    AgentModel, AgentState, Artifact, Decision, DecisionProvider, DeweyAddress, EngineError, Message, Outgoing, Phase,
    Production, TraceEvent,
};
use serde::Serialize;
use thiserror::Error;

use crate::tcp::Dedup;

#[derive(Debug, Error)]
pub enum HostError {
    #[error("unknown case {0}")]
    UnknownCase(String),
    #[error("bud at {0} is not offered")]
    Stale(DeweyAddress),
    #[error("message for {0} delivered to the wrong agent")]
    Misrouted(String),
    #[error(transparent)]
    Engine(EngineError),
}

impl From<EngineError> for HostError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NotOffered(addr) => HostError::Stale(addr),
            other => HostError::Engine(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub phase: Phase,
    pub pending_task_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudView {
    pub address: DeweyAddress,
    pub sort: String,
    pub description: String,
}

/// What the agent's human sees of a case.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Workspace {
    pub case_id: String,
    pub phase: Option<Phase>,
    pub partial_replica: Option<Artifact>,
    pub unlocked_writable_buds: Vec<BudView>,
    pub productions_by_sort: BTreeMap<String, Vec<Production>>,
}

/// Messages to send and trace events produced by one call.
#[derive(Debug, Default)]
pub struct Effects {
    pub messages: Vec<Message>,
    pub events: Vec<TraceEvent>,
}

pub struct Host {
    model: AgentModel,
    cases: BTreeMap<String, AgentState>,
    seqs: HashMap<(String, String), u64>,
    dedup: Dedup,
    provider: Option<Box<dyn DecisionProvider + Send>>,
}

impl Host {
    /// Decisions come from [`execute`](Self::execute) calls.
    pub fn new(model: AgentModel) -> Host {
        Host { model, cases: BTreeMap::new(), seqs: HashMap::new(), dedup: Dedup::default(), provider: None }
    }

    /// Decisions come from `provider`; nothing waits for a human.
    pub fn with_provider(model: AgentModel, provider: Box<dyn DecisionProvider + Send>) -> Host {
        Host { provider: Some(provider), ..Host::new(model) }
    }

    pub fn agent(&self) -> &str {
        &self.model.agent
    }

    pub fn model(&self) -> &AgentModel {
        &self.model
    }

    pub fn case(&self, case_id: &str) -> Option<&AgentState> {
        self.cases.get(case_id)
    }

    pub fn cases(&self) -> Vec<CaseSummary> {
        self.cases
            .values()
            .map(|st| CaseSummary {
                case_id: st.case_id.clone(),
                phase: st.phase,
                pending_task_count: self.model.offered(st).len(),
            })
            .collect()
    }

    /// An unknown case yields an empty workspace.
    pub fn workspace(&self, case_id: &str) -> Workspace {
        let st = self.cases.get(case_id);
        let offered = st.map(|st| self.model.offered(st)).unwrap_or_default();
        let mut productions_by_sort = BTreeMap::new();
        for b in &offered {
            productions_by_sort.entry(b.sort.clone()).or_insert_with(|| b.productions.clone());
        }
        Workspace {
            case_id: case_id.to_string(),
            phase: st.map(|st| st.phase),
            partial_replica: st.and_then(|st| st.t_partial.clone()),
            unlocked_writable_buds: offered
                .into_iter()
                .map(|b| BudView { address: b.address, sort: b.sort, description: b.description })
                .collect(),
            productions_by_sort,
        }
    }

    /// Opens a case on the initiator.
    pub fn start_case(&mut self, case_id: &str) -> Result<Effects, HostError> {
        if self.cases.contains_key(case_id) {
            return Err(EngineError::CaseStarted(case_id.to_string()).into());
        }
        let mut st = AgentState::new(case_id);
        self.model.start_case(&mut st)?;
        self.cases.insert(case_id.to_string(), st);
        self.turn(case_id, |model, st| model.prepare(st))
    }

    /// Handles a delivered message; repeats are ignored.
    pub fn receive(&mut self, msg: Message) -> Result<Effects, HostError> {
        if msg.recipient != self.model.agent {
            return Err(HostError::Misrouted(msg.recipient));
        }
        if !self.dedup.admit(&msg) {
            return Ok(Effects::default());
        }
        let st = self.cases.entry(msg.case_id.clone()).or_insert_with(|| AgentState::new(&msg.case_id));
        st.receive(msg.kind, &msg.sender, msg.artifact);
        self.turn(&msg.case_id, |model, st| model.prepare(st))
    }

    /// Applies one decision on the local replica.
    pub fn execute(&mut self, case_id: &str, decision: &Decision) -> Result<Effects, HostError> {
        if !self.cases.contains_key(case_id) {
            return Err(HostError::UnknownCase(case_id.to_string()));
        }
        self.turn(case_id, |model, st| model.apply(st, decision))
    }

    /// Runs `step`, lets the provider act if there is one, and closes the
    /// turn once nothing is left to decide.
    fn turn(
        &mut self,
        case_id: &str,
        step: impl FnOnce(&AgentModel, &mut AgentState) -> Result<(), EngineError>,
    ) -> Result<Effects, HostError> {
        let st = self.cases.get_mut(case_id).ok_or_else(|| HostError::UnknownCase(case_id.to_string()))?;
        let mark = st.trace.len();
        step(&self.model, st)?;
        if let Some(p) = self.provider.as_mut() {
            self.model.execute(st, p.as_mut())?;
        }
        let mut outgoing = Vec::new();
        if self.model.offered(st).is_empty() {
            self.model.protocol_expand_prune(st)?;
            outgoing = self.model.protocol_diffuse(st)?;
        }
        let events = st.trace[mark..].to_vec();
        let messages = outgoing.into_iter().map(|o| self.envelope(case_id, o)).collect();
        Ok(Effects { messages, events })
    }

    fn envelope(&mut self, case_id: &str, o: Outgoing) -> Message {
        let seq = self.seqs.entry((o.recipient.clone(), case_id.to_string())).or_insert(0);
        *seq += 1;
        Message {
            kind: o.kind,
            case_id: case_id.to_string(),
            sender: self.model.agent.clone(),
            recipient: o.recipient,
            artifact: o.artifact,
            seq: *seq,
        }
    }
}
