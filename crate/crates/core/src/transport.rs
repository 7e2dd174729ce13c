//! Messages between agents and an in-process, deterministic simulator that
//! delivers them under a chosen scheduling policy while checking invariants.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{conforms, Artifact, DeweyAddress};
use crate::engine::{AgentModel, AgentState, DecisionProvider, EngineError, Outgoing, Phase, TraceEvent};
use crate::grammar::{validate, Gmawfp, GrammarError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Request,
    Answer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub case_id: String,
    pub sender: String,
    pub recipient: String,
    pub artifact: Artifact,
    /// Position on the sender to recipient channel, from 1.
    pub seq: u64,
}

/// Which pending message is delivered next. Every policy keeps each
/// sender-recipient channel first-in first-out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Global send order.
    Fifo,
    /// A seeded random channel at each step.
    Random(u64),
    /// The listed channels in order, then send order.
    Script(Vec<(String, String)>),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("step budget of {budget} exhausted with {} messages pending: {}", pending.len(), pending.join(", "))]
    Budget { budget: usize, pending: Vec<String> },
    #[error("scheduled channel {0} -> {1} has no pending message")]
    ScriptMismatch(String, String),
}

/// Invariant breaches observed during a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MonitorReport {
    pub conformity: Vec<String>,
    pub single_writer: Vec<String>,
    pub read_leaks: Vec<String>,
}

impl MonitorReport {
    pub fn is_clean(&self) -> bool {
        self.conformity.is_empty() && self.single_writer.is_empty() && self.read_leaks.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub case_id: String,
    pub messages: Vec<Message>,
    pub trace: Vec<TraceEvent>,
    /// Each agent's global replica at the end.
    pub finals: BTreeMap<String, Artifact>,
    /// Each agent's local replica at the end.
    pub partials: BTreeMap<String, Artifact>,
    pub phases: BTreeMap<String, Phase>,
    /// The initiator reached termination.
    pub terminated: bool,
    pub monitor: MonitorReport,
}

impl RunReport {
    /// `sender>recipient` per delivered message.
    pub fn channels(&self) -> Vec<String> {
        self.messages.iter().map(|m| format!("{}>{}", m.sender, m.recipient)).collect()
    }
}

pub struct Simulator {
    agents: Vec<AgentModel>,
    initiator: String,
    policy: Policy,
    budget: usize,
}

struct Monitor {
    report: MonitorReport,
    closers: BTreeMap<DeweyAddress, String>,
}

impl Monitor {
    fn check(&mut self, m: &AgentModel, st: &AgentState) {
        let who = &m.agent;
        if let Some(t) = &st.t_global {
            if !conforms(t, &m.model.gmwf) {
                self.report.conformity.push(format!("{who}: global replica"));
            }
        }
        if let Some(t) = &st.t_partial {
            if !conforms(t, &m.local.gmwf) {
                self.report.conformity.push(format!("{who}: local replica"));
            }
            for (addr, n) in t.nodes() {
                if !m.accreditation.can_read(&n.sort) && !m.local.is_structuring(&n.sort) {
                    self.report.read_leaks.push(format!("{who}: {} at {addr}", n.sort));
                }
            }
        }
        let Some(t) = &st.t_global else { return };
        for addr in &st.last_closed {
            let Ok(n) = t.node_at(addr) else { continue };
            if !m.accreditation.can_write(&n.sort) {
                self.report.single_writer.push(format!("{who} closed {} at {addr} without write access", n.sort));
            }
            match self.closers.get(addr) {
                Some(first) if first != who => {
                    self.report.single_writer.push(format!("{addr} closed by {first} and {who}"));
                }
                _ => {
                    self.closers.insert(addr.clone(), who.clone());
                }
            }
        }
    }
}

impl Simulator {
    /// All actors of `model` (augmented and validated here), one process each.
    pub fn new(model: &Gmawfp, policy: Policy) -> Result<Self, SimError> {
        let augmented = model.augmented()?;
        let violations = validate(&augmented);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(SimError::InvalidModel(text.join("; ")));
        }
        let agents = augmented
            .accreditations
            .iter()
            .map(|a| AgentModel::from_augmented(&a.actor, &augmented))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Simulator { agents, initiator: augmented.resolve_initiator()?, policy, budget: 10_000 })
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn agents(&self) -> &[AgentModel] {
        &self.agents
    }

    /// Runs one case to quiescence.
    pub fn run(&self, case_id: &str, provider: &mut dyn DecisionProvider) -> Result<RunReport, SimError> {
        let mut states: BTreeMap<String, AgentState> =
            self.agents.iter().map(|a| (a.agent.clone(), AgentState::new(case_id))).collect();
        let mut monitor = Monitor { report: MonitorReport::default(), closers: BTreeMap::new() };
        let mut channels: BTreeMap<(String, String), VecDeque<(u64, Message)>> = BTreeMap::new();
        let mut seqs: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut sent = 0u64;
        let mut delivered = Vec::new();
        let mut rng = match self.policy {
            Policy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let mut script = match &self.policy {
            Policy::Script(s) => s.iter().cloned().collect(),
            _ => VecDeque::new(),
        };

        let mut post = |from: &str, out: Vec<Outgoing>, channels: &mut BTreeMap<_, VecDeque<_>>| {
            for o in out {
                let key = (from.to_string(), o.recipient.clone());
                let seq = seqs.entry(key.clone()).or_insert(0);
                *seq += 1;
                sent += 1;
                let msg = Message {
                    kind: o.kind,
                    case_id: case_id.to_string(),
                    sender: from.to_string(),
                    recipient: o.recipient,
                    artifact: o.artifact,
                    seq: *seq,
                };
                channels.entry(key).or_default().push_back((sent, msg));
            }
        };

        let init = self.agent(&self.initiator)?;
        let st = states.get_mut(&self.initiator).ok_or_else(|| EngineError::UnknownActor(self.initiator.clone()))?;
        init.start_case(st)?;
        let out = init.react(st, provider)?;
        monitor.check(init, st);
        post(&self.initiator, out, &mut channels);

        let mut steps = 0;
        loop {
            let ready: Vec<(String, String)> =
                channels.iter().filter(|(_, q)| !q.is_empty()).map(|(k, _)| k.clone()).collect();
            if ready.is_empty() {
                break;
            }
            if steps >= self.budget {
                let pending = channels
                    .values()
                    .flatten()
                    .map(|(_, m)| format!("{:?} {}>{} #{}", m.kind, m.sender, m.recipient, m.seq))
                    .collect();
                return Err(SimError::Budget { budget: self.budget, pending });
            }
            steps += 1;
            let key = if let Some((s, r)) = script.pop_front() {
                if !ready.contains(&(s.clone(), r.clone())) {
                    return Err(SimError::ScriptMismatch(s, r));
                }
                (s, r)
            } else if let Some(rng) = rng.as_mut() {
                ready[rng.random_range(0..ready.len())].clone()
            } else {
                ready
                    .iter()
                    .min_by_key(|k| channels[*k].front().map_or(u64::MAX, |(n, _)| *n))
                    .cloned()
                    .unwrap_or_else(|| ready[0].clone())
            };
            let Some((_, msg)) = channels.get_mut(&key).and_then(VecDeque::pop_front) else { continue };
            let agent = self.agent(&msg.recipient)?;
            let st = states.get_mut(&msg.recipient).ok_or_else(|| EngineError::UnknownActor(msg.recipient.clone()))?;
            st.receive(msg.kind, &msg.sender, msg.artifact.clone());
            let out = agent.react(st, provider)?;
            monitor.check(agent, st);
            let recipient = msg.recipient.clone();
            delivered.push(msg);
            post(&recipient, out, &mut channels);
        }

        let mut trace = Vec::new();
        let mut finals = BTreeMap::new();
        let mut partials = BTreeMap::new();
        let mut phases = BTreeMap::new();
        for (agent, st) in states {
            trace.extend(st.trace);
            if let Some(t) = st.t_global {
                finals.insert(agent.clone(), t);
            }
            if let Some(t) = st.t_partial {
                partials.insert(agent.clone(), t);
            }
            phases.insert(agent, st.phase);
        }
        Ok(RunReport {
            case_id: case_id.to_string(),
            terminated: phases.get(&self.initiator) == Some(&Phase::Terminated),
            messages: delivered,
            trace,
            finals,
            partials,
            phases,
            monitor: monitor.report,
        })
    }

    fn agent(&self, id: &str) -> Result<&AgentModel, SimError> {
        self.agents.iter().find(|a| a.agent == id).ok_or_else(|| EngineError::UnknownActor(id.to_string()).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::script::ScriptedProvider;

    fn run(policy: Policy, script: &str) -> RunReport {
        let sim = Simulator::new(&fixtures::peer_review(), policy).unwrap();
        sim.run("case-1", &mut ScriptedProvider::from_json(script).unwrap()).unwrap()
    }

    #[test]
    fn fifo_accept_run() {
        let report = run(Policy::Fifo, fixtures::ACCEPT_SCRIPT_JSON);
        assert_eq!(report.channels(), ["EC>AE", "AE>R1", "AE>R2", "R1>AE", "R2>AE", "AE>EC"]);
        assert!(report.terminated);
        assert!(report.monitor.is_clean(), "{:?}", report.monitor);
        assert!(report.messages.iter().all(|m| m.seq == 1));
    }

    #[test]
    fn scripted_order_delivers_the_second_referee_first() {
        let order = [("EC", "AE"), ("AE", "R2"), ("R2", "AE"), ("AE", "R1"), ("R1", "AE"), ("AE", "EC")];
        let policy = Policy::Script(order.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
        let report = run(policy, fixtures::ACCEPT_SCRIPT_JSON);
        assert_eq!(report.channels(), ["EC>AE", "AE>R2", "R2>AE", "AE>R1", "R1>AE", "AE>EC"]);
        assert!(report.terminated);
        let fifo = run(Policy::Fifo, fixtures::ACCEPT_SCRIPT_JSON);
        assert_eq!(report.finals["EC"].canonical_json(), fifo.finals["EC"].canonical_json());
    }

    #[test]
    fn script_mismatch_is_reported() {
        let sim = Simulator::new(&fixtures::peer_review(), Policy::Script(vec![("AE".into(), "EC".into())])).unwrap();
        let err = sim.run("c", &mut ScriptedProvider::from_json(fixtures::ACCEPT_SCRIPT_JSON).unwrap()).unwrap_err();
        assert!(matches!(err, SimError::ScriptMismatch(..)));
    }

    #[test]
    fn exhausted_budget_lists_pending_messages() {
        let sim = Simulator::new(&fixtures::peer_review(), Policy::Fifo).unwrap().with_budget(2);
        let err = sim.run("c", &mut ScriptedProvider::from_json(fixtures::ACCEPT_SCRIPT_JSON).unwrap()).unwrap_err();
        match err {
            SimError::Budget { pending, .. } => assert!(!pending.is_empty()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unfinished_script_leaves_the_case_open() {
        let report = run(Policy::Fifo, r#"{"EC":[{"sort":"A","production":"P3"}]}"#);
        assert_eq!(report.channels(), ["EC>AE"]);
        assert!(!report.terminated);
        assert_eq!(report.phases["EC"], Phase::Waiting);
    }
}
