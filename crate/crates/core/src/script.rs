//! Scripted decisions: per agent, the tasks to perform in order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{Artifact, DeweyAddress};
use crate::engine::{Decision, DecisionProvider, OfferedBud};

/// One scripted step: develop a bud of `sort` with the local production `production`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub sort: String,
    pub production: String,
    #[serde(default)]
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<DeweyAddress>,
}

/// Agent id to its scripted steps.
pub type Script = BTreeMap<String, Vec<ScriptEntry>>;

#[derive(Debug, Error)]
#[error("invalid script: {0}")]
pub struct ScriptError(String);

/// Plays each agent's entries in order, each at most once. An entry is used
/// as soon as a matching bud is offered; earlier unmatched entries wait.
#[derive(Clone, Debug, Default)]
pub struct ScriptedProvider {
    remaining: Script,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        ScriptedProvider { remaining: script }
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        serde_json::from_str(text).map(ScriptedProvider::new).map_err(|e| ScriptError(e.to_string()))
    }

    /// Entries not played yet.
    pub fn remaining(&self) -> &Script {
        &self.remaining
    }
}

impl DecisionProvider for ScriptedProvider {
    fn decide(&mut self, agent: &str, offered: &[OfferedBud], _replica: &Artifact) -> Option<Decision> {
        let entries = self.remaining.get_mut(agent)?;
        let (index, address) = entries.iter().enumerate().find_map(|(i, e)| {
            offered
                .iter()
                .find(|b| b.sort == e.sort && e.address.as_ref().is_none_or(|a| *a == b.address))
                .map(|b| (i, b.address.clone()))
        })?;
        let entry = entries.remove(index);
        Some(Decision { address, production_id: entry.production, status: entry.status })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn bud(addr: &str, sort: &str) -> OfferedBud {
        OfferedBud {
            address: addr.parse().unwrap(),
            sort: sort.into(),
            description: String::new(),
            productions: vec![],
        }
    }

    #[test]
    fn entries_are_matched_by_sort_and_consumed() {
        let mut p = ScriptedProvider::from_json(fixtures::ACCEPT_SCRIPT_JSON).unwrap();
        let t = Artifact::from_json(r#"{"sort":"A","state":"unlocked_bud"}"#).unwrap();
        assert_eq!(p.decide("EC", &[bud("1.2", "D")], &t).unwrap().production_id, "P9");
        assert!(p.decide("EC", &[bud("1.2", "D")], &t).is_none());
        let d = p.decide("EC", &[bud("1", "A")], &t).unwrap();
        assert_eq!((d.address.to_string(), d.production_id.as_str()), ("1".into(), "P3"));
        assert!(p.decide("EC", &[bud("1", "A")], &t).is_none());
        assert!(p.decide("nobody", &[bud("1", "A")], &t).is_none());
        assert_eq!(p.remaining()["AE"].len(), 3);
    }

    #[test]
    fn addresses_restrict_matches() {
        let mut p = ScriptedProvider::from_json(r#"{"X":[{"sort":"H1","production":"P1","address":"2.1"}]}"#).unwrap();
        let t = Artifact::from_json(r#"{"sort":"A","state":"unlocked_bud"}"#).unwrap();
        assert!(p.decide("X", &[bud("1.1", "H1")], &t).is_none());
        assert_eq!(p.decide("X", &[bud("1.1", "H1"), bud("2.1", "H1")], &t).unwrap().address.to_string(), "2.1");
        assert!(ScriptedProvider::from_json("[").is_err());
    }
}
