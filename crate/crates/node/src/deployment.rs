//! Static directory of agents loaded from a deployment file.

use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("deployment file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("agent {0} is listed twice")]
    Duplicate(String),
    #[error("agent {0} is not in the deployment")]
    Unknown(String),
    #[error("agent {agent}: bad address {address}")]
    Address { agent: String, address: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Sim,
    #[default]
    Tcp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub id: String,
    /// Where the agent's TCP carrier listens.
    pub address: String,
    /// Where the agent's HTTP service listens; none disables the service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<String>,
    /// Bearer token the service expects; none disables authentication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub transport: TransportKind,
}

impl Deployment {
    pub fn from_json(text: &str) -> Result<Self, DeploymentError> {
        let d: Deployment = serde_json::from_str(text)?;
        for (i, a) in d.agents.iter().enumerate() {
            if d.agents[..i].iter().any(|b| b.id == a.id) {
                return Err(DeploymentError::Duplicate(a.id.clone()));
            }
        }
        Ok(d)
    }

    pub fn agent(&self, id: &str) -> Result<&AgentEntry, DeploymentError> {
        self.agents.iter().find(|a| a.id == id).ok_or_else(|| DeploymentError::Unknown(id.to_string()))
    }

    pub fn socket(&self, id: &str) -> Result<SocketAddr, DeploymentError> {
        let entry = self.agent(id)?;
        entry
            .address
            .parse()
            .map_err(|_| DeploymentError::Address { agent: id.to_string(), address: entry.address.clone() })
    }
}
