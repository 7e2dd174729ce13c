//! Wires a [`Host`] to the socket carrier and the HTTP service.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use choreo_core::{AgentModel, DecisionProvider, Gmawfp, TraceEvent};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;

use crate::deployment::{Deployment, DeploymentError};
use crate::host::{Effects, Host, HostError};
use crate::service;
use crate::tcp::{serve_inbox, Outbox};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
    #[error(transparent)]
    Engine(#[from] choreo_core::EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// State shared by the reactor and the HTTP handlers. All mutations go
/// through [`act`](Self::act), one at a time.
pub struct Shared {
    pub agent: String,
    pub token: Option<String>,
    pub events: broadcast::Sender<TraceEvent>,
    host: Mutex<Host>,
    outbox: Outbox,
}

impl Shared {
    pub fn host(&self) -> MutexGuard<'_, Host> {
        self.host.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` on the host, then sends its messages and publishes its events.
    pub fn act<T>(&self, f: impl FnOnce(&mut Host) -> Result<(Effects, T), HostError>) -> Result<T, HostError> {
        let (effects, value) = f(&mut self.host())?;
        self.publish(effects);
        Ok(value)
    }

    fn publish(&self, effects: Effects) {
        for m in effects.messages {
            if let Err(e) = self.outbox.send(m) {
                tracing::error!(error = %e, "message not sent");
            }
        }
        for e in effects.events {
            tracing::info!(case = %e.case, step = ?e.step, "{}", e.detail);
            let _ = self.events.send(e);
        }
    }
}

pub struct RunningNode {
    pub shared: Arc<Shared>,
    pub tcp_addr: SocketAddr,
    pub http_addr: Option<SocketAddr>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningNode {
    pub fn abort(&self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        self.abort();
    }
}

/// Starts `host` on already bound listeners; peers are looked up in `deployment`.
pub fn start(
    host: Host,
    deployment: &Deployment,
    tcp: TcpListener,
    http: Option<TcpListener>,
) -> Result<RunningNode, NodeError> {
    let agent = host.agent().to_string();
    let token = deployment.agent(&agent)?.token.clone();
    let directory = deployment
        .agents
        .iter()
        .filter(|a| a.id != agent)
        .map(|a| Ok((a.id.clone(), deployment.socket(&a.id)?)))
        .collect::<Result<Vec<_>, DeploymentError>>()?;
    let (events, _) = broadcast::channel(256);
    let shared = Arc::new(Shared { agent, token, events, host: Mutex::new(host), outbox: Outbox::new(directory) });

    let tcp_addr = tcp.local_addr()?;
    let (inbox_tx, mut inbox) = mpsc::unbounded_channel();
    let mut tasks = vec![serve_inbox(tcp, inbox_tx)];
    let reactor = shared.clone();
    tasks.push(tokio::spawn(async move {
        while let Some(msg) = inbox.recv().await {
            let (sender, case) = (msg.sender.clone(), msg.case_id.clone());
            if let Err(e) = reactor.act(|host| Ok((host.receive(msg)?, ()))) {
                tracing::error!(%sender, %case, error = %e, "message rejected");
            }
        }
    }));

    let mut http_addr = None;
    if let Some(listener) = http {
        http_addr = Some(listener.local_addr()?);
        let app = service::router(shared.clone());
        tasks.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "http service stopped");
            }
        }));
    }
    Ok(RunningNode { shared, tcp_addr, http_addr, tasks })
}

/// Binds the addresses `deployment` lists for `agent` and starts it.
pub async fn serve(
    agent: &str,
    model: &Gmawfp,
    deployment: &Deployment,
    provider: Option<Box<dyn DecisionProvider + Send>>,
) -> Result<RunningNode, NodeError> {
    let model = AgentModel::configure(agent, model)?;
    let host = match provider {
        Some(p) => Host::with_provider(model, p),
        None => Host::new(model),
    };
    let entry = deployment.agent(agent)?;
    let tcp = TcpListener::bind(deployment.socket(agent)?).await?;
    let http = match &entry.http {
        Some(addr) => Some(TcpListener::bind(addr.as_str()).await?),
        None => None,
    };
    start(host, deployment, tcp, http)
}
