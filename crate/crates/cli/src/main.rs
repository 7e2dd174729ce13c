use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use choreo_core::consensus::{consensus, Automaton, Tree};
use choreo_core::{
    project_gmwf, validate, Artifact, Gmawfp, Gmwf, Mode, Policy, Production, ScriptedProvider, SimError, Simulator,
    View,
};
use choreo_node::{Deployment, TransportKind};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "wf", version, about = "Grammatical workflow models: validation, projection, simulation, consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model; lists violations and exits 1 if there are any.
    Validate { model: PathBuf },
    /// Print every target artifact as canonical JSON, one per line.
    Targets { model: PathBuf },
    /// Print an actor's local grammar.
    Project {
        /// Actor whose read set is the view.
        #[arg(long)]
        view: String,
        /// Print the grammar as JSON instead of one production per line.
        #[arg(long)]
        json: bool,
        model: PathBuf,
    },
    /// Simulate one case end to end with scripted decisions.
    Run {
        /// Agent id to ordered decisions `{sort, production, status}`.
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PolicyArg::Fifo)]
        policy: PolicyArg,
        /// Also print the agents' trace events.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value = "case-1")]
        case: String,
        /// Maximum number of deliveries before giving up.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        model: PathBuf,
    },
    /// Host one agent with its TCP carrier and HTTP service.
    Serve {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        deployment: PathBuf,
        /// Decide from this script instead of waiting for HTTP requests.
        #[arg(long)]
        script: Option<PathBuf>,
        model: PathBuf,
    },
    /// Reconcile replicas of one grammar: print the consensus automaton and its simplest trees.
    Consensus {
        #[arg(long)]
        grammar: PathBuf,
        /// `file:sort,sort,...`; repeat once per replica.
        #[arg(long = "replica", required = true)]
        replicas: Vec<String>,
        /// Also list every consensus tree up to this depth.
        #[arg(long)]
        depth: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fifo,
    Random,
}

enum Failure {
    Validation(anyhow::Error),
    Invariant(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Gmawfp> {
    Gmawfp::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn augmented(path: &Path) -> anyhow::Result<Gmawfp> {
    let model = load_model(path)?.augmented()?;
    let violations = validate(&model);
    if !violations.is_empty() {
        bail!("invalid model: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "));
    }
    Ok(model)
}

fn render(p: &Production) -> String {
    let rhs =
        if p.rhs.is_empty() { "ε".to_string() } else { p.rhs.join(if p.mode == Mode::Par { " || " } else { " ; " }) };
    format!("{:<4} {} → {rhs}", p.id, p.lhs)
}

fn validate_cmd(path: &Path) -> Result<(), Failure> {
    let model = load_model(path)?.augmented().map_err(|e| Failure::Validation(e.into()))?;
    let violations = validate(&model);
    if violations.is_empty() {
        println!("ok");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Validation(anyhow!("{} violations", violations.len())))
}

fn targets_cmd(path: &Path) -> Result<(), Failure> {
    let model = augmented(path)?;
    for t in model.gmwf.enumerate_target_artifacts().map_err(anyhow::Error::from)? {
        println!("{}", t.canonical_json());
    }
    Ok(())
}

fn project_cmd(actor: &str, as_json: bool, path: &Path) -> Result<(), Failure> {
    let model = augmented(path)?;
    let acc = model.accreditation(actor).ok_or_else(|| anyhow!("unknown actor {actor}"))?;
    let local = project_gmwf(&model.gmwf, &View::from(acc)).map_err(anyhow::Error::from)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&local.gmwf).map_err(anyhow::Error::from)?);
    } else {
        for p in &local.gmwf.productions {
            println!("{}", render(p));
        }
    }
    Ok(())
}

struct RunArgs<'a> {
    script: &'a Path,
    policy: PolicyArg,
    seed: u64,
    trace: bool,
    case: &'a str,
    budget: usize,
}

fn run_cmd(args: RunArgs<'_>, path: &Path) -> Result<(), Failure> {
    let RunArgs { script, policy, seed, trace, case, budget } = args;
    let model = load_model(path)?;
    let policy = match policy {
        PolicyArg::Fifo => Policy::Fifo,
        PolicyArg::Random => Policy::Random(seed),
    };
    let sim = Simulator::new(&model, policy).map_err(|e| Failure::Validation(e.into()))?.with_budget(budget);
    let mut provider = ScriptedProvider::from_json(&read(script)?).map_err(anyhow::Error::from)?;
    let report = sim.run(case, &mut provider).map_err(|e| match e {
        SimError::Budget { .. } | SimError::Engine(_) => Failure::Invariant(e.into()),
        other => Failure::Validation(other.into()),
    })?;
    let line = |v: serde_json::Value| println!("{v}");
    for m in &report.messages {
        line(json!({ "message": m }));
    }
    if trace {
        for e in &report.trace {
            line(json!({ "event": e }));
        }
    }
    let initiator = model.resolve_initiator().map_err(anyhow::Error::from)?;
    let final_artifact: Option<&Artifact> = report.finals.get(&initiator);
    line(json!({
        "final": final_artifact,
        "terminated": report.terminated,
        "phases": report.phases,
        "monitor": report.monitor,
    }));
    if !report.monitor.is_clean() {
        return Err(Failure::Invariant(anyhow!("monitor reported violations")));
    }
    Ok(())
}

fn serve_cmd(agent: &str, deployment: &Path, script: Option<&Path>, path: &Path) -> Result<(), Failure> {
    let model = load_model(path)?;
    let deployment = Deployment::from_json(&read(deployment)?).map_err(anyhow::Error::from)?;
    if deployment.transport != TransportKind::Tcp {
        return Err(anyhow!("serve needs a tcp deployment; use `wf run` for simulation").into());
    }
    let provider = match script {
        Some(s) => Some(Box::new(ScriptedProvider::from_json(&read(s)?).map_err(anyhow::Error::from)?)
            as Box<dyn choreo_core::DecisionProvider + Send>),
        None => None,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    runtime.block_on(async {
        let node = choreo_node::serve(agent, &model, &deployment, provider).await.map_err(anyhow::Error::from)?;
        eprintln!("{agent}: tcp {}", node.tcp_addr);
        if let Some(http) = node.http_addr {
            eprintln!("{agent}: http http://{http}/v1/agent/{agent}");
        }
        std::future::pending::<()>().await;
        Ok(())
    })
}

fn automaton_json(a: &Automaton) -> serde_json::Value {
    let states: Vec<_> = a
        .states
        .iter()
        .enumerate()
        .map(|(id, q)| {
            json!({
                "id": id,
                "sort": q.sort,
                "description": q.description(),
                "exit": q.is_exit(),
                "transitions": q.transitions.iter().map(|t| json!({
                    "production": t.production,
                    "children": t.children,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "initial": a.initial, "reachable": a.reachable(), "states": states })
}

fn consensus_cmd(grammar: &Path, replicas: &[String], depth: Option<usize>) -> Result<(), Failure> {
    let g: Gmwf = load_model(grammar)?.gmwf;
    let mut inputs = Vec::new();
    for spec in replicas {
        let (file, sorts) = spec.rsplit_once(':').ok_or_else(|| anyhow!("replica {spec} is not file:view"))?;
        let artifact = Artifact::from_json(&read(Path::new(file))?).map_err(anyhow::Error::from)?;
        let view = View::new(sorts.split(',').map(str::trim).filter(|s| !s.is_empty()));
        inputs.push((artifact, view));
    }
    let product = consensus(&g, &inputs).map_err(anyhow::Error::from)?;
    let simplest: Vec<String> = product.generate_simplest_trees().iter().map(Tree::to_string).collect();
    let mut out = json!({ "automaton": automaton_json(&product), "simplest_trees": simplest });
    if let Some(d) = depth {
        out["trees"] = json!(product.generate_trees(d).iter().map(Tree::to_string).collect::<Vec<_>>());
    }
    println!("{}", serde_json::to_string_pretty(&out).map_err(anyhow::Error::from)?);
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate { model } => validate_cmd(model),
        Command::Targets { model } => targets_cmd(model),
        Command::Project { view, json, model } => project_cmd(view, *json, model),
        Command::Run { script, seed, policy, trace, case, budget, model } => {
            let args = RunArgs { script, policy: *policy, seed: *seed, trace: *trace, case, budget: *budget };
            run_cmd(args, model)
        }
        Command::Serve { agent, deployment, script, model } => serve_cmd(agent, deployment, script.as_deref(), model),
        Command::Consensus { grammar, replicas, depth } => consensus_cmd(grammar, replicas, *depth),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(e)) => {
            eprintln!("invariant breach: {e:#}");
            ExitCode::from(2)
        }
    }
}
