mod chat;
mod client;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sopplan_core::catalog::{load_task_file, TaskCatalog};
use sopplan_core::datagen::{generate, DatagenConfig, ProfileMode};
use sopplan_core::eval::{compare_dialogues, evaluate_sop, run_benchmark, self_play, EvalReport};
use sopplan_core::llm::{BackendConfig, SharedBackend, TemplateSet};
use sopplan_core::offline::{predict_sop, SopMethod};
use sopplan_core::online::{PlannerConfig, PlannerMethod};
use sopplan_core::service::{load_sop_file, read_any_dialogues, AgentService, ServiceConfig};
use sopplan_core::sop::SopGuide;
use sopplan_core::task::write_dialogues_jsonl;
use sopplan_core::{SopGraph, TaskDefinition};
use sopplan_server::AppState;

#[derive(Parser)]
#[command(name = "sopplan", version, about = "SOP-guided dialogue planning")]
struct Cli {
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict a task's SOP graph with a model.
    PlanSop(PlanSopArgs),
    /// Talk to the agent on stdin.
    Chat(chat::ChatArgs),
    /// Let the agent talk to the simulated user.
    SelfPlay(SelfPlayArgs),
    /// Re-plan every turn of recorded dialogues and print gold against predicted.
    Replay(ReplayArgs),
    /// Replay dialogues with one or more planners and report metrics.
    Benchmark(BenchmarkArgs),
    /// Score SOP predictions or dialogues.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Generate synthetic dialogues for a task.
    Datagen(DatagenArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Call a running HTTP service.
    Client(client::ClientArgs),
    /// List the bundled tasks, or dump one as JSON.
    Tasks {
        id: Option<String>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Compare a predicted SOP graph with the gold one.
    Sop {
        #[arg(long)]
        pred: PathBuf,
        /// Task file or bundled id holding the gold SOP.
        #[arg(long)]
        task: String,
        /// Gold SOP file; the task's own SOP when absent.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Score predicted dialogues against gold dialogues.
    Dialogue {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[command(flatten)]
        tasks: TaskDirArg,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct TaskDirArg {
    /// Task directory; bundled tasks when absent.
    #[arg(long)]
    task_dir: Option<PathBuf>,
}

impl TaskDirArg {
    fn catalog(&self) -> Result<TaskCatalog> {
        Ok(match &self.task_dir {
            Some(d) => TaskCatalog::load_dir(d)?,
            None => TaskCatalog::bundled(),
        })
    }
}

#[derive(Args)]
struct PlannerArgs {
    #[arg(long, default_value = "MCTS_SOP")]
    method: PlannerMethod,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    max_turns: Option<usize>,
    /// JSON planner config; the flags above override it.
    #[arg(long)]
    planner_config: Option<PathBuf>,
}

impl PlannerArgs {
    fn config(&self) -> Result<PlannerConfig> {
        let mut cfg = match &self.planner_config {
            Some(p) => serde_json::from_str(&read(p)?).with_context(|| p.display().to_string())?,
            None => PlannerConfig::default(),
        };
        cfg.method = self.method;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.iterations {
            cfg.n_iterations = n;
        }
        if let Some(n) = self.max_turns {
            cfg.max_turns = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PlanSopArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "al")]
    method: SopMethod,
    #[arg(long)]
    backend: PathBuf,
    /// Where to write the predicted adjacency list; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the prompts, completions and repairs.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Score the prediction against the task's own SOP.
    #[arg(long)]
    score: bool,
}

#[derive(Args)]
struct SelfPlayArgs {
    #[arg(long)]
    task: String,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    backend: PathBuf,
    #[arg(long)]
    user_sim: Option<PathBuf>,
    /// Predicted SOP file to plan with instead of the task's own.
    #[arg(long)]
    sop: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    dialogues: PathBuf,
    #[command(flatten)]
    tasks: TaskDirArg,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    backend: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    dialogues: PathBuf,
    #[command(flatten)]
    tasks: TaskDirArg,
    /// Planners to run; repeat the flag or pass `all`.
    #[arg(long = "method", default_value = "MCTS_SOP")]
    methods: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    planner_config: Option<PathBuf>,
    #[arg(long)]
    backend: PathBuf,
    /// JSON file receiving every method's report and judgments.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_attempts: usize,
    /// Model backend; rule-based fallbacks for every role when absent.
    #[arg(long)]
    backend: Option<PathBuf>,
    /// Ask the backend for user profiles instead of sampling the pools.
    #[arg(long)]
    model_profiles: bool,
    /// Generated items with scene, profile and quality data (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// The same items as evaluation dialogues (JSONL).
    #[arg(long)]
    dialogues: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Service config file.
    #[arg(long, conflicts_with = "backend")]
    config: Option<PathBuf>,
    /// Backend config, for running without a service config.
    #[arg(long)]
    backend: Option<PathBuf>,
    #[command(flatten)]
    tasks: TaskDirArg,
    #[arg(long)]
    transcript_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A task file path, or the id of a bundled task.
fn resolve_task(arg: &str) -> Result<TaskDefinition> {
    let p = Path::new(arg);
    if p.exists() {
        return Ok(load_task_file(p)?);
    }
    match TaskCatalog::bundled().get(arg) {
        Some(t) => Ok(t.clone()),
        None => bail!("`{arg}` is neither a task file nor a bundled task id"),
    }
}

fn backend(path: &Path) -> Result<SharedBackend> {
    Ok(BackendConfig::load(path)?.build()?)
}

fn templates(dir: Option<&Path>) -> Result<TemplateSet> {
    Ok(match dir {
        Some(d) => TemplateSet::with_overrides(d)?,
        None => TemplateSet::default(),
    })
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let tpl = cli.templates.as_deref();
    match cli.cmd {
        Command::PlanSop(a) => plan_sop(a, &templates(tpl)?),
        Command::Chat(a) => chat::run(a, templates(tpl)?),
        Command::SelfPlay(a) => run_self_play(a, &templates(tpl)?),
        Command::Replay(a) => replay(a, &templates(tpl)?),
        Command::Benchmark(a) => benchmark(a, &templates(tpl)?),
        Command::Eval(e) => eval(e),
        Command::Datagen(a) => datagen(a, &templates(tpl)?),
        Command::Serve(a) => serve(a, tpl),
        Command::Client(a) => client::run(a),
        Command::Tasks { id: None } => {
            for s in TaskCatalog::bundled().summaries() {
                println!("{}\t{}\t{}", s.a_id, s.domain, s.task);
            }
            Ok(())
        }
        Command::Tasks { id: Some(id) } => {
            print!("{}", pretty(&resolve_task(&id)?.to_json())?);
            Ok(())
        }
    }
}

fn plan_sop(a: PlanSopArgs, tpl: &TemplateSet) -> Result<()> {
    let task = resolve_task(&a.task)?;
    let b = backend(&a.backend)?;
    let pred = predict_sop(&task, a.method, b.as_ref(), tpl)?;
    for r in &pred.repair_log {
        log::info!("repair: {r}");
    }
    write_or_print(a.out.as_deref(), &pretty(&pred.adjacency.adjacency_list)?)?;
    if let Some(t) = &a.transcript {
        fs::write(t, pretty(&pred)?)?;
    }
    if a.score {
        let ev = evaluate_sop(&SopGraph::from_spec(&pred.adjacency)?, &SopGraph::from_spec(&task.sop)?)?;
        eprint!("{}", EvalReport::from_sop(ev).render_table());
    }
    Ok(())
}

fn guide_for(task: &TaskDefinition, sop: Option<&Path>) -> Result<SopGuide> {
    let spec = match sop {
        Some(p) => load_sop_file(p, task).map_err(anyhow::Error::msg)?,
        None => task.sop.clone(),
    };
    Ok(SopGuide::new(SopGraph::from_spec(&spec)?)?)
}

fn run_self_play(a: SelfPlayArgs, tpl: &TemplateSet) -> Result<()> {
    let task = resolve_task(&a.task)?;
    let cfg = a.planner.config()?;
    let b = backend(&a.backend)?;
    let sim = match &a.user_sim {
        Some(p) => backend(p)?,
        None => b.clone(),
    };
    let guide = guide_for(&task, a.sop.as_deref())?;
    let out = self_play(&task, &guide, &cfg, b.as_ref(), sim.as_ref(), tpl)?;
    for t in &out.dialogue.turns {
        if !t.user_utterance.is_empty() {
            let state = t.user_state.as_ref().map(|s| s.to_string()).unwrap_or_default();
            println!("user  [{state}] {}", t.user_utterance);
        }
        println!("agent [{}] {}", t.agent_action, t.agent_response);
    }
    println!(
        "success: {} ({}), {} turns, {} tokens",
        out.success,
        out.stop_reason,
        out.dialogue.turns.len(),
        out.usage.total()
    );
    if let Some(p) = &a.out {
        fs::write(p, write_dialogues_jsonl(std::slice::from_ref(&out.dialogue)))?;
    }
    Ok(())
}

fn load_dialogues(path: &Path) -> Result<Vec<sopplan_core::Dialogue>> {
    read_any_dialogues(&read(path)?).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn replay(a: ReplayArgs, tpl: &TemplateSet) -> Result<()> {
    let catalog = a.tasks.catalog()?;
    let dialogues = load_dialogues(&a.dialogues)?;
    let cfg = a.planner.config()?;
    let b = backend(&a.backend)?;
    let out = run_benchmark(&catalog, &dialogues, &cfg, b.as_ref(), tpl)?;
    for j in &out.judgments {
        let (action, response) = match &j.predicted {
            Some(p) => (p.agent_action.to_string(), p.agent_response.as_str()),
            None => ("-".to_string(), ""),
        };
        println!(
            "{}#{}\t{}\t{} -> {}\t{}",
            j.dialogue_id,
            j.turn_index,
            if j.action_correct { "ok" } else { "MISS" },
            j.gold.agent_action,
            action,
            response,
        );
    }
    for f in &out.failures {
        eprintln!("failed {}: {}", f.dialogue_id, f.error);
    }
    print!("{}", out.report.render_table());
    Ok(())
}

fn benchmark(a: BenchmarkArgs, tpl: &TemplateSet) -> Result<()> {
    let catalog = a.tasks.catalog()?;
    let dialogues = load_dialogues(&a.dialogues)?;
    let b = backend(&a.backend)?;
    let methods: Vec<PlannerMethod> = if a.methods.iter().any(|m| m.eq_ignore_ascii_case("all")) {
        PlannerMethod::ALL.to_vec()
    } else {
        a.methods
            .iter()
            .map(|m| m.parse().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    let mut all = serde_json::Map::new();
    for m in methods {
        let planner = PlannerArgs {
            method: m,
            seed: a.seed,
            iterations: None,
            max_turns: None,
            planner_config: a.planner_config.clone(),
        };
        let out = run_benchmark(&catalog, &dialogues, &planner.config()?, b.as_ref(), tpl)?;
        println!("== {m} ({} ms, {} failed)", out.wall_ms, out.failures.len());
        print!("{}", out.report.render_table());
        all.insert(m.to_string(), serde_json::to_value(&out)?);
    }
    if let Some(p) = &a.out {
        fs::write(p, pretty(&all)?)?;
    }
    Ok(())
}

fn eval(cmd: EvalCmd) -> Result<()> {
    let (report, json) = match cmd {
        EvalCmd::Sop { pred, task, gold, json } => {
            let task = resolve_task(&task)?;
            let p = load_sop_file(&pred, &task).map_err(anyhow::Error::msg)?;
            let g = match gold {
                Some(g) => load_sop_file(&g, &task).map_err(anyhow::Error::msg)?,
                None => task.sop.clone(),
            };
            let ev = evaluate_sop(&SopGraph::from_spec(&p)?, &SopGraph::from_spec(&g)?)?;
            (EvalReport::from_sop(ev), json)
        }
        EvalCmd::Dialogue { pred, gold, tasks, json } => {
            let (report, _) = compare_dialogues(&load_dialogues(&pred)?, &load_dialogues(&gold)?, &tasks.catalog()?)?;
            (report, json)
        }
    };
    if json {
        print!("{}", pretty(&report)?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn datagen(a: DatagenArgs, tpl: &TemplateSet) -> Result<()> {
    let task = resolve_task(&a.task)?;
    let cfg = DatagenConfig {
        count: a.count,
        seed: a.seed,
        max_attempts: a.max_attempts,
        profiles: if a.model_profiles { ProfileMode::Backend } else { ProfileMode::Pool },
    };
    let b = a.backend.as_deref().map(backend).transpose()?;
    let batch = generate(&task, &cfg, b.as_deref(), tpl)?;
    let mut lines = String::new();
    for item in &batch.items {
        lines.push_str(&serde_json::to_string(item)?);
        lines.push('\n');
    }
    fs::write(&a.out, lines)?;
    if let Some(p) = &a.dialogues {
        let ds: Vec<_> = batch.items.iter().map(|i| i.to_dialogue()).collect();
        fs::write(p, write_dialogues_jsonl(&ds))?;
    }
    for f in &batch.failures {
        eprintln!("item {} (seed {}) failed: {}", f.index, f.seed, f.error);
    }
    eprint!("{}", pretty(&batch.stats)?);
    if batch.items.is_empty() && !batch.failures.is_empty() {
        bail!("every item failed");
    }
    Ok(())
}

fn serve(a: ServeArgs, tpl: Option<&Path>) -> Result<()> {
    let svc = match (&a.config, &a.backend) {
        (Some(c), _) => ServiceConfig::load(c)?.build()?,
        (None, Some(b)) => {
            let cfg = ServiceConfig {
                backend: Some(b.clone()),
                task_dir: a.tasks.task_dir.clone(),
                transcript_dir: a.transcript_dir.clone(),
                templates_dir: tpl.map(Path::to_path_buf),
                ..ServiceConfig::default()
            };
            cfg.build()?
        }
        (None, None) => bail!("pass --config or --backend"),
    };
    let state = AppState::new(svc).with_env_token();
    if state.token.is_none() {
        log::warn!("no {} set; the API is open", sopplan_server::TOKEN_ENV);
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(sopplan_server::serve(a.addr, state))?;
    Ok(())
}

/// A one-task service around a single backend, for local commands.
fn local_service(task: TaskDefinition, b: SharedBackend, sim: SharedBackend, tpl: TemplateSet, cfg: PlannerConfig) -> Result<AgentService> {
    let mut catalog = TaskCatalog::default();
    catalog.insert(task, None)?;
    Ok(AgentService::new(catalog, b, sim, tpl, cfg))
}
