//! The `rerest` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O or malformed
//! run directory, 4 the backend failed on every request.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{RunConfig, SetupError};
use crate::datasets::{load_jsonl, stats_table, write_bundle, DatasetError};
use crate::envs::EnvError;
use crate::infer::{evaluate_task, metric_name, InferMode};
use crate::pipeline::{
    accept, all_cross_pairs, assemble_bundle, compute_run_id, generate_initial, parse_k_values, run_reflection_phase, selfgen_records, solved_tasks,
    sort_samples, sweep_k, sweep_table, BundleInputs, PipelineError, RunContext,
};
use crate::reflect::ReflectError;
use crate::runlog::RunLog;
use crate::tasks::{load_tasks, TaskFileError};
use crate::types::{Domain, FeedbackDetails, Origin, Sample, TaskInstance};

#[derive(Parser, Debug)]
#[command(name = "rerest", version, about = "Reflection-reinforced self-training data generation for language agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample k trajectories per task and score them.
    Gen(GenArgs),
    /// Reflect once on every failed sample of a run.
    Reflect(ReflectArgs),
    /// Assemble the training corpora of a run.
    BuildData(BuildArgs),
    /// Answer tasks without training-time feedback and score the answers.
    Eval(EvalArgs),
    /// Accepted and solved counts as the number of samples per task grows.
    SweepK(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (overrides the config file).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Scripted backend seed (overrides the config file).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct TaskArgs {
    /// Task file, or `bundled` for the built-in set.
    #[arg(long)]
    pub tasks: PathBuf,
    /// wikiqa, household or codeexec.
    #[arg(long)]
    pub domain: Domain,
    /// Use only the first N tasks.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub tasks: TaskArgs,
    #[command(flatten)]
    pub common: Common,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Samples per task (overrides the config file).
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReflectArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Replaces the configuration recorded by `gen`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Also write preference pairs to bundle/dpo.jsonl.
    #[arg(long)]
    pub dpo: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub tasks: TaskArgs,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "direct")]
    pub mode: InferMode,
    #[arg(long, default_value_t = 3)]
    pub n_agent: usize,
    #[arg(long, default_value_t = 0)]
    pub n_reflect: usize,
    /// Write the per-task reports here as JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub tasks: TaskArgs,
    #[command(flatten)]
    pub common: Common,
    /// `1..6` or a comma list such as `1,2,4`.
    #[arg(long, default_value = "1..6")]
    pub k: String,
    /// Also report solved counts after one reflection per failure.
    #[arg(long)]
    pub reflect: bool,
    /// Directory for sweep.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Backend(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Backend(m) => m,
        }
    }
}

impl From<SetupError> for CliError {
    fn from(e: SetupError) -> Self {
        match e {
            SetupError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TaskFileError> for CliError {
    fn from(e: TaskFileError) -> Self {
        match e {
            TaskFileError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Invalid(m) => CliError::Config(m),
            PipelineError::Env(EnvError::SandboxUnavailable(_)) => CliError::Config(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<ReflectError> for CliError {
    fn from(e: ReflectError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        PipelineError::from(e).into()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// What `gen` records so later commands need only the run directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub domain: Domain,
    pub config: RunConfig,
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = common.seed {
        cfg.scripted.seed = Some(s);
    }
    Ok(cfg)
}

fn load_task_set(args: &TaskArgs) -> Result<Vec<TaskInstance>, CliError> {
    let mut tasks = load_tasks(&args.tasks, args.domain)?;
    if let Some(n) = args.limit {
        tasks.truncate(n);
    }
    Ok(tasks)
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new().num_threads(cfg.worker_count()).build().map_err(|e| CliError::Config(e.to_string()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn is_generation_error(s: &Sample) -> bool {
    matches!(s.feedback.details, FeedbackDetails::Error { .. }) && s.feedback.verbal.starts_with("generation error")
}

fn backend_dead(samples: &[Sample]) -> Option<CliError> {
    let first = samples.first()?;
    samples.iter().all(is_generation_error).then(|| CliError::Backend(format!("every request failed; first: {}", first.feedback.verbal)))
}

fn progress_stats(tasks: &[TaskInstance], samples: &[Sample], threshold: f64) -> serde_json::Value {
    let agent: Vec<&Sample> = samples.iter().filter(|s| s.origin == Origin::Agent).collect();
    let reflector = samples.len() - agent.len();
    let before = solved_tasks(agent.iter().copied()).len();
    let after = solved_tasks(samples).len();
    let n = tasks.len().max(1) as f64;
    let owned: Vec<Sample> = agent.into_iter().cloned().collect();
    json!({
        "task_count": tasks.len(),
        "agent_sample_count": owned.len(),
        "reflector_sample_count": reflector,
        "accepted_count": accept(&owned, threshold).len(),
        "solved_before": before,
        "solved_after": after,
        "sample_acc_before": before as f64 / n,
        "sample_acc_after": after as f64 / n,
    })
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
    tasks: Vec<TaskInstance>,
    samples: Vec<Sample>,
}

fn open_run(dir: &Path) -> Result<Run, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: not a run directory", dir.display())));
    }
    let manifest: RunManifest = read_json(&dir.join("config.json"))?;
    let tasks: Vec<TaskInstance> = read_json(&dir.join("tasks.json"))?;
    let samples: Vec<Sample> = load_jsonl(&dir.join("samples.jsonl"))?;
    Ok(Run { dir: dir.to_path_buf(), manifest, tasks, samples })
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.common)?;
    if let Some(k) = args.k {
        cfg.generation.k = k;
    }
    cfg.validate()?;
    let tasks = load_task_set(&args.tasks)?;
    let domain = args.tasks.domain;
    let out = &args.out;
    if out.join("samples.jsonl").exists() {
        return Err(CliError::Io(format!("{}: run directory already holds samples; choose a new --out", out.display())));
    }
    let backend = cfg.backend()?;
    let factory = cfg.env_factory(domain)?;
    let prompts = cfg.prompt_store()?;
    let run_id = compute_run_id(&(&cfg, domain), &tasks);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let ctx = RunContext { backend: backend.as_ref(), factory: &factory, config: &cfg.generation, prompts: &prompts };
    let mut generation = pool(&cfg)?.install(|| generate_initial(&tasks, &ctx))?;
    sort_samples(&mut generation.all_samples);

    write_json(&out.join("config.json"), &RunManifest { run_id: run_id.clone(), domain, config: cfg.clone() })?;
    write_json(&out.join("tasks.json"), &tasks)?;
    crate::datasets::emit_jsonl(&generation.all_samples, &out.join("samples.jsonl"))?;
    let stats = progress_stats(&tasks, &generation.all_samples, cfg.generation.score_threshold);
    write_json(&out.join("stats.json"), &stats)?;
    let log_path = out.join("log.jsonl");
    let mut log = RunLog::open(&log_path).map_err(|e| io_err(&log_path, e))?;
    let _ = log.event("gen", json!({"run_id": run_id, "domain": domain, "tasks": tasks.len(), "k": cfg.generation.k}));
    for s in &generation.all_samples {
        let _ = log.event("sample", json!({"id": s.id(), "passed": s.passed(), "verbal": s.feedback.verbal}));
    }
    println!("run {run_id}: {} samples over {} tasks, {} accepted", generation.all_samples.len(), tasks.len(), generation.accepted.len());
    match backend_dead(&generation.all_samples) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_reflect(args: ReflectArgs) -> Result<(), CliError> {
    let run = open_run(&args.run)?;
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(Some(p))?,
        None => run.manifest.config.clone(),
    };
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    let backend = cfg.backend()?;
    let factory = cfg.env_factory(run.manifest.domain)?;
    let prompts = cfg.prompt_store()?;
    let ctx = RunContext { backend: backend.as_ref(), factory: &factory, config: &cfg.generation, prompts: &prompts };
    // Re-running replaces earlier reflector samples rather than stacking them.
    let agent: Vec<Sample> = run.samples.into_iter().filter(|s| s.origin == Origin::Agent).collect();
    let phase = pool(&cfg)?.install(|| run_reflection_phase(&agent, &run.tasks, &ctx))?;
    let mut all: Vec<Sample> = agent.iter().cloned().chain(phase.corrected.iter().cloned()).collect();
    sort_samples(&mut all);
    crate::datasets::emit_jsonl(&all, &run.dir.join("samples.jsonl"))?;
    let stats = progress_stats(&run.tasks, &all, cfg.generation.score_threshold);
    write_json(&run.dir.join("stats.json"), &stats)?;
    let log_path = run.dir.join("log.jsonl");
    let mut log = RunLog::open(&log_path).map_err(|e| io_err(&log_path, e))?;
    let _ = log.event("reflect", json!({"failed": phase.corrected.len() + phase.failed_attempts.len(), "corrected": phase.corrected.len()}));
    let mut failed = phase.failed_attempts.clone();
    sort_samples(&mut failed);
    for s in &failed {
        let _ = log.event(
            "reflection_failed",
            json!({"parent": s.parent_sample_id, "reflection": s.reflection, "verbal": s.feedback.verbal, "trajectory": s.trajectory.render(s.domain.render_style())}),
        );
    }
    println!("reflected on {} failed samples, {} corrected", phase.corrected.len() + phase.failed_attempts.len(), phase.corrected.len());
    let attempts: Vec<Sample> = phase.corrected.into_iter().chain(phase.failed_attempts).collect();
    match backend_dead(&attempts) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), CliError> {
    let run = open_run(&args.run)?;
    let cfg = &run.manifest.config;
    let prompts = cfg.prompt_store()?;
    let gen = &cfg.generation;
    let agent: Vec<Sample> = run.samples.iter().filter(|s| s.origin == Origin::Agent).cloned().collect();
    let corrected: Vec<Sample> = run.samples.iter().filter(|s| s.origin == Origin::Reflector).cloned().collect();
    let accepted = accept(&agent, gen.score_threshold);
    let cross = all_cross_pairs(&agent, gen.cross_pair_cap);
    let selfgen = selfgen_records(&agent, &corrected)?;
    let inputs = BundleInputs { tasks: &run.tasks, prompts: &prompts, run_id: &run.manifest.run_id, cross_pair_cap: gen.cross_pair_cap };
    let bundle = assemble_bundle(&inputs, &agent, &accepted, &corrected, cross, selfgen)?;
    write_bundle(&run.dir, &bundle, args.dpo)?;
    write_json(&run.dir.join("stats.json"), &bundle.stats)?;
    let log_path = run.dir.join("log.jsonl");
    let mut log = RunLog::open(&log_path).map_err(|e| io_err(&log_path, e))?;
    let _ = log.event("build_data", json!({"dpo": args.dpo, "stats": bundle.stats}));
    print!("{}", stats_table(&bundle.stats));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.n_agent == 0 || args.n_reflect > args.n_agent {
        return Err(CliError::Config("need --n-agent >= 1 and --n-reflect <= --n-agent".into()));
    }
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let tasks = load_task_set(&args.tasks)?;
    let backend = cfg.backend()?;
    let factory = cfg.env_factory(args.tasks.domain)?;
    let prompts = cfg.prompt_store()?;
    let ctx = RunContext { backend: backend.as_ref(), factory: &factory, config: &cfg.generation, prompts: &prompts };
    let reports = pool(&cfg)?.install(|| {
        use rayon::prelude::*;
        tasks.par_iter().map(|t| evaluate_task(t, &ctx, args.mode, args.n_agent, args.n_reflect)).collect::<Result<Vec<_>, _>>()
    })?;
    for r in &reports {
        println!("{}", serde_json::to_string(r).expect("serializable"));
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    let mut by_domain: BTreeMap<&str, f64> = BTreeMap::new();
    by_domain.insert(metric_name(args.tasks.domain), if reports.is_empty() { 0.0 } else { passed as f64 / reports.len() as f64 });
    println!("{}", json!({"domain": args.tasks.domain, "mode": args.mode, "tasks": reports.len(), "passed": passed, "metric": by_domain}));
    if let Some(path) = &args.out {
        crate::datasets::emit_jsonl(&reports, path)?;
    }
    if !reports.is_empty() && reports.iter().all(|r| r.votes.iter().all(String::is_empty)) {
        // Distinguish a dead backend from a model that never answers.
        let probe = crate::infer::infer_direct(&tasks[0], &ctx)?.1;
        if let Some(e) = backend_dead(&[probe]) {
            return Err(e);
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let k_values = parse_k_values(&args.k)?;
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let tasks = load_task_set(&args.tasks)?;
    let backend = cfg.backend()?;
    let factory = cfg.env_factory(args.tasks.domain)?;
    let prompts = cfg.prompt_store()?;
    let ctx = RunContext { backend: backend.as_ref(), factory: &factory, config: &cfg.generation, prompts: &prompts };
    let rows = pool(&cfg)?.install(|| sweep_k(&tasks, &ctx, &k_values, args.reflect))?;
    print!("{}", sweep_table(&rows));
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_json(&dir.join("sweep.json"), &json!({"domain": args.tasks.domain, "tasks": tasks.len(), "rows": rows}))?;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Reflect(a) => cmd_reflect(a),
        Command::BuildData(a) => cmd_build(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SweepK(a) => cmd_sweep(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .try_init();
    run_from(std::env::args_os())
}
