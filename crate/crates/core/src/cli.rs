//! `muas` command-line driver.
//!
//! Every command prints one JSON document on stdout and a short human summary
//! on stderr. Session commands print an envelope in the report schema holding
//! the steps the command recorded, so their output can be fed to `import`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::datasets::{generate, priors_from_dag, save_csv, Generator, TruthFile};
use crate::error::{ApiError, Error, Result};
use crate::options::Options;
use crate::orientation::{FileProvider, HttpProvider, HttpProviderConfig};
use crate::pipeline::{Analysis, Engine, StepOutcome, ZSpec};
use crate::session::{SessionState, SCHEMA_VERSION};

#[derive(Parser, Debug)]
#[command(name = "muas", version, about = "Causal discovery, adjustment-set selection and effect estimation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Directory holding one sub-directory per session.
    #[arg(long, global = true, env = "SESSION_ROOT", default_value = "sessions")]
    pub session_root: PathBuf,
    /// Session id; `ingest`, `pipeline` and `import` create one when omitted.
    #[arg(long, global = true)]
    pub session: Option<String>,
    /// JSON file whose keys supply flags (`n_runs` or `n-runs`); explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Prompt for the adjustment set after `adjust`.
    #[arg(long, global = true)]
    pub interactive: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset with `.truth.json` and `.priors.json` sidecars.
    Generate(GenerateArgs),
    /// Upload a CSV into a session.
    Ingest(IngestArgs),
    /// Learn a graph from the ingested data.
    Discover(DiscoverArgs),
    /// Orient edges with a file or HTTP provider.
    Orient(OrientArgs),
    /// Set one edge direction by hand.
    Override(OverrideArgs),
    /// Find the minimal-uncertainty adjustment set.
    Adjust(AdjustArgs),
    /// Record an adjustment-set choice: `all` or a comma-separated list.
    Select(SelectArgs),
    /// Estimate the average treatment effect.
    Estimate(EstimateArgs),
    /// ingest, discover, orient, adjust and estimate in one run.
    Pipeline(PipelineArgs),
    /// Print the session report.
    Report(ReportArgs),
    /// Print the active assumptions.
    Assumptions,
    /// Re-execute the log and compare output hashes.
    Replay,
    /// Move the session head back to a step.
    Trackback(TrackbackArgs),
    /// Close the session.
    Close,
    /// Load a report or envelope into a new session.
    Import(ImportArgs),
    /// Serve the HTTP API (`MUAS_LISTEN`, `SESSION_ROOT`).
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// sodium, confounder_chain or collider_trap.
    pub kind: Generator,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; defaults to `<kind>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confidence written into the priors sidecar.
    #[arg(long, default_value_t = 0.9)]
    pub prior_confidence: f64,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub treatment: String,
    #[arg(long)]
    pub outcome: String,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug, Clone)]
pub struct DiscoverArgs {
    /// Discovery plugin: pc or direct_lingam.
    #[arg(long, default_value = "pc")]
    pub discovery: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_cond_size: Option<usize>,
    #[arg(long)]
    pub prune_threshold: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProviderArgs {
    /// JSON priors `{"A|B": {"direction": "a_to_b", "confidence": 0.8}}`.
    #[arg(long)]
    pub provider_file: Option<PathBuf>,
    /// Base URL of an orientation provider (`ORIENTATION_TOKEN` is sent as a bearer token).
    #[arg(long)]
    pub provider_url: Option<String>,
    /// JSON map of variable descriptions passed to the provider.
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long, default_value = "")]
    pub context: String,
}

#[derive(Args, Debug)]
pub struct OrientArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Args, Debug)]
pub struct OverrideArgs {
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long, default_value_t = 1.0)]
    pub confidence: f64,
}

#[derive(Args, Debug, Clone)]
pub struct AdjustArgs {
    #[arg(long, default_value_t = crate::adjustment::DEFAULT_MAX_SIZE)]
    pub max_adjustment_size: usize,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long)]
    pub z: String,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[arg(long, default_value = "s_learner")]
    pub estimator: String,
    /// Outcome model: ridge or ols.
    #[arg(long, default_value = "ridge")]
    pub learner: String,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = crate::estimation::runner::DEFAULT_N_RUNS)]
    pub n_runs: usize,
    /// muas, all, selected, or a comma-separated covariate list.
    #[arg(long, default_value = "muas")]
    pub z: String,
    /// Fit every run on the full data instead of a bootstrap resample.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Truth sidecar with per-row effects, for PEHE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub discover: DiscoverArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub adjust: AdjustArgs,
    #[command(flatten)]
    pub estimate: EstimateArgs,
    /// Accepted for scripts that pass one seed everywhere; runs always use seeds 0..n_runs.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Embed the uploaded CSV and parsed dataset.
    #[arg(long)]
    pub include_data: bool,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrackbackArgs {
    #[arg(long)]
    pub step: u64,
}

#[derive(Args, Debug)]
pub struct ImportArgs {
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "MUAS_LISTEN")]
    pub listen: Option<String>,
}

/// Splices `--config` entries into `argv` right after the subcommand, so any
/// flag given explicitly later on the command line overrides them.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = find_flag(&argv, "--config") else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)?;
    let cfg: Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
    let cmd = Cli::command();
    let Some(pos) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cmd.find_subcommand(a.as_str()).is_some())
        .map(|(i, _)| i)
    else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&argv[pos]).expect("found above");
    let known = |long: &str| {
        sub.get_arguments()
            .chain(cmd.get_arguments())
            .any(|a| a.get_long() == Some(long))
    };
    let mut injected = Vec::new();
    for (k, v) in cfg {
        let long = k.replace('_', "-");
        if long == "config" || !known(&long) {
            continue;
        }
        match v {
            Value::Bool(true) => injected.push(format!("--{long}")),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => injected.extend([format!("--{long}"), s]),
            Value::Array(xs) => {
                let parts: Vec<String> = xs
                    .iter()
                    .map(|x| x.as_str().map(String::from).unwrap_or_else(|| x.to_string()))
                    .collect();
                injected.extend([format!("--{long}"), parts.join(",")]);
            }
            other => injected.extend([format!("--{long}"), other.to_string()]),
        }
    }
    let mut out = argv[..=pos].to_vec();
    out.extend(injected);
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(out)
}

fn find_flag(argv: &[String], flag: &str) -> Option<String> {
    let eq = format!("{flag}=");
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == flag {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix(&eq).map(String::from)
        }
    })
}

struct Ctx {
    root: PathBuf,
    session: Option<String>,
    interactive: bool,
}

impl Ctx {
    fn open(&self) -> Result<Analysis> {
        let id = self
            .session
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--session is required".into()))?;
        Ok(Analysis::new(
            SessionState::open(&self.root, id)?,
            Arc::new(Engine::default()),
        ))
    }

    fn open_or_new(&self) -> Result<Analysis> {
        std::fs::create_dir_all(&self.root)?;
        let st = match &self.session {
            Some(id) => SessionState::open_or_create(&self.root, id)?,
            None => SessionState::create(&self.root, &uuid::Uuid::new_v4().to_string())?,
        };
        Ok(Analysis::new(st, Arc::new(Engine::default())))
    }
}

/// Report-schema document with only the given steps.
fn envelope(a: &Analysis, steps: &[StepOutcome]) -> Value {
    let active = a.session.active_set();
    let steps: Vec<Value> = steps
        .iter()
        .map(|s| {
            let mut v = serde_json::to_value(&s.step).unwrap_or(Value::Null);
            v["active"] = json!(active.contains(&s.step.step_id));
            v["outputs"] = s.outputs.clone();
            v
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "session_id": a.session.id(),
        "head": a.session.head(),
        "closed": a.session.is_closed(),
        "steps": steps,
        "assumptions": a.session.list_assumptions(),
    })
}

fn summarize(out: &StepOutcome) -> String {
    let o = &out.outputs;
    let id = out.step.step_id;
    match out.step.kind {
        crate::session::StepKind::Ingest => format!(
            "step {id} ingest: {} rows, {} columns, {} dropped, {} warnings",
            o["n_rows"], o["columns"].as_array().map_or(0, Vec::len), o["dropped_rows"], o["warnings"].as_array().map_or(0, Vec::len)
        ),
        crate::session::StepKind::Discover | crate::session::StepKind::Orient | crate::session::StepKind::UserDecision => {
            if let Some(sel) = o.get("selection") {
                format!("step {id} selection: Z = {}", sel["z"])
            } else {
                let edges = serde_json::from_value::<crate::CausalGraph>(o["graph"].clone()).map_or(0, |g| g.edges().len());
                format!("step {id} {}: {edges} edges, unresolved {}", out.step.kind.as_str(), o["unresolved"])
            }
        }
        crate::session::StepKind::Adjust => match o.get("muas") {
            Some(m) => format!(
                "step {id} adjust: MUAS Z = {} cost {:.4}",
                m["chosen"]["Z"], m["chosen"]["cost"].as_f64().unwrap_or(f64::NAN)
            ),
            None => format!("step {id} adjust: {}", o["failure"]["message"]),
        },
        crate::session::StepKind::Estimate => format!(
            "step {id} estimate: ATE {} ± {} with Z = {} ({})",
            o["result"]["ate_mean"], o["result"]["ate_std"], o["z"], o["mode"]
        ),
    }
}

fn discover_options(d: &DiscoverArgs) -> Options {
    let mut o = Options::new();
    if let Some(a) = d.alpha {
        o.insert("alpha".into(), json!(a));
    }
    if let Some(k) = d.max_cond_size {
        o.insert("max_cond_size".into(), json!(k));
    }
    if let Some(p) = d.prune_threshold {
        o.insert("prune_threshold".into(), json!(p));
    }
    o
}

fn estimate_options(e: &EstimateArgs) -> Options {
    let mut o = Options::new();
    o.insert("learner".into(), json!(e.learner));
    if let Some(l) = e.lambda {
        o.insert("lambda".into(), json!(l));
    }
    if e.no_bootstrap {
        o.insert("bootstrap".into(), json!(false));
    }
    o
}

fn read_truth(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let t: TruthFile = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(t.tau_for(n))
}

fn sidecar(data: &Path, suffix: &str) -> PathBuf {
    let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    data.with_file_name(format!("{stem}.{suffix}.json"))
}

fn orient(a: &mut Analysis, p: &ProviderArgs, default_file: Option<PathBuf>) -> Result<StepOutcome> {
    let descriptions: BTreeMap<String, String> = match &p.descriptions {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        None => BTreeMap::new(),
    };
    if let Some(url) = &p.provider_url {
        let prov = HttpProvider::new(HttpProviderConfig::from_env(url.clone()))?;
        return a.orient_with_provider(&prov, &format!("http:{url}"), &descriptions, &p.context);
    }
    let file = p
        .provider_file
        .clone()
        .or(default_file)
        .ok_or_else(|| Error::InvalidInput("orient needs --provider-file or --provider-url".into()))?;
    let prov = FileProvider::from_path(&file)?;
    a.orient_with_provider(&prov, &format!("file:{}", file.display()), &descriptions, &p.context)
}

/// Lists the candidates on stderr and reads a choice from stdin. Returns the
/// recorded selection step, if the user picked something other than the MUAS.
fn prompt_selection(a: &mut Analysis, adjust: &StepOutcome) -> Result<Option<StepOutcome>> {
    let Some(m) = adjust.outputs.get("muas") else {
        return Ok(None);
    };
    let cands = m["candidates"].as_array().cloned().unwrap_or_default();
    let mut err = std::io::stderr();
    writeln!(err, "Which adjustment set would you like to use?")?;
    for (i, c) in cands.iter().enumerate() {
        writeln!(err, "  [{i}] Z = {} cost {} critical {}", c["Z"], c["cost"], c["critical_edges"])?;
    }
    writeln!(err, "  [all] every covariate\n  enter = {}", m["chosen"]["Z"])?;
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    let choice = line.trim();
    if choice.is_empty() {
        return Ok(None);
    }
    let z = if choice == "all" {
        ZSpec::parse("all")
    } else {
        let i: usize = choice
            .parse()
            .map_err(|_| Error::InvalidInput(format!("`{choice}` is not a listed option")))?;
        let c = cands
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("no candidate {i}")))?;
        ZSpec::Names(serde_json::from_value(c["Z"].clone())?)
    };
    Ok(Some(a.select_adjustment(z)?))
}

fn estimate(a: &mut Analysis, e: &EstimateArgs, z: ZSpec) -> Result<StepOutcome> {
    let tau = match &e.truth {
        Some(p) => {
            let n = a.context()?.dataset.map(|(_, d)| d.n_rows).unwrap_or(0);
            Some(read_truth(p, n)?)
        }
        None => None,
    };
    a.estimate(&e.estimator, z, e.n_runs, estimate_options(e), tau)
}

fn run_command(cli: Cli) -> Result<Value> {
    let ctx = Ctx {
        root: cli.session_root.clone(),
        session: cli.session.clone(),
        interactive: cli.interactive,
    };
    let mut err = std::io::stderr();
    match cli.command {
        Command::Generate(g) => {
            let (ds, truth) = generate(g.kind, g.n, g.seed)?;
            let out = g.out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", g.kind.name())));
            save_csv(&ds, &out)?;
            let truth_path = sidecar(&out, "truth");
            let priors_path = sidecar(&out, "priors");
            std::fs::write(&truth_path, serde_json::to_string_pretty(&truth.to_file())?)?;
            let priors = priors_from_dag(&truth.true_dag, g.prior_confidence);
            std::fs::write(&priors_path, serde_json::to_string_pretty(&priors)?)?;
            writeln!(err, "wrote {} ({} rows, ATE {})", out.display(), ds.n_rows(), truth.ate_true)?;
            Ok(json!({
                "schema_version": SCHEMA_VERSION,
                "session_id": Value::Null,
                "head": Value::Null,
                "steps": [],
                "assumptions": [],
                "generated": {
                    "kind": g.kind.name(),
                    "n": g.n,
                    "seed": g.seed,
                    "data": out,
                    "truth": truth_path,
                    "priors": priors_path,
                    "treatment": ds.treatment(),
                    "outcome": ds.outcome(),
                    "ate_true": truth.ate_true,
                }
            }))
        }
        Command::Ingest(i) => {
            let mut a = ctx.open_or_new()?;
            let csv = std::fs::read_to_string(&i.data.data)?;
            let s = a.ingest_csv(&csv, &i.data.treatment, &i.data.outcome, Some(i.data.data.display().to_string()))?;
            writeln!(err, "{}", summarize(&s))?;
            Ok(envelope(&a, &[s]))
        }
        Command::Discover(d) => {
            let mut a = ctx.open()?;
            let s = a.discover(&d.discovery, discover_options(&d))?;
            writeln!(err, "{}", summarize(&s))?;
            Ok(envelope(&a, &[s]))
        }
        Command::Orient(o) => {
            let mut a = ctx.open()?;
            let s = orient(&mut a, &o.provider, None)?;
            writeln!(err, "{}", summarize(&s))?;
            Ok(envelope(&a, &[s]))
        }
        Command::Override(o) => {
            let mut a = ctx.open()?;
            let s = a.override_edge(&o.from, &o.to, o.confidence)?;
            writeln!(err, "{}", summarize(&s))?;
            Ok(envelope(&a, &[s]))
        }
        Command::Adjust(j) => {
            let mut a = ctx.open()?;
            let s = a.adjust(j.max_adjustment_size)?;
            writeln!(err, "{}", summarize(&s))?;
            let mut steps = vec![s.clone()];
            if ctx.interactive {
                if let Some(sel) = prompt_selection(&mut a, &s)? {
                    writeln!(err, "{}", summarize(&sel))?;
                    steps.push(sel);
                }
            }
            Ok(envelope(&a, &steps))
        }
        Command::Select(s) => {
            let mut a = ctx.open()?;
            let out = a.select_adjustment(ZSpec::parse(&s.z))?;
            writeln!(err, "{}", summarize(&out))?;
            Ok(envelope(&a, &[out]))
        }
        Command::Estimate(e) => {
            let mut a = ctx.open()?;
            let s = estimate(&mut a, &e, ZSpec::parse(&e.z))?;
            writeln!(err, "{}", summarize(&s))?;
            Ok(envelope(&a, &[s]))
        }
        Command::Pipeline(p) => {
            let mut a = ctx.open_or_new()?;
            let csv = std::fs::read_to_string(&p.data.data)?;
            let mut steps = Vec::new();
            steps.push(a.ingest_csv(&csv, &p.data.treatment, &p.data.outcome, Some(p.data.data.display().to_string()))?);
            steps.push(a.discover(&p.discover.discovery, discover_options(&p.discover))?);
            let priors = sidecar(&p.data.data, "priors");
            let default_file = priors.exists().then_some(priors);
            steps.push(orient(&mut a, &p.provider, default_file)?);
            let adj = a.adjust(p.adjust.max_adjustment_size)?;
            steps.push(adj.clone());
            let mut z = ZSpec::parse(&p.estimate.z);
            if ctx.interactive {
                if let Some(sel) = prompt_selection(&mut a, &adj)? {
                    steps.push(sel);
                    z = ZSpec::parse("selected");
                }
            }
            steps.push(estimate(&mut a, &p.estimate, z)?);
            for s in &steps {
                writeln!(err, "{}", summarize(s))?;
            }
            Ok(envelope(&a, &steps))
        }
        Command::Report(r) => {
            let a = ctx.open()?;
            let rep = a.export_report(r.include_data)?;
            if let Some(path) = r.out {
                std::fs::write(&path, serde_json::to_string_pretty(&rep)?)?;
                writeln!(err, "wrote {}", path.display())?;
            }
            Ok(rep)
        }
        Command::Assumptions => {
            let a = ctx.open()?;
            let list = a.session.list_assumptions();
            for r in &list {
                writeln!(err, "{:?} {:?}: {}", r.name, r.status, r.evidence)?;
            }
            let mut env = envelope(&a, &[]);
            env["assumptions"] = serde_json::to_value(list)?;
            Ok(env)
        }
        Command::Replay => {
            let a = ctx.open()?;
            let rep = a.replay()?;
            writeln!(err, "replay: {} steps, {}", rep.steps.len(), if rep.ok { "all match" } else { "MISMATCH" })?;
            let mut env = envelope(&a, &[]);
            env["replay"] = serde_json::to_value(&rep)?;
            if !rep.ok {
                return Err(Error::Internal(format!("replay mismatch: {}", serde_json::to_string(&rep)?)));
            }
            Ok(env)
        }
        Command::Trackback(t) => {
            let mut a = ctx.open()?;
            a.trackback(t.step)?;
            writeln!(err, "head is now step {}", t.step)?;
            a.session.export(false, &|_| false)
        }
        Command::Close => {
            let mut a = ctx.open()?;
            a.session.close()?;
            writeln!(err, "session {} closed", a.session.id())?;
            Ok(envelope(&a, &[]))
        }
        Command::Import(i) => {
            let text = std::fs::read_to_string(&i.report)?;
            let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", i.report.display())))?;
            let mut st = SessionState::import(&doc)?;
            std::fs::create_dir_all(&ctx.root)?;
            let id = ctx.session.clone().unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
            st = st.renamed(&id);
            let saved = st.persist(&ctx.root)?;
            writeln!(err, "imported {} steps into session {id}", saved.steps().len())?;
            let a = Analysis::new(saved, Arc::new(Engine::default()));
            a.session.export(false, &|_| false)
        }
        Command::Serve(s) => {
            let mut cfg = crate::service::ServiceConfig::from_env()?;
            cfg.session_root = ctx.root.clone();
            if let Some(l) = s.listen {
                cfg.listen = l.parse().map_err(|e| Error::InvalidInput(format!("--listen: {e}")))?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(cfg, Arc::new(Engine::default())))?;
            Ok(json!({"served": true}))
        }
    }
}

/// Parses `argv`, runs the command, prints the JSON result and returns the exit code.
pub fn main_with(argv: Vec<String>) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout().lock(), "{e}");
                return 0;
            }
            let _ = e.print();
            let api = ApiError::new(crate::ErrorCode::InvalidInput, e.kind().to_string());
            let _ = writeln!(std::io::stdout().lock(), "{}", json!({ "error": api }));
            return 1;
        }
    };
    match run_command(cli) {
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).unwrap_or_else(|_| "{}".into());
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            0
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> i32 {
    let api = ApiError::from(e);
    eprintln!("error: {e}");
    let _ = writeln!(std::io::stdout().lock(), "{}", json!({ "error": api }));
    api.code.exit_code()
}
