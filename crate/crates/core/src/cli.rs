//! Command-line interface.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::bench::{self, BenchTask, Budgets, Method, ValidityRow};
use crate::composer::{concatenate, validate_composite, CompositeGraph, JunctionRule};
use crate::constraints::{builtin, ConstraintSet};
use crate::env::{sample_configuration_of_size, EnvSpec, Representation};
use crate::error::{Error, Result};
use crate::export::{self, DotOptions, GraphJson};
use crate::graph::{GraphConfig, GraphState};
use crate::learner::{self, generate_in, GenerateOptions, ModelArtifact, TrainSpec, DEFAULT_ROLLOUT_LEN};

const GRID_HELP: &str = "\
Reproducing the full model grid (sizes 4-10, sets 1-5, three representations):

  for set in 1 2 3 4 5; do
    for size in 4 5 6 7 8 9 10; do
      for repr in graph-narrow graph-wide pcgrl-wide; do
        steps=1500000; [ \"$repr\" = graph-narrow ] && steps=500000
        graph-pcg train --constraints set$set --repr $repr --max-size $size \\
          --steps $steps --seed 0 --out models/set${set}_${repr}_${size}.gpcg
      done
    done
  done

Constraint arguments accept a JSON file path or one of the bundled names
set1..set5, set1_economy, set1_skill_tree.";

#[derive(Debug, Parser)]
#[command(name = "graph-pcg", version, about = "Train graph generators and generate constraint-satisfying graphs", after_long_help = GRID_HELP)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the artifact plus a CSV training log.
    Train(TrainArgs),
    /// Generate one graph with a trained model.
    Generate(GenerateArgs),
    /// Report per-node violations of a graph file.
    Validate(ValidateArgs),
    /// Time trained models against the search baselines.
    Bench(BenchArgs),
    /// Build a larger graph from several generated subgraphs.
    Compose(ComposeArgs),
    /// Convert a graph file to DOT or normalized JSON.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Dot,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub constraints: String,
    /// graph-narrow, graph-wide or pcgrl-wide.
    #[arg(long, default_value = "graph-wide")]
    pub repr: Representation,
    #[arg(long)]
    pub max_size: usize,
    #[arg(long, default_value_t = 500_000)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_ROLLOUT_LEN)]
    pub rollout: usize,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub ent_coef: Option<f32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path; defaults to the artifact path with a .csv extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Type counts such as `Source=2,Converter=2,Pool=1`.
    #[arg(long, conflicts_with = "size", required_unless_present = "size")]
    pub config: Option<String>,
    /// Sample type counts of this total size instead.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Sample actions instead of taking the most likely one.
    #[arg(long)]
    pub stochastic: bool,
    /// Type order for arrows in DOT output, e.g. `Source,Converter,Pool`.
    #[arg(long)]
    pub direction: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub constraints: String,
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub sets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,6,7")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "trained-model,ea,random-search")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Episodes per model for the validity table; 0 skips it.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of trained artifacts. For each set and size the model with
    /// the smallest sufficient ceiling is used.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Run tasks on separate threads (timings then compete for cores).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value_t = Budgets::default().random_toggles)]
    pub random_budget: u64,
    #[arg(long, default_value_t = Budgets::default().ea_generations)]
    pub ea_generations: u64,
    #[arg(long, default_value_t = Budgets::default().model_attempts)]
    pub model_attempts: usize,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON plan: base configuration, subgraphs and junction rules.
    #[arg(long)]
    pub plan: PathBuf,
    /// Output stem; `<stem>.json` and `<stem>.dot` are written.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub constraints: String,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub direction: Option<String>,
}

/// Composition plan file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub base: String,
    pub subgraphs: Vec<PlanStep>,
    /// Greedy attempts per subgraph before giving up.
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default)]
    pub direction: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub config: String,
    pub from: String,
    pub to: String,
    #[serde(default = "default_edges")]
    pub edges: usize,
}

fn default_retries() -> usize {
    100
}

fn default_edges() -> usize {
    1
}

/// Reads a constraint file, or a bundled set by name.
pub fn load_constraints(arg: &str) -> Result<ConstraintSet> {
    let path = Path::new(arg);
    if path.exists() {
        return ConstraintSet::parse(&std::fs::read_to_string(path)?);
    }
    let bundled = match arg {
        "set1_economy" => Some(builtin::SET1_ECONOMY),
        "set1_skill_tree" => Some(builtin::SET1_SKILL_TREE),
        _ => arg.strip_prefix("set").and_then(|d| d.parse().ok()).and_then(builtin::text),
    };
    match bundled {
        Some(text) => ConstraintSet::parse(text),
        None => Err(Error::Config(format!("constraint file `{arg}` not found"))),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dot_options(cs: &ConstraintSet, direction: Option<&str>) -> Result<DotOptions> {
    match direction {
        Some(d) => DotOptions::with_direction(cs, &d.split(',').map(str::trim).collect::<Vec<_>>()),
        None => Ok(DotOptions::default()),
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The command worked but the graph is invalid.
    Invalid,
}

pub fn run(cli: Cli) -> Result<Status> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => train(a, seed),
        Command::Generate(a) => generate(a, seed),
        Command::Validate(a) => validate(a),
        Command::Bench(a) => bench_cmd(a, seed),
        Command::Compose(a) => compose(a, seed),
        Command::Export(a) => export_cmd(a),
    }
}

/// Parses `args`, runs, and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::Invalid) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn train(a: TrainArgs, seed: u64) -> Result<Status> {
    let cs = load_constraints(&a.constraints)?;
    let mut spec = TrainSpec::new(EnvSpec::new(a.max_size, a.repr, a.constraints.clone()), a.steps, seed);
    spec.rollout_len = a.rollout;
    if let Some(v) = a.lr {
        spec.ppo.learning_rate = v;
    }
    if let Some(v) = a.epochs {
        spec.ppo.epochs = v;
    }
    if let Some(v) = a.minibatch {
        spec.ppo.minibatch = v;
    }
    if let Some(v) = a.ent_coef {
        spec.ppo.ent_coef = v;
    }
    let outcome = learner::train_with(&spec, &cs, |row| {
        log::info!(
            "update {} steps {} reward {:.3} validity {:.3} entropy {:.3}",
            row.update,
            row.steps,
            row.mean_reward,
            row.validity_rate,
            row.entropy
        );
    })?;
    outcome.artifact.save(&a.out)?;
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("csv"));
    learner::write_train_log(&log_path, &outcome.log)?;
    let last = outcome.log.last().expect("at least one update");
    println!(
        "trained {} steps ({} updates); final validity {:.3}; wrote {} and {}",
        outcome.artifact.metadata.steps_trained,
        outcome.artifact.metadata.updates,
        last.validity_rate,
        a.out.display(),
        log_path.display()
    );
    Ok(Status::Ok)
}

fn resolve_config(cs: &ConstraintSet, config: Option<&str>, size: Option<usize>, seed: u64) -> Result<GraphConfig> {
    let config = match (config, size) {
        (Some(text), _) => cs.parse_config(text)?,
        (None, Some(n)) => sample_configuration_of_size(cs, n, &mut ChaCha8Rng::seed_from_u64(seed))?,
        (None, None) => return Err(Error::Config("give --config or --size".into())),
    };
    cs.check_config(&config)?;
    Ok(config)
}

fn generate(a: GenerateArgs, seed: u64) -> Result<Status> {
    let art = ModelArtifact::load(&a.model)?;
    let cs = &art.constraints;
    let config = resolve_config(cs, a.config.as_deref(), a.size, seed)?;
    let mut env = art.make_env()?;
    let opts = GenerateOptions { stochastic: a.stochastic, record_observations: false };
    let (g, trace) = generate_in(&mut env, &art.model, &config, seed, opts)?;
    let text = match a.format {
        Format::Json => export::graph_to_json_string(&g, cs)?,
        Format::Dot => export::graph_to_dot(&g, cs, &dot_options(cs, a.direction.as_deref())?),
    };
    write_output(a.out.as_deref(), &text)?;
    let summary = format!(
        "config {} valid {} iterations {} changes {}",
        cs.format_config(&config),
        trace.valid,
        trace.iterations,
        trace.changes
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(if trace.valid { Status::Ok } else { Status::Invalid })
}

fn validate(a: ValidateArgs) -> Result<Status> {
    let cs = load_constraints(&a.constraints)?;
    let g = export::graph_from_json_str(&std::fs::read_to_string(&a.graph)?, &cs)?;
    let report = cs.total_violations(&g);
    for (i, v) in report.per_node.iter().enumerate() {
        println!("node {i} ({}): {v}", cs.type_name(g.node_type(i)));
    }
    println!(
        "total {} (missing required {}, disallowed edge ends {})",
        report.total, report.missing_required, report.disallowed_edges
    );
    println!("{}", if report.total == 0 { "valid" } else { "invalid" });
    Ok(if report.total == 0 { Status::Ok } else { Status::Invalid })
}

fn builtin_set_of(cs: &ConstraintSet) -> Option<usize> {
    (1..=5).find(|&id| builtin::set(id).is_some_and(|b| b.names_and_requirements_eq(cs)))
}

/// Artifacts in `dir`, sorted by file name.
fn load_models(dir: &Path) -> Result<Vec<(PathBuf, ModelArtifact)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        match ModelArtifact::load(&p) {
            Ok(m) => out.push((p, m)),
            Err(Error::Format(_)) => log::debug!("skipping {}: not a model", p.display()),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn bench_cmd(a: BenchArgs, seed: u64) -> Result<Status> {
    let budgets = Budgets {
        random_toggles: a.random_budget,
        ea_generations: a.ea_generations,
        model_attempts: a.model_attempts,
    };
    let models = match &a.model_dir {
        Some(d) => load_models(d)?,
        None => Vec::new(),
    };
    let by_set: Vec<(usize, &Path, &ModelArtifact)> = models
        .iter()
        .filter_map(|(p, m)| builtin_set_of(&m.constraints).map(|s| (s, p.as_path(), m)))
        .collect();
    let pick = |set: usize, size: usize| {
        by_set
            .iter()
            .filter(|(s, _, m)| *s == set && m.max_size() >= size)
            .min_by_key(|(_, p, m)| (m.max_size(), *p))
            .map(|(_, _, m)| *m)
    };

    let mut tasks = Vec::new();
    for &set in &a.sets {
        if builtin::set(set).is_none() {
            return Err(Error::Config(format!("unknown constraint set {set}")));
        }
        for &size in &a.sizes {
            for &method in &a.methods {
                if method == Method::TrainedModel && pick(set, size).is_none() {
                    return Err(Error::Config(format!(
                        "no trained model for set {set} with ceiling >= {size}; pass --model-dir or drop trained-model from --methods"
                    )));
                }
                tasks.push(BenchTask { method, set, size, runs: a.runs, seed });
            }
        }
    }
    let rows = bench::run_tasks(&tasks, &|t: &BenchTask| pick(t.set, t.size).cloned(), &budgets, a.parallel)?;
    let written = bench::emit_report(&rows, &a.out)?;
    print!("{}", bench::markdown_table(&rows));

    if a.samples > 0 {
        let mut vrows = Vec::new();
        for (set, _, m) in by_set.iter().filter(|(s, _, _)| a.sets.contains(s)) {
            let (rate, iters) = bench::validity_rate(m, a.samples, seed)?;
            vrows.push(ValidityRow {
                set: *set,
                max_size: m.max_size(),
                representation: m.env_spec().representation.to_string(),
                samples: a.samples,
                validity_rate: rate,
                mean_iterations: iters,
            });
        }
        if !vrows.is_empty() {
            let p = bench::emit_validity(&vrows, &a.out)?;
            println!("wrote {}", p.display());
        }
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(Status::Ok)
}

/// Greedy generation with fresh starts until a valid graph appears.
fn generate_valid(
    art: &ModelArtifact,
    env: &mut crate::env::Env,
    config: &GraphConfig,
    seed: u64,
    retries: usize,
) -> Result<GraphState> {
    for attempt in 0..retries.max(1) {
        let s = seed.wrapping_add(attempt as u64);
        let (g, trace) = generate_in(env, &art.model, config, s, GenerateOptions::default())?;
        if trace.valid {
            return Ok(g);
        }
    }
    Err(Error::Composition(format!(
        "no valid subgraph for {} after {} attempts",
        art.constraints.format_config(config),
        retries.max(1)
    )))
}

fn compose(a: ComposeArgs, seed: u64) -> Result<Status> {
    let art = ModelArtifact::load(&a.model)?;
    let plan: Plan = serde_json::from_str(&std::fs::read_to_string(&a.plan)?)
        .map_err(|e| Error::Parse(format!("plan file: {e}")))?;
    if plan.subgraphs.is_empty() {
        return Err(Error::Composition("plan lists no subgraphs to attach".into()));
    }
    let cs = &art.constraints;
    let mut env = art.make_env()?;
    let base_cfg = resolve_config(cs, Some(&plan.base), None, seed)?;
    let base = generate_valid(&art, &mut env, &base_cfg, seed, plan.retries)?;
    let mut composite = CompositeGraph::new(&base)?;
    for (i, step) in plan.subgraphs.iter().enumerate() {
        let step_seed = seed.wrapping_add(1_000_003 * (i as u64 + 1));
        let cfg = resolve_config(cs, Some(&step.config), None, step_seed)?;
        let rule = JunctionRule::by_name(cs, &step.from, &step.to)?.with_edges(step.edges);
        let sub = generate_valid(&art, &mut env, &cfg, step_seed, plan.retries)?;
        composite = concatenate(&composite, &sub, &rule, cs, step_seed)?;
    }
    let valid = validate_composite(&composite, cs);
    let opts = match &plan.direction {
        Some(d) => DotOptions::with_direction(cs, &d.iter().map(String::as_str).collect::<Vec<_>>())?,
        None => DotOptions::default(),
    };
    let json = export::json_string(&export::composite_to_json(&composite, cs)?)?;
    let dot = export::composite_to_dot(&composite, cs, &opts)?;
    let (json_path, dot_path) = (a.out.with_extension("json"), a.out.with_extension("dot"));
    std::fs::write(&json_path, json)?;
    std::fs::write(&dot_path, dot)?;
    println!(
        "subgraphs {} nodes {} junctions {} valid {}; wrote {} and {}",
        composite.subgraphs.len(),
        composite.num_nodes(),
        composite.junctions.len(),
        valid,
        json_path.display(),
        dot_path.display()
    );
    Ok(if valid { Status::Ok } else { Status::Invalid })
}

fn export_cmd(a: ExportArgs) -> Result<Status> {
    let cs = load_constraints(&a.constraints)?;
    let doc: GraphJson = serde_json::from_str(&std::fs::read_to_string(&a.graph)?)
        .map_err(|e| Error::Parse(format!("graph file: {e}")))?;
    let text = match a.format {
        Format::Dot => export::json_to_dot(&doc, &cs, &dot_options(&cs, a.direction.as_deref())?)?,
        Format::Json => {
            // normalizes ids and edge orientation
            let g = export::graph_from_json(&doc, &cs)?;
            export::graph_to_json_string(&g, &cs)?
        }
    };
    write_output(a.out.as_deref(), &text)?;
    Ok(Status::Ok)
}
