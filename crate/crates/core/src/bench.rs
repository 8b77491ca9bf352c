//! Evaluation protocol: validity over sampled configurations and
//! wall-clock time to a valid graph per method, set and size.
//!
//! Timed sections cover generation only (environment reset included,
//! model loading and report writing excluded).

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{ea_generate, random_search, EAParams, DEFAULT_RANDOM_BUDGET};
use crate::constraints::{builtin, ConstraintSet};
use crate::env::{sample_configuration_of_size, sample_configuration_with};
use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::learner::{generate_in, GenerateOptions, ModelArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TrainedModel,
    Ea,
    RandomSearch,
}

impl Method {
    pub const ALL: [Method; 3] = [Self::TrainedModel, Self::Ea, Self::RandomSearch];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TrainedModel => "trained-model",
            Self::Ea => "ea",
            Self::RandomSearch => "random-search",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "trained-model" | "model" | "rl" => Ok(Self::TrainedModel),
            "ea" | "evolutionary" => Ok(Self::Ea),
            "random-search" | "random" => Ok(Self::RandomSearch),
            other => Err(Error::Parse(format!(
                "unknown method `{other}` (expected trained-model, ea or random-search)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    pub method: Method,
    pub set: usize,
    pub size: usize,
    pub runs: usize,
    pub seed: u64,
}

/// Budgets that turn a run into a recorded failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub random_toggles: u64,
    pub ea_generations: u64,
    /// Greedy episodes (each from a fresh start) before a model run fails.
    pub model_attempts: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            random_toggles: DEFAULT_RANDOM_BUDGET,
            ea_generations: EAParams::default().max_generations,
            model_attempts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub set: usize,
    pub size: usize,
    pub runs: usize,
    pub validity_rate: f64,
    /// Model: episode steps; EA: generations; random search: toggles.
    pub mean_iterations: f64,
    pub median_ms: Option<f64>,
    pub p25_ms: Option<f64>,
    pub p75_ms: Option<f64>,
    pub failures: usize,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Configuration of run `r`; identical across methods for the same task seed.
pub fn run_config(cs: &ConstraintSet, size: usize, seed: u64, run: usize) -> Result<GraphConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    sample_configuration_of_size(cs, size, &mut rng)
}

fn run_seed(seed: u64, run: usize) -> u64 {
    seed ^ ((run as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Runs `task.runs` independent generations and times each until a valid
/// graph exists. `model` is required for [`Method::TrainedModel`].
pub fn time_to_valid(task: &BenchTask, model: Option<&ModelArtifact>, budgets: &Budgets) -> Result<BenchRow> {
    if task.runs == 0 {
        return Err(Error::Config("a benchmark task needs at least one run".into()));
    }
    let cs = match (task.method, model) {
        (Method::TrainedModel, Some(m)) => m.constraints.clone(),
        (Method::TrainedModel, None) => {
            return Err(Error::Config(format!("no trained model for set {} size {}", task.set, task.size)))
        }
        _ => builtin::set(task.set).ok_or_else(|| Error::Config(format!("unknown constraint set {}", task.set)))?,
    };
    let mut env = match model {
        Some(m) if task.method == Method::TrainedModel => {
            if m.max_size() < task.size {
                return Err(Error::Config(format!(
                    "model ceiling {} is below size {}",
                    m.max_size(),
                    task.size
                )));
            }
            Some(m.make_env()?)
        }
        _ => None,
    };

    let mut times = Vec::with_capacity(task.runs);
    let mut iterations = 0u64;
    let mut failures = 0;
    for run in 0..task.runs {
        let config = run_config(&cs, task.size, task.seed, run)?;
        let seed = run_seed(task.seed, run);
        let start = Instant::now();
        let (ok, iters) = match task.method {
            Method::RandomSearch => {
                let (_, st) = random_search(&cs, &config, task.size, seed, budgets.random_toggles)?;
                (st.success, st.iterations)
            }
            Method::Ea => {
                let params = EAParams {
                    max_generations: budgets.ea_generations,
                    ..EAParams::with_seed(seed)
                };
                let (_, st) = ea_generate(&cs, &config, task.size, &params)?;
                (st.success, st.iterations)
            }
            Method::TrainedModel => {
                let env = env.as_mut().expect("model environment");
                let m = model.expect("model");
                let mut ok = false;
                let mut iters = 0u64;
                for attempt in 0..budgets.model_attempts.max(1) {
                    let s = seed.wrapping_add(attempt as u64);
                    let (g, trace) = generate_in(env, &m.model, &config, s, GenerateOptions::default())?;
                    iters += trace.iterations as u64;
                    if trace.valid {
                        debug_assert!(cs.is_valid(&g));
                        ok = true;
                        break;
                    }
                }
                (ok, iters)
            }
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        iterations += iters;
        if ok {
            times.push(elapsed);
        } else {
            failures += 1;
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchRow {
        method: task.method,
        set: task.set,
        size: task.size,
        runs: task.runs,
        validity_rate: times.len() as f64 / task.runs as f64,
        mean_iterations: iterations as f64 / task.runs as f64,
        median_ms: quantile(&times, 0.5),
        p25_ms: quantile(&times, 0.25),
        p75_ms: quantile(&times, 0.75),
        failures,
    })
}

/// Greedy generation over `n_samples` uniformly sampled configurations.
/// Returns `(fraction valid, mean episode iterations)`.
pub fn validity_rate(artifact: &ModelArtifact, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(Error::Config("validity needs at least one sample".into()));
    }
    let mut env = artifact.make_env()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut valid = 0usize;
    let mut iterations = 0usize;
    for _ in 0..n_samples {
        let config = sample_configuration_with(&artifact.constraints, artifact.max_size(), &mut rng)?;
        let (g, trace) = generate_in(&mut env, &artifact.model, &config, rng.random(), GenerateOptions::default())?;
        debug_assert_eq!(trace.valid, artifact.constraints.is_valid(&g));
        valid += trace.valid as usize;
        iterations += trace.iterations;
    }
    Ok((valid as f64 / n_samples as f64, iterations as f64 / n_samples as f64))
}

/// Validity summary for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityRow {
    pub set: usize,
    pub max_size: usize,
    pub representation: String,
    pub samples: usize,
    pub validity_rate: f64,
    pub mean_iterations: f64,
}

/// Runs tasks in order, or on one thread per task when `parallel`.
pub fn run_tasks(
    tasks: &[BenchTask],
    model_for: &(dyn Fn(&BenchTask) -> Option<ModelArtifact> + Sync),
    budgets: &Budgets,
    parallel: bool,
) -> Result<Vec<BenchRow>> {
    let one = |t: &BenchTask| {
        let model = if t.method == Method::TrainedModel { model_for(t) } else { None };
        time_to_valid(t, model.as_ref(), budgets)
    };
    if !parallel {
        return tasks.iter().map(one).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks.iter().map(|t| s.spawn(move || one(t))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::Training("benchmark thread panicked".into()))?)
            .collect()
    })
}

fn fmt_ms(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Markdown table: one line per (set, size), one median column per method.
pub fn markdown_table(rows: &[BenchRow]) -> String {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.set, r.size)).collect();
    keys.sort();
    keys.dedup();

    let mut out = String::from("| Set | Size |");
    for m in &methods {
        let _ = write!(out, " {m} (median ms) |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(methods.len()));
    out.push('\n');
    for (set, size) in keys {
        let _ = write!(out, "| {set} | {size} |");
        for m in &methods {
            let cell = rows
                .iter()
                .find(|r| r.method == *m && r.set == set && r.size == size)
                .map(|r| {
                    if r.failures > 0 {
                        format!("{} ({} failed)", fmt_ms(r.median_ms), r.failures)
                    } else {
                        fmt_ms(r.median_ms)
                    }
                })
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

/// Writes `bench.csv` and `bench.md` into `dir`; returns their paths.
pub fn emit_report(rows: &[BenchRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config("nothing to report".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("bench.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let md_path = dir.join("bench.md");
    std::fs::write(&md_path, markdown_table(rows))?;
    Ok(vec![csv_path, md_path])
}

pub fn emit_validity(rows: &[ValidityRow], dir: impl AsRef<Path>) -> Result<PathBuf> {
    if rows.is_empty() {
        return Err(Error::Config("nothing to report".into()));
    }
    std::fs::create_dir_all(dir.as_ref())?;
    let path = dir.as_ref().join("validity.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, set: usize, size: usize, median: f64) -> BenchRow {
        BenchRow {
            method,
            set,
            size,
            runs: 3,
            validity_rate: 1.0,
            mean_iterations: 2.5,
            median_ms: Some(median),
            p25_ms: Some(median / 2.0),
            p75_ms: None,
            failures: 0,
        }
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[], 0.5), None);
        assert_eq!(quantile(&[3.0], 0.25), Some(3.0));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.5));
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("random".parse::<Method>().unwrap(), Method::RandomSearch);
        assert!("gradient".parse::<Method>().is_err());
    }

    #[test]
    fn table_shape_and_csv_round_trip() {
        let mut rows = Vec::new();
        for set in 1..=5 {
            for size in 5..=7 {
                for m in Method::ALL {
                    rows.push(row(m, set, size, (set * size) as f64));
                }
            }
        }
        let md = markdown_table(&rows);
        assert_eq!(md.lines().count(), 2 + 15);
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&rows, dir.path()).unwrap();
        assert_eq!(read_report(&paths[0]).unwrap(), rows);
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r");
        assert!(emit_report(&[], &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn baseline_rows_are_deterministic_apart_from_time() {
        let b = Budgets::default();
        for method in [Method::RandomSearch, Method::Ea] {
            let task = BenchTask { method, set: 5, size: 5, runs: 10, seed: 3 };
            let x = time_to_valid(&task, None, &b).unwrap();
            let y = time_to_valid(&task, None, &b).unwrap();
            assert_eq!(x.validity_rate, 1.0);
            assert_eq!(x.failures, 0);
            assert_eq!(x.mean_iterations, y.mean_iterations);
        }
        let task = BenchTask { method: Method::TrainedModel, set: 5, size: 5, runs: 1, seed: 0 };
        assert!(time_to_valid(&task, None, &b).is_err());
    }

    #[test]
    fn exhausted_budget_counts_as_failure() {
        let b = Budgets { random_toggles: 1, ..Budgets::default() };
        let task = BenchTask { method: Method::RandomSearch, set: 2, size: 7, runs: 5, seed: 0 };
        let r = time_to_valid(&task, None, &b).unwrap();
        assert!(r.failures > 0);
        assert_eq!(r.failures + (r.validity_rate * 5.0).round() as usize, 5);
    }
}
