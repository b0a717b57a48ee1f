//! Experiment configs and the commands behind the `fastbo` binary.
//!
//! A config is a TOML file:
//!
//! ```toml
//! method = "fastbo"            # `run`; `compare` takes `methods = [...]`
//! budget = 300
//! seeds = [0, 1, 2]
//! threshold = 0.01             # regret threshold for time-to-threshold
//! r_min = 1
//! benchmark = "bench.txt"      # or a [synthetic] table
//!
//! [fastbo]                     # scheduler knobs
//! [bo]                         # n_init, n_candidates
//! [sha]                        # eta, n (shared by sha and hyperband)
//!
//! [[space]]                    # optional; inferred from the benchmark if absent
//! name = "lr"
//! kind = "continuous"
//! bounds = [0.0001, 0.1]
//! scale = "log"
//! ```
//!
//! Any key can be overridden with `key=value` (dotted keys reach into
//! sections). Relative benchmark paths resolve against the config file.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{bo_full, hyperband, random_search, successive_halving, ShaConfig};
use crate::bench::{format_table, generate_synthetic, load_table, regret_trace, time_to_regret, BenchmarkTable};
use crate::bench::{SyntheticSpec, TableObjective};
use crate::history::History;
use crate::scheduler::{FastBo, OptimizerConfig, RunError};
use crate::space::SearchSpace;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flags or input files. Exit status 1.
    #[error("{0}")]
    Config(String),
    /// A run failed. Exit status 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fastbo,
    Rs,
    Bo,
    Sha,
    Hyperband,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fastbo => "fastbo",
            Method::Rs => "rs",
            Method::Bo => "bo",
            Method::Sha => "sha",
            Method::Hyperband => "hyperband",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fastbo" => Ok(Method::Fastbo),
            "rs" => Ok(Method::Rs),
            "bo" => Ok(Method::Bo),
            "sha" => Ok(Method::Sha),
            "hyperband" => Ok(Method::Hyperband),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSection {
    pub n_init: usize,
    pub n_candidates: usize,
}

impl Default for BoSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            n_init: d.n_init,
            n_candidates: d.n_candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShaSection {
    pub eta: u32,
    /// Initial population of `sha`; defaults to `eta^s_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Default for ShaSection {
    fn default() -> Self {
        Self { eta: 3, n: None }
    }
}

fn default_threshold() -> f64 {
    0.01
}

fn default_r_min() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<Method>,
    pub budget: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_r_min")]
    pub r_min: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Search space to optimize over; defaults to the one inferred from the
    /// benchmark. Proposals snap to the nearest tabulated configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    #[serde(default)]
    pub fastbo: OptimizerConfig,
    #[serde(default)]
    pub bo: BoSection,
    #[serde(default)]
    pub sha: ShaSection,
}

impl ExperimentConfig {
    /// Parses a config (or a run manifest, whose `[config]` table is used),
    /// applies `key=value` overrides and resolves relative paths against
    /// `base_dir`.
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("config: {e}")))?;
        if table.contains_key("tool_version") {
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(config_err("manifest has no [config] table")),
            };
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| config_err(format!("config: {e}")))?;
        if let Some(p) = &cfg.benchmark {
            if p.is_relative() {
                cfg.benchmark = Some(base_dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // absolute, so that the manifest still points at the benchmark when
        // read from another directory
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
        let base = std::path::absolute(parent.unwrap_or(Path::new(".")))
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text, overrides, &base)
    }

    /// The methods this config asks for, in listed order.
    pub fn method_list(&self) -> Vec<Method> {
        match self.method {
            Some(m) => vec![m],
            None => self.methods.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (self.method.is_some(), self.methods.is_empty()) {
            (true, false) => return Err(config_err("give either `method` or `methods`, not both")),
            (false, true) => return Err(config_err("no method given")),
            _ => {}
        }
        let unique: BTreeSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(config_err("`methods` contains duplicates"));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(config_err("`budget` must be a positive number"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("`seeds` must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(config_err("`seeds` contains duplicates"));
        }
        if !(self.threshold >= 0.0) {
            return Err(config_err("`threshold` must be non-negative"));
        }
        if self.r_min == 0 {
            return Err(config_err("`r_min` must be positive"));
        }
        match (&self.benchmark, &self.synthetic) {
            (Some(_), Some(_)) => return Err(config_err("give either `benchmark` or [synthetic], not both")),
            (None, None) => return Err(config_err("no benchmark given")),
            (None, Some(s)) => s.validate().map_err(|e| config_err(format!("synthetic: {e}")))?,
            _ => {}
        }
        self.fastbo.validate().map_err(|e| config_err(format!("fastbo: {e}")))?;
        if self.bo.n_init == 0 || self.bo.n_candidates == 0 {
            return Err(config_err("bo: `n_init` and `n_candidates` must be positive"));
        }
        if self.sha.eta < 2 {
            return Err(config_err("sha: `eta` must be at least 2"));
        }
        if self.sha.n == Some(0) {
            return Err(config_err("sha: `n` must be positive"));
        }
        Ok(())
    }

    /// Loads or generates the benchmark, returning it with the SHA-256 of its
    /// file representation.
    pub fn benchmark_table(&self) -> Result<(BenchmarkTable, String), CliError> {
        if let Some(path) = &self.benchmark {
            let bytes = std::fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let table = load_table(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Ok((table, sha256_hex(&bytes)))
        } else {
            let spec = self.synthetic.as_ref().ok_or_else(|| config_err("no benchmark given"))?;
            let table = generate_synthetic(spec).map_err(|e| config_err(format!("synthetic: {e}")))?;
            let hash = sha256_hex(format_table(&table).as_bytes());
            Ok((table, hash))
        }
    }

    fn check_against(&self, table: &BenchmarkTable) -> Result<(), CliError> {
        self.objective(table)?;
        let r_max = table.r_max();
        if self.r_min > r_max {
            return Err(config_err(format!("`r_min` {} exceeds the benchmark's r_max {r_max}", self.r_min)));
        }
        if self.method_list().iter().any(|m| matches!(m, Method::Sha | Method::Hyperband)) {
            ShaConfig::new(self.sha.eta, self.r_min, r_max).map_err(|e| config_err(format!("sha: {e}")))?;
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn objective<'t>(&self, table: &'t BenchmarkTable) -> Result<TableObjective<'t>, CliError> {
        match &self.space {
            Some(space) => TableObjective::with_space(table, space.clone()).map_err(|e| config_err(format!("space: {e}"))),
            None => Ok(TableObjective::new(table)),
        }
    }
}

/// Applies one `key=value` override. The value is read as a TOML value,
/// falling back to a plain string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{spec}` is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Runs one method on one seed.
pub fn run_method(
    method: Method,
    cfg: &ExperimentConfig,
    objective: &TableObjective<'_>,
    seed: u64,
) -> Result<History, RunError> {
    let table = objective.table();
    let space = objective.space();
    let r_max = table.r_max();
    let sha = || ShaConfig::new(cfg.sha.eta, cfg.r_min, r_max);
    match method {
        Method::Fastbo => {
            let opt = OptimizerConfig {
                seed,
                ..cfg.fastbo.clone()
            };
            FastBo::new(opt)?.run(objective, space, cfg.r_min, r_max, cfg.budget)
        }
        Method::Rs => random_search(space, objective, r_max, cfg.budget, seed),
        Method::Bo => bo_full(space, objective, r_max, cfg.budget, seed, cfg.bo.n_init, cfg.bo.n_candidates),
        Method::Sha => {
            let sha = sha()?;
            let n = cfg.sha.n.unwrap_or_else(|| (sha.eta as usize).pow(sha.s_max()));
            successive_halving(space, objective, sha, n, seed)
        }
        Method::Hyperband => hyperband(space, objective, sha()?, cfg.budget, seed),
    }
}

/// Outcome of one (method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_regret: Option<f64>,
    /// Omitted when the threshold was never reached.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_to_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    command: &'static str,
    benchmark_sha256: String,
    config: &'a ExperimentConfig,
    runs: Vec<RunRecord>,
}

struct RunOutput {
    record: RunRecord,
    trace: Vec<(f64, f64)>,
}

fn trace_file_name(method: Method, seed: u64) -> String {
    format!("trace_{method}_seed{seed}.csv")
}

fn trace_csv(history: &History, table: &BenchmarkTable, regret: &[(f64, f64)]) -> String {
    let mut out = String::from("time,incumbent,regret\n");
    for (p, (t, r)) in history.incumbent_trace.iter().zip(regret) {
        writeln!(out, "{},{},{}", t, table.report(p.incumbent), r).unwrap();
    }
    // closing point at the budget, if any
    if regret.len() > history.incumbent_trace.len() {
        let (t, r) = regret[regret.len() - 1];
        let inc = history.final_incumbent().map_or(f64::NAN, |v| table.report(v));
        writeln!(out, "{t},{inc},{r}").unwrap();
    }
    out
}

fn execute(
    method: Method,
    seed: u64,
    cfg: &ExperimentConfig,
    table: &BenchmarkTable,
    out_dir: &Path,
) -> Result<RunOutput, CliError> {
    let mut record = RunRecord {
        method,
        seed,
        status: "ok".into(),
        error: None,
        trace: None,
        final_regret: None,
        time_to_threshold: None,
        total_time: None,
        trials: None,
    };
    let objective = cfg.objective(table)?;
    let history = match run_method(method, cfg, &objective, seed) {
        Ok(h) => h,
        Err(e) => {
            record.status = "failed".into();
            record.error = Some(format!("{method} seed {seed}: {e}"));
            return Ok(RunOutput { record, trace: Vec::new() });
        }
    };
    let regret = regret_trace(&history, table);
    let name = trace_file_name(method, seed);
    write_output(&out_dir.join(&name), &trace_csv(&history, table, &regret))?;
    record.trace = Some(name);
    record.final_regret = regret.last().map(|p| p.1);
    record.time_to_threshold = time_to_regret(&regret, cfg.threshold);
    record.total_time = Some(history.total_time());
    record.trials = Some(history.trials.len());
    if let Some(f) = history.failures.first() {
        record.status = "failed".into();
        record.error = Some(format!(
            "{method} seed {seed}: trial {} failed at resource {}: {}",
            f.trial, f.resource, f.message
        ));
    }
    Ok(RunOutput { record, trace: regret })
}

/// Runs every (method, seed) pair, in parallel when cores are available.
/// Results come back in (method, seed) order regardless of scheduling.
fn execute_all(
    cfg: &ExperimentConfig,
    table: &BenchmarkTable,
    out_dir: &Path,
) -> Result<Vec<RunOutput>, CliError> {
    let jobs: Vec<(Method, u64)> = cfg
        .method_list()
        .into_iter()
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput, CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, s)) = jobs.get(i) else { break };
                let out = execute(m, s, cfg, table, out_dir);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn prepare(config: &Path, out_dir: &Path, overrides: &[String]) -> Result<(ExperimentConfig, BenchmarkTable, String), CliError> {
    let cfg = ExperimentConfig::load(config, overrides)?;
    cfg.validate()?;
    let (table, hash) = cfg.benchmark_table()?;
    cfg.check_against(&table)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    Ok((cfg, table, hash))
}

fn finish(
    command: &'static str,
    cfg: &ExperimentConfig,
    hash: String,
    outputs: &[RunOutput],
    out_dir: &Path,
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        benchmark_sha256: hash,
        config: cfg,
        runs: outputs.iter().map(|o| o.record.clone()).collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
    write_output(&out_dir.join("manifest.toml"), &text)?;
    let failures: Vec<&str> = outputs.iter().filter_map(|o| o.record.error.as_deref()).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} runs failed; first: {}",
            failures.len(),
            outputs.len(),
            failures[0]
        )))
    }
}

/// `run`: one method, one trace per seed, plus `manifest.toml`.
pub fn cmd_run(config: &Path, out_dir: &Path, overrides: &[String]) -> Result<(), CliError> {
    let (cfg, table, hash) = prepare(config, out_dir, overrides)?;
    if cfg.method.is_none() {
        return Err(config_err("`run` takes a single `method`; use `compare` for several"));
    }
    let outputs = execute_all(&cfg, &table, out_dir)?;
    finish("run", &cfg, hash, &outputs, out_dir)
}

/// `compare`: every (method, seed) trace, `results.csv`, `summary.csv` and
/// `manifest.toml`.
pub fn cmd_compare(config: &Path, out_dir: &Path, overrides: &[String]) -> Result<(), CliError> {
    let (cfg, table, hash) = prepare(config, out_dir, overrides)?;
    if cfg.methods.len() < 2 {
        return Err(config_err("`compare` needs at least two `methods`"));
    }
    let outputs = execute_all(&cfg, &table, out_dir)?;

    let mut results = String::from("method,seed,time,regret\n");
    for o in &outputs {
        for (t, r) in &o.trace {
            writeln!(results, "{},{},{t},{r}", o.record.method, o.record.seed).unwrap();
        }
    }
    write_output(&out_dir.join("results.csv"), &results)?;

    let mut summary =
        String::from("method,runs,failed,median_final_regret,iqr_final_regret,median_time_to_threshold\n");
    for m in cfg.method_list() {
        let ok: Vec<&RunRecord> = outputs
            .iter()
            .map(|o| &o.record)
            .filter(|r| r.method == m && r.final_regret.is_some())
            .collect();
        let failed = outputs.iter().filter(|o| o.record.method == m && o.record.error.is_some()).count();
        let finals: Vec<f64> = ok.iter().filter_map(|r| r.final_regret).collect();
        let times: Vec<f64> = ok
            .iter()
            .map(|r| r.time_to_threshold.unwrap_or(f64::INFINITY))
            .collect();
        writeln!(
            summary,
            "{m},{},{failed},{},{},{}",
            ok.len(),
            median(&finals),
            quantile(&finals, 0.75) - quantile(&finals, 0.25),
            median(&times)
        )
        .unwrap();
    }
    write_output(&out_dir.join("summary.csv"), &summary)?;
    finish("compare", &cfg, hash, &outputs, out_dir)
}

/// `gen-synthetic`: writes the table described by a [`SyntheticSpec`] TOML file.
pub fn cmd_gen_synthetic(spec: &Path, out: &Path, overrides: &[String]) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec).map_err(|e| config_err(format!("{}: {e}", spec.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("{}: {e}", spec.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let spec: SyntheticSpec = toml::Value::Table(table)
        .try_into()
        .map_err(|e| config_err(format!("synthetic spec: {e}")))?;
    let table = generate_synthetic(&spec).map_err(config_err)?;
    write_output(out, &format_table(&table))
}

/// `validate`: parses a benchmark file and describes it in one line.
pub fn cmd_validate(path: &Path) -> Result<String, CliError> {
    let table = load_table(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(format!(
        "{}: ok, {} configurations, r_max={}, orientation={}",
        path.display(),
        table.len(),
        table.r_max(),
        table.orientation().as_str()
    ))
}

/// Linear-interpolation quantile (`NaN` for an empty sample).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || v[lo] == v[hi] {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "method = \"rs\"\nbudget = 30\nseeds = [1, 2]\nbenchmark = \"b.txt\"\n";

    #[test]
    fn parses_and_resolves_paths() {
        let cfg = ExperimentConfig::parse(BASE, &[], Path::new("/data")).unwrap();
        assert_eq!(cfg.benchmark, Some(PathBuf::from("/data/b.txt")));
        assert_eq!(cfg.threshold, 0.01);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_reach_sections() {
        let o = vec!["fastbo.top_m=5".to_string(), "budget=12.5".to_string(), "method=bo".to_string()];
        let cfg = ExperimentConfig::parse(BASE, &o, Path::new(".")).unwrap();
        assert_eq!(cfg.fastbo.top_m, 5);
        assert_eq!(cfg.budget, 12.5);
        assert_eq!(cfg.method, Some(Method::Bo));
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = BASE.replace("[1, 2]", "[1, 1]");
        assert!(ExperimentConfig::parse(&dup, &[], Path::new(".")).unwrap().validate().is_err());
        let empty = BASE.replace("[1, 2]", "[]");
        assert!(ExperimentConfig::parse(&empty, &[], Path::new(".")).unwrap().validate().is_err());
        assert!(ExperimentConfig::parse(&format!("{BASE}bogus = 1\n"), &[], Path::new(".")).is_err());
        let both = format!("{BASE}methods = [\"rs\", \"bo\"]\n");
        assert!(ExperimentConfig::parse(&both, &[], Path::new(".")).unwrap().validate().is_err());
    }

    #[test]
    fn declared_space_round_trips() {
        let text = format!(
            "{BASE}\n[[space]]\nname = \"lr\"\nkind = \"continuous\"\nbounds = [0.0001, 0.1]\nscale = \"log\"\n\n\
             [[space]]\nname = \"opt\"\nkind = \"categorical\"\nchoices = [\"sgd\", \"adam\"]\n"
        );
        let cfg = ExperimentConfig::parse(&text, &[], Path::new("/d")).unwrap();
        assert_eq!(cfg.space.as_ref().unwrap().encoded_dim(), 3);
        let again = ExperimentConfig::parse(&toml::to_string(&cfg).unwrap(), &[], Path::new("/d")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(median(&[1.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&[1.0, 2.0, f64::INFINITY, f64::INFINITY]), f64::INFINITY);
    }
}
