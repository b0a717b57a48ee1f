//! Tabular learning-curve benchmarks and synthetic curve generators.
//!
//! File format, one record per line:
//!
//! ```text
//! r_max=<int> orientation=<lower_better|higher_better> [optimum=<key>]
//! config <key> <name>=<value> ...
//! <step> <metric> <cost>        (r_max lines, steps 1..=r_max)
//! ```
//!
//! Metrics of `higher_better` files are negated on load so every objective is
//! a loss; [`BenchmarkTable::report`] undoes the negation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveFamily, CurveModel};
use crate::history::{History, Objective, ObjectiveError};
use crate::space::{Configuration, DomainKind, HyperparameterDomain, Scale, SearchSpace, Value};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("{invariant}: {detail}")]
    Validation { invariant: &'static str, detail: String },
}

fn parse_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> BenchError {
    BenchError::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn validation(invariant: &'static str, detail: impl Into<String>) -> BenchError {
    BenchError::Validation {
        invariant,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LowerBetter => "lower_better",
            Orientation::HigherBetter => "higher_better",
        }
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower_better" => Ok(Orientation::LowerBetter),
            "higher_better" => Ok(Orientation::HigherBetter),
            other => Err(format!("unknown orientation `{other}`")),
        }
    }
}

/// One tabulated configuration. `losses[r - 1]` and `costs[r - 1]` describe step `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub key: String,
    /// `name=value` pairs exactly as written in the file.
    pub params: Vec<(String, String)>,
    pub losses: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    r_max: u32,
    orientation: Orientation,
    entries: Vec<TableEntry>,
    optimum: Option<String>,
    space: SearchSpace,
    configs: Vec<Configuration>,
}

impl BenchmarkTable {
    /// Builds and validates a table. Losses must already be loss-oriented.
    pub fn new(
        r_max: u32,
        orientation: Orientation,
        entries: Vec<TableEntry>,
        optimum: Option<String>,
    ) -> Result<Self, BenchError> {
        if r_max == 0 {
            return Err(validation("r_max", "must be positive"));
        }
        if entries.is_empty() {
            return Err(validation("non-empty", "table has no configurations"));
        }
        let mut keys = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if keys.insert(e.key.as_str(), i).is_some() {
                return Err(validation("unique keys", format!("duplicate key `{}`", e.key)));
            }
            if e.losses.len() != r_max as usize || e.costs.len() != r_max as usize {
                return Err(validation(
                    "curve length",
                    format!("config `{}` has {} entries, expected {r_max}", e.key, e.losses.len()),
                ));
            }
            if e.losses.iter().any(|v| !v.is_finite()) {
                return Err(validation("finite metrics", format!("config `{}`", e.key)));
            }
            if e.costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(validation("positive costs", format!("config `{}`", e.key)));
            }
        }
        if let Some(k) = &optimum {
            if !keys.contains_key(k.as_str()) {
                return Err(validation("optimum key", format!("`{k}` is not a configuration")));
            }
        }
        let (space, configs) = infer_space(&entries)?;
        Ok(Self {
            r_max,
            orientation,
            entries,
            optimum,
            space,
            configs,
        })
    }

    pub fn r_max(&self) -> u32 {
        self.r_max
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn configuration(&self, index: usize) -> &Configuration {
        &self.configs[index]
    }

    /// Ground-truth best configuration key, when known (synthetic tables).
    pub fn optimum_key(&self) -> Option<&str> {
        self.optimum.as_deref()
    }

    /// Lowest loss at `r_max` over all configurations: the regret reference.
    pub fn best_final_loss(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.losses[self.r_max as usize - 1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Converts a loss back into the file's metric orientation.
    pub fn report(&self, loss: f64) -> f64 {
        match self.orientation {
            Orientation::LowerBetter => loss,
            Orientation::HigherBetter => -loss,
        }
    }

    /// Configuration `index` expressed in `space`: numeric domains parse the
    /// tabulated text as a number, categorical domains take it as a label.
    pub fn configuration_in(&self, index: usize, space: &SearchSpace) -> Result<Configuration, BenchError> {
        let e = &self.entries[index];
        let mut c = Configuration::new();
        for d in space.domains() {
            let text = e
                .params
                .iter()
                .find(|(n, _)| n == d.name())
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| validation("space matches table", format!("config `{}` has no `{}`", e.key, d.name())))?;
            let value = match d.kind() {
                DomainKind::Categorical { .. } => Value::Label(text.to_string()),
                _ => Value::Number(text.parse().map_err(|_| {
                    validation("space matches table", format!("config `{}`: `{}={text}` is not numeric", e.key, d.name()))
                })?),
            };
            c.insert(d.name(), value);
        }
        space
            .validate(&c)
            .map_err(|err| validation("space matches table", format!("config `{}`: {err}", e.key)))?;
        Ok(c)
    }
}

/// Derives a search space from the key lines: a column whose values all parse
/// as integers becomes an integer domain, all-numeric columns become
/// continuous, everything else categorical (choices in order of appearance).
fn infer_space(entries: &[TableEntry]) -> Result<(SearchSpace, Vec<Configuration>), BenchError> {
    let names: Vec<&str> = entries[0].params.iter().map(|(n, _)| n.as_str()).collect();
    for e in entries {
        let these: Vec<&str> = e.params.iter().map(|(n, _)| n.as_str()).collect();
        if these != names {
            return Err(validation(
                "consistent parameters",
                format!("config `{}` does not list the same parameters as `{}`", e.key, entries[0].key),
            ));
        }
    }
    let mut domains = Vec::new();
    let mut numeric = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let texts: Vec<&str> = entries.iter().map(|e| e.params[j].1.as_str()).collect();
        let ints: Option<Vec<i64>> = texts.iter().map(|t| t.parse().ok()).collect();
        let floats: Option<Vec<f64>> = texts
            .iter()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let domain = match (ints, floats) {
            (Some(v), _) if v.iter().min() < v.iter().max() => {
                let (lo, hi) = (*v.iter().min().unwrap(), *v.iter().max().unwrap());
                numeric.push(true);
                HyperparameterDomain::integer(*name, lo, hi, Scale::Linear)
            }
            (None, Some(v)) if v.iter().any(|x| *x != v[0]) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                numeric.push(true);
                HyperparameterDomain::continuous(*name, lo, hi, Scale::Linear)
            }
            _ => {
                let mut choices: Vec<&str> = Vec::new();
                for t in &texts {
                    if !choices.contains(t) {
                        choices.push(t);
                    }
                }
                numeric.push(false);
                HyperparameterDomain::categorical(*name, choices)
            }
        }
        .map_err(|e| validation("valid configuration", e.to_string()))?;
        domains.push(domain);
    }
    let space = SearchSpace::new(domains).map_err(|e| validation("valid configuration", e.to_string()))?;
    let configs = entries
        .iter()
        .map(|e| {
            let mut c = Configuration::new();
            for ((name, text), is_num) in e.params.iter().zip(&numeric) {
                let v = if *is_num {
                    Value::Number(text.parse().expect("checked numeric"))
                } else {
                    Value::Label(text.clone())
                };
                c.insert(name.clone(), v);
            }
            c
        })
        .collect();
    Ok((space, configs))
}

pub fn parse_table(text: &str) -> Result<BenchmarkTable, BenchError> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l)).peekable();
    // a single trailing newline is allowed, nothing else
    let total = text.split('\n').count();
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "header", "empty file"))?;
    let mut r_max = None;
    let mut orientation = None;
    let mut optimum = None;
    for tok in header.split(' ') {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(ln, tok, "expected key=value"))?;
        match k {
            "r_max" if r_max.is_none() => {
                r_max = Some(v.parse::<u32>().map_err(|e| parse_err(ln, "r_max", e.to_string()))?);
            }
            "orientation" if orientation.is_none() => {
                orientation = Some(v.parse::<Orientation>().map_err(|e| parse_err(ln, "orientation", e))?);
            }
            "optimum" if optimum.is_none() && !v.is_empty() => optimum = Some(v.to_string()),
            _ => return Err(parse_err(ln, k, "unexpected or repeated header field")),
        }
    }
    let r_max = r_max.ok_or_else(|| parse_err(ln, "r_max", "missing"))?;
    let orientation = orientation.ok_or_else(|| parse_err(ln, "orientation", "missing"))?;
    let sign = if orientation == Orientation::HigherBetter { -1.0 } else { 1.0 };

    let mut entries: Vec<TableEntry> = Vec::new();
    while let Some((ln, line)) = lines.next() {
        if line.is_empty() && ln == total {
            break;
        }
        let mut fields = line.split(' ');
        if fields.next() != Some("config") {
            if entries.last().is_some() && line.split(' ').next().is_some_and(|s| s.parse::<u32>().is_ok()) {
                return Err(validation("curve length", format!("line {ln}: more than {r_max} steps")));
            }
            return Err(parse_err(ln, "config", "expected a `config <key> ...` line"));
        }
        let key = fields
            .next()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| parse_err(ln, "key", "missing configuration key"))?;
        let mut params = Vec::new();
        for tok in fields {
            let (n, v) = tok
                .split_once('=')
                .filter(|(n, v)| !n.is_empty() && !v.is_empty())
                .ok_or_else(|| parse_err(ln, tok, "expected name=value"))?;
            if params.iter().any(|(p, _): &(String, String)| p == n) {
                return Err(parse_err(ln, n, "repeated parameter"));
            }
            params.push((n.to_string(), v.to_string()));
        }
        let mut losses = Vec::with_capacity(r_max as usize);
        let mut costs = Vec::with_capacity(r_max as usize);
        for step in 1..=r_max {
            let is_step = lines
                .peek()
                .is_some_and(|(_, l)| !l.is_empty() && !l.starts_with("config"));
            if !is_step {
                return Err(validation(
                    "curve length",
                    format!("config `{key}` has {} entries, expected {r_max}", step - 1),
                ));
            }
            let (ln, line) = lines.next().unwrap();
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "step", "expected `<step> <metric> <cost>`"));
            }
            let s: u32 = f[0].parse().map_err(|_| parse_err(ln, "step", "not an integer"))?;
            if s != step {
                return Err(parse_err(ln, "step", format!("expected step {step}, got {s}")));
            }
            let m: f64 = f[1].parse().map_err(|_| parse_err(ln, "metric", "not a number"))?;
            let c: f64 = f[2].parse().map_err(|_| parse_err(ln, "cost", "not a number"))?;
            losses.push(sign * m);
            costs.push(c);
        }
        entries.push(TableEntry {
            key: key.to_string(),
            params,
            losses,
            costs,
        });
    }
    BenchmarkTable::new(r_max, orientation, entries, optimum)
}

pub fn format_table(table: &BenchmarkTable) -> String {
    let mut out = format!("r_max={} orientation={}", table.r_max, table.orientation.as_str());
    if let Some(k) = &table.optimum {
        write!(out, " optimum={k}").unwrap();
    }
    out.push('\n');
    for e in &table.entries {
        write!(out, "config {}", e.key).unwrap();
        for (n, v) in &e.params {
            write!(out, " {n}={v}").unwrap();
        }
        out.push('\n');
        for (i, (l, c)) in e.losses.iter().zip(&e.costs).enumerate() {
            writeln!(out, "{} {} {}", i + 1, table.report(*l), c).unwrap();
        }
    }
    out
}

pub fn load_table(path: &Path) -> Result<BenchmarkTable, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text)
}

pub fn write_table(table: &BenchmarkTable, path: &Path) -> Result<(), BenchError> {
    crate::experiment::write_atomic(path, format_table(table).as_bytes()).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_configs: usize,
    pub family: CurveFamily,
    pub a: Range,
    /// Ignored by the `log2` family.
    pub b: Range,
    pub c: Range,
    #[serde(default)]
    pub noise_sd: f64,
    pub r_max: u32,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_configs == 0 {
            return Err(validation("n_configs", "must be positive"));
        }
        if self.r_max == 0 {
            return Err(validation("r_max", "must be positive"));
        }
        if !(self.a.valid() && self.b.valid() && self.c.valid()) {
            return Err(validation("parameter ranges", "need finite lo <= hi"));
        }
        if self.a.lo < 0.0 {
            return Err(validation("parameter ranges", "a must be non-negative"));
        }
        if self.family != CurveFamily::Log2 && self.b.lo <= 0.0 {
            return Err(validation("parameter ranges", "b must be positive"));
        }
        let c_range = self.c.hi - self.c.lo;
        if !(self.noise_sd >= 0.0 && (self.noise_sd == 0.0 || self.noise_sd < 0.5 * c_range)) {
            return Err(validation(
                "noise level",
                format!("noise_sd must be 0 or below half the c range ({})", 0.5 * c_range),
            ));
        }
        Ok(())
    }

    /// The noiseless generating curve of every configuration, in table order.
    pub fn models(&self) -> Vec<CurveModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_configs)
            .map(|_| {
                let a = self.a.sample(&mut rng);
                let b = self.b.sample(&mut rng);
                let c = self.c.sample(&mut rng);
                CurveModel::new(self.family, a, b, c).expect("validated ranges")
            })
            .collect()
    }
}

/// Samples a synthetic table. Configurations are keyed `0..n` with a single
/// integer parameter `arm`; the recorded optimum is the argmin of the
/// noiseless asymptotes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<BenchmarkTable, BenchError> {
    spec.validate()?;
    let models = spec.models();
    // noise uses its own stream so the curve parameters do not depend on it
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let mut entries = Vec::with_capacity(models.len());
    let mut best = (f64::INFINITY, 0);
    for (i, m) in models.iter().enumerate() {
        if m.asymptote() < best.0 {
            best = (m.asymptote(), i);
        }
        let losses = (1..=spec.r_max)
            .map(|r| {
                let v = m.predict(f64::from(r));
                if spec.noise_sd > 0.0 {
                    v + noise.sample(&mut noise_rng)
                } else {
                    v
                }
            })
            .collect();
        entries.push(TableEntry {
            key: i.to_string(),
            params: vec![("arm".to_string(), i.to_string())],
            losses,
            costs: vec![1.0; spec.r_max as usize],
        });
    }
    BenchmarkTable::new(spec.r_max, Orientation::LowerBetter, entries, Some(best.1.to_string()))
}

/// Table lookup objective: `evaluate(config, r)` is the tabulated loss at step
/// `r` of the tabulated configuration nearest to `config` in encoded space
/// (lowest index on ties).
pub struct TableObjective<'a> {
    table: &'a BenchmarkTable,
    space: SearchSpace,
    configs: Vec<Configuration>,
    encodings: Vec<Vec<f64>>,
}

impl<'a> TableObjective<'a> {
    /// Proposals come from the table's own inferred space.
    pub fn new(table: &'a BenchmarkTable) -> Self {
        Self::with_space(table, table.space().clone()).expect("a table is valid in its own space")
    }

    /// Proposals come from `space`, whose domain names must match the table's
    /// parameters and contain every tabulated configuration.
    pub fn with_space(table: &'a BenchmarkTable, space: SearchSpace) -> Result<Self, BenchError> {
        let configs = (0..table.len())
            .map(|i| table.configuration_in(i, &space))
            .collect::<Result<Vec<_>, _>>()?;
        let encodings = configs
            .iter()
            .map(|c| space.encode(c).expect("validated against the space"))
            .collect();
        Ok(Self {
            table,
            space,
            configs,
            encodings,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn table(&self) -> &'a BenchmarkTable {
        self.table
    }

    pub fn nearest(&self, config: &Configuration) -> Result<usize, ObjectiveError> {
        if let Some(i) = self.configs.iter().position(|c| c == config) {
            return Ok(i);
        }
        let x = self
            .space
            .encode(config)
            .map_err(|e| ObjectiveError::new(format!("configuration outside the search space: {e}")))?;
        let mut best = (f64::INFINITY, 0);
        for (i, y) in self.encodings.iter().enumerate() {
            let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }

    fn entry(&self, config: &Configuration, resource: u32) -> Result<&TableEntry, ObjectiveError> {
        if resource == 0 || resource > self.table.r_max {
            return Err(ObjectiveError::new(format!(
                "resource {resource} outside 1..={}",
                self.table.r_max
            )));
        }
        Ok(&self.table.entries[self.nearest(config)?])
    }
}

impl Objective for TableObjective<'_> {
    fn evaluate(&self, config: &Configuration, resource: u32) -> Result<f64, ObjectiveError> {
        Ok(self.entry(config, resource)?.losses[resource as usize - 1])
    }

    fn step_cost(&self, config: &Configuration, resource: u32) -> f64 {
        self.entry(config, resource).map_or(1.0, |e| e.costs[resource as usize - 1])
    }
}

/// `(time, regret)` after every event, regret measured against the best
/// final-fidelity loss of the table and floored at 0. When the budget is
/// finite and not fully used, a closing point at the budget is appended.
pub fn regret_trace(history: &History, table: &BenchmarkTable) -> Vec<(f64, f64)> {
    let reference = table.best_final_loss();
    let mut trace: Vec<(f64, f64)> = history
        .incumbent_trace
        .iter()
        .map(|p| (p.time, (p.incumbent - reference).max(0.0)))
        .collect();
    if let Some(&(t, r)) = trace.last() {
        if history.budget.is_finite() && history.budget > t {
            trace.push((history.budget, r));
        }
    }
    trace
}

/// First time at which the regret is at most `threshold`.
pub fn time_to_regret(trace: &[(f64, f64)], threshold: f64) -> Option<f64> {
    trace.iter().find(|(_, r)| *r <= threshold).map(|(t, _)| *t)
}
