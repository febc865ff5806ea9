//! Named, config-driven sweeps. Every experiment resolves a typed config
//! from defaults, an optional JSON file and `key=value` overrides, runs its
//! jobs through [`crate::par`], and returns a [`SweepResult`] that
//! [`emit_outputs`] turns into CSV tables, SVG plots and a manifest.
//!
//! Outputs depend only on the resolved config: jobs are keyed by their grid
//! coordinates and every random stream is forked from the configured seeds.

mod decomposition;
mod early_stopping;
mod lasso_divergence;
mod regime;
pub mod svg;
mod theorem_oracles;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use decomposition::{run_decomposition, DecompositionConfig, DecompositionResult, DecompositionRun};
pub use early_stopping::{
    run_early_stopping, EarlyStoppingConfig, EarlyStoppingResult, EarlyStoppingRow, EarlyStoppingRun,
};
pub use lasso_divergence::{
    run_lasso_divergence, LassoDivergenceConfig, LassoDivergenceResult, LassoDivergenceRow, LassoRun,
};
pub use regime::{
    beats_baseline, non_decreasing, run_difficulty_table, run_regime_grid, DifficultyConfig, DifficultyResult,
    DifficultyRow, RegimeCell, RegimeConfig, RegimeGrid, RegimeSetup,
};
pub use theorem_oracles::{
    log_log_slope, run_theorem_oracles, OversampledRow, RegimeSize, TheoremOraclesConfig, TheoremOraclesResult,
    UnderdeterminedRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    EarlyStopping,
    RegimeGrid,
    DifficultyTable,
    Decomposition,
    LassoDivergence,
    TheoremOracles,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::EarlyStopping,
        ExperimentId::RegimeGrid,
        ExperimentId::DifficultyTable,
        ExperimentId::Decomposition,
        ExperimentId::LassoDivergence,
        ExperimentId::TheoremOracles,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::EarlyStopping => "early-stopping",
            ExperimentId::RegimeGrid => "regime-grid",
            ExperimentId::DifficultyTable => "difficulty-table",
            ExperimentId::Decomposition => "decomposition",
            ExperimentId::LassoDivergence => "lasso-divergence",
            ExperimentId::TheoremOracles => "theorem-oracles",
        }
    }

    /// Default config of this experiment as JSON.
    pub fn default_config(self) -> Value {
        let v = match self {
            ExperimentId::EarlyStopping => serde_json::to_value(EarlyStoppingConfig::default()),
            ExperimentId::RegimeGrid => serde_json::to_value(RegimeConfig::default()),
            ExperimentId::DifficultyTable => serde_json::to_value(DifficultyConfig::default()),
            ExperimentId::Decomposition => serde_json::to_value(DecompositionConfig::default()),
            ExperimentId::LassoDivergence => serde_json::to_value(LassoDivergenceConfig::default()),
            ExperimentId::TheoremOracles => serde_json::to_value(TheoremOraclesConfig::default()),
        };
        v.expect("default configs serialize")
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|id| id.as_str()).collect();
            Error::Config(format!("unknown experiment `{s}`; expected one of: {}", names.join(", ")))
        })
    }
}

/// A fully resolved experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    EarlyStopping(EarlyStoppingConfig),
    RegimeGrid(RegimeConfig),
    DifficultyTable(DifficultyConfig),
    Decomposition(DecompositionConfig),
    LassoDivergence(LassoDivergenceConfig),
    TheoremOracles(TheoremOraclesConfig),
}

impl ExperimentConfig {
    /// Defaults for `id`, overlaid with `file` (a JSON object), then with
    /// `overrides` (`a.b=value`, value parsed as JSON and otherwise taken as
    /// a string), then with `seed`, which shifts the seed list to start there.
    pub fn resolve(id: ExperimentId, file: Option<&Value>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut file = file.cloned();
        if let Some(Value::Object(obj)) = &mut file {
            if let Some(tag) = obj.remove("experiment") {
                if tag.as_str() != Some(id.as_str()) {
                    return Err(Error::Config(format!("config file is for experiment {tag}, not `{id}`")));
                }
            }
        }
        let mut merged = merge_config(id.default_config(), file.as_ref(), overrides)?;
        if let Some(seed) = seed {
            shift_seeds(&mut merged, seed);
        }
        let cfg = match id {
            ExperimentId::EarlyStopping => ExperimentConfig::EarlyStopping(typed(merged)?),
            ExperimentId::RegimeGrid => ExperimentConfig::RegimeGrid(typed(merged)?),
            ExperimentId::DifficultyTable => ExperimentConfig::DifficultyTable(typed(merged)?),
            ExperimentId::Decomposition => ExperimentConfig::Decomposition(typed(merged)?),
            ExperimentId::LassoDivergence => ExperimentConfig::LassoDivergence(typed(merged)?),
            ExperimentId::TheoremOracles => ExperimentConfig::TheoremOracles(typed(merged)?),
        };
        Ok(cfg)
    }

    pub fn id(&self) -> ExperimentId {
        match self {
            ExperimentConfig::EarlyStopping(_) => ExperimentId::EarlyStopping,
            ExperimentConfig::RegimeGrid(_) => ExperimentId::RegimeGrid,
            ExperimentConfig::DifficultyTable(_) => ExperimentId::DifficultyTable,
            ExperimentConfig::Decomposition(_) => ExperimentId::Decomposition,
            ExperimentConfig::LassoDivergence(_) => ExperimentId::LassoDivergence,
            ExperimentConfig::TheoremOracles(_) => ExperimentId::TheoremOracles,
        }
    }

    pub fn run(&self) -> Result<SweepResult> {
        Ok(match self {
            ExperimentConfig::EarlyStopping(c) => run_early_stopping(c)?.sweep(c),
            ExperimentConfig::RegimeGrid(c) => run_regime_grid(c)?.sweep(c),
            ExperimentConfig::DifficultyTable(c) => run_difficulty_table(c)?.sweep(c),
            ExperimentConfig::Decomposition(c) => run_decomposition(c)?.sweep(c),
            ExperimentConfig::LassoDivergence(c) => run_lasso_divergence(c)?.sweep(c),
            ExperimentConfig::TheoremOracles(c) => run_theorem_oracles(c)?.sweep(c),
        })
    }
}

/// Overlays `file` and then `overrides` (`a.b=value`, value parsed as JSON
/// and otherwise taken as a string) on `defaults`. Keys absent from
/// `defaults` are rejected with the list of valid keys at that level.
pub fn merge_config(defaults: Value, file: Option<&Value>, overrides: &[String]) -> Result<Value> {
    let mut merged = defaults.clone();
    if let Some(file) = file {
        merge_checked(&mut merged, file, &defaults, "")?;
    }
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{ov}` is not of the form key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut merged, &defaults, key, value)?;
    }
    Ok(merged)
}

/// [`merge_config`] over the serialized `T::default()`, then deserialized.
pub fn resolve_typed<T: Serialize + DeserializeOwned + Default>(file: Option<&Value>, overrides: &[String]) -> Result<T> {
    let defaults = serde_json::to_value(T::default())?;
    typed(merge_config(defaults, file, overrides)?)
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn valid_keys(defaults: &Map<String, Value>) -> String {
    defaults.keys().cloned().collect::<Vec<_>>().join(", ")
}

fn join_key(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Recursively overlays `src` on `dst`, rejecting keys absent from `schema`.
/// Objects whose default is itself tagged (an enum) are replaced wholesale.
fn merge_checked(dst: &mut Value, src: &Value, schema: &Value, prefix: &str) -> Result<()> {
    match (dst, src, schema) {
        (Value::Object(d), Value::Object(s), Value::Object(sch)) if !sch.contains_key("kind") => {
            for (k, v) in s {
                let Some(sub) = sch.get(k) else {
                    return Err(Error::Config(format!(
                        "unknown key `{}`; valid keys: {}",
                        join_key(prefix, k),
                        valid_keys(sch)
                    )));
                };
                let slot = d.get_mut(k).expect("defaults and merged share keys");
                merge_checked(slot, v, sub, &join_key(prefix, k))?;
            }
            Ok(())
        }
        (d, s, _) => {
            *d = s.clone();
            Ok(())
        }
    }
}

fn set_path(root: &mut Value, schema: &Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let mut sch = schema;
    let mut prefix = String::new();
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(obj) = sch else {
            return Err(Error::Config(format!("`{prefix}` is not an object; cannot set `{key}`")));
        };
        let Some(next_sch) = obj.get(*part) else {
            return Err(Error::Config(format!(
                "unknown key `{}`; valid keys: {}",
                join_key(&prefix, part),
                valid_keys(obj)
            )));
        };
        prefix = join_key(&prefix, part);
        let slot = cur.get_mut(*part).expect("defaults and merged share keys");
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
        sch = next_sch;
    }
    Err(Error::Config("empty override key".into()))
}

fn shift_seeds(cfg: &mut Value, seed: u64) {
    if let Some(Value::Array(seeds)) = cfg.get_mut("seeds") {
        let n = seeds.len().max(1) as u64;
        *seeds = (seed..seed + n).map(Value::from).collect();
    }
}

/// SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash(cfg: &Value) -> String {
    let bytes = serde_json::to_vec(cfg).expect("json values serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn tool_version() -> String {
    option_env!("STLEARN_GIT_DESCRIBE")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
            Cell::Bool(v) => write!(f, "{v}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// One CSV file: `<name>.csv` with `columns` as header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

/// One SVG file: `<name>.svg`.
#[derive(Debug, Clone, PartialEq)]
pub enum Figure {
    Lines { name: String, axes: Axes, series: Vec<Series> },
    /// Green circle where the verdict holds, red cross where it does not.
    Verdicts { name: String, axes: Axes, points: Vec<(f64, f64, bool)> },
}

impl Figure {
    pub fn name(&self) -> &str {
        match self {
            Figure::Lines { name, .. } | Figure::Verdicts { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: ExperimentId,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub tables: Vec<Table>,
    pub figures: Vec<Figure>,
}

impl SweepResult {
    pub fn new(experiment: ExperimentId, config: &impl Serialize, seeds: &[u64]) -> Self {
        Self {
            experiment,
            config: serde_json::to_value(config).expect("configs serialize"),
            seeds: seeds.to_vec(),
            tables: Vec::new(),
            figures: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn table_csv(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.columns)?;
    for row in &t.rows {
        w.write_record(row.iter().map(|c| c.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

/// Writes every table and figure of `result` into `dir`, followed by
/// `manifest.json`. Returns the written paths in that order.
pub fn emit_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for t in &result.tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_file(&path, &table_csv(t)?)?;
        files.push(path);
    }
    for fig in &result.figures {
        let path = dir.join(format!("{}.svg", fig.name()));
        write_file(&path, svg::render(fig).as_bytes())?;
        files.push(path);
    }
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().expect("joined paths have names").to_string_lossy().into_owned())
        .collect();
    let manifest = serde_json::json!({
        "experiment": result.experiment,
        "version": tool_version(),
        "config_sha256": config_hash(&result.config),
        "seeds": result.seeds,
        "config": result.config,
        "files": names,
    });
    let path = dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_file(&path, &bytes)?;
    files.push(path);
    Ok(files)
}

/// Ranks with ties sharing their average rank, starting at 1.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; NaN when either input is constant or the
/// lengths differ or are below 2.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return f64::NAN;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return f64::NAN;
    }
    cov / (va * vb).sqrt()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean; zero for fewer than two values.
pub(crate) fn std_err(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

pub(crate) fn require_nonempty<T>(what: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("`{what}` must not be empty")));
    }
    Ok(())
}

/// `k` points spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..k).map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64)).collect()
}
