//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//! generations = 300
//! metrics_every = 10
//! output_dir = "runs"
//!
//! [task]
//! name = "arm"
//! n_joints = 1000
//!
//! [archive]
//! cells = [100, 100]
//!
//! [algorithm]
//! name = "memes"
//! n_emitters = 8
//! reset = "adaptive:32"
//!
//! [algorithm.es]
//! sample_count = 128
//! ```
//!
//! Every error names the offending field and the line it was read from.

use std::fmt;
use std::path::{Path, PathBuf};

use memes_core::baselines::{
    memes_sequential, EsFamily, EsFamilyConfig, EsVariant, IsoLineConfig, MapElites, MeEs, MeEsConfig,
};
use memes_core::tasks::{ArmParams, PointTrapParams, Task, TaskConfig, TASK_NAMES};
use memes_core::{BoundedBox, GridSpec, Memes, MemesConfig, QdAlgorithm, ResetPolicy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

pub const ALGORITHM_NAMES: [&str; 9] =
    ["memes", "memes_sequential", "me", "me_sampling", "me_es", "es", "ns_es", "nsr_es", "nsra_es"];

/// Environment variable that replaces `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "MEMES_OUTPUT_ROOT";

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    /// 1-based; 0 when the value did not come from the file.
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: `{}`: {}", self.origin, self.line, self.field, self.message)
        } else {
            write!(f, "{}: `{}`: {}", self.origin, self.field, self.message)
        }
    }
}

/// ME-Sampling parameters: ME variation plus the re-evaluation count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeSamplingConfig {
    pub iso_sigma: f64,
    pub line_sigma: f64,
    pub batch_size: usize,
    pub n_reevals: usize,
}

impl Default for MeSamplingConfig {
    fn default() -> Self {
        let iso = IsoLineConfig::default();
        Self { iso_sigma: iso.iso_sigma, line_sigma: iso.line_sigma, batch_size: 512, n_reevals: 32 }
    }
}

impl MeSamplingConfig {
    pub fn variation(&self) -> IsoLineConfig {
        IsoLineConfig { iso_sigma: self.iso_sigma, line_sigma: self.line_sigma, batch_size: self.batch_size }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Memes(MemesConfig),
    /// Uses `reset = "sequential:<period>"`; any other reset becomes
    /// `sequential:10`.
    MemesSequential(MemesConfig),
    Me(IsoLineConfig),
    MeSampling(MeSamplingConfig),
    MeEs(MeEsConfig),
    Es(EsFamilyConfig),
    NsEs(EsFamilyConfig),
    NsrEs(EsFamilyConfig),
    NsraEs(EsFamilyConfig),
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Memes(_) => "memes",
            AlgorithmConfig::MemesSequential(_) => "memes_sequential",
            AlgorithmConfig::Me(_) => "me",
            AlgorithmConfig::MeSampling(_) => "me_sampling",
            AlgorithmConfig::MeEs(_) => "me_es",
            AlgorithmConfig::Es(_) => "es",
            AlgorithmConfig::NsEs(_) => "ns_es",
            AlgorithmConfig::NsrEs(_) => "nsr_es",
            AlgorithmConfig::NsraEs(_) => "nsra_es",
        }
    }

    pub fn build(&self, grid: GridSpec, seed: u64) -> Result<Box<dyn QdAlgorithm>, memes_core::AlgoError> {
        Ok(match self {
            AlgorithmConfig::Memes(c) => Box::new(Memes::new(c.clone(), grid, seed)?),
            AlgorithmConfig::MemesSequential(c) => {
                let period = match c.reset {
                    ResetPolicy::Sequential { period } => period,
                    _ => 10,
                };
                Box::new(memes_sequential(c.clone(), period, grid, seed)?)
            }
            AlgorithmConfig::Me(c) => Box::new(MapElites::new(c.clone(), grid, seed)?),
            AlgorithmConfig::MeSampling(c) => {
                Box::new(MapElites::with_sampling(c.variation(), c.n_reevals, grid, seed)?)
            }
            AlgorithmConfig::MeEs(c) => Box::new(MeEs::new(c.clone(), grid, seed)?),
            AlgorithmConfig::Es(c) => Box::new(EsFamily::new(EsVariant::Es, c.clone(), grid, seed)?),
            AlgorithmConfig::NsEs(c) => Box::new(EsFamily::new(EsVariant::NsEs, c.clone(), grid, seed)?),
            AlgorithmConfig::NsrEs(c) => Box::new(EsFamily::new(EsVariant::NsrEs, c.clone(), grid, seed)?),
            AlgorithmConfig::NsraEs(c) => Box::new(EsFamily::new(EsVariant::NsraEs, c.clone(), grid, seed)?),
        })
    }
}

/// Grid over the task's feature space. Unset fields take the task defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveConfig {
    pub cells: Option<Vec<usize>>,
    pub low: Option<Vec<f64>>,
    pub high: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub label: Option<String>,
    pub seed: u64,
    pub generations: u64,
    pub metrics_every: u64,
    pub output_dir: PathBuf,
    pub snapshot_every: Option<u64>,
    pub threads: Option<usize>,
    pub task: TaskConfig,
    pub archive: ArchiveConfig,
    pub algorithm: AlgorithmConfig,
}

const TOP_KEYS: [&str; 10] = [
    "label",
    "seed",
    "generations",
    "metrics_every",
    "output_dir",
    "snapshot_every",
    "threads",
    "task",
    "archive",
    "algorithm",
];

/// Line lookup for keys of a parsed document.
struct Locator<'a> {
    origin: &'a str,
    src: &'a str,
    /// Dotted keys set on the command line rather than in `src`.
    overridden: Vec<String>,
}

impl Locator<'_> {
    /// Line of `key` inside table `section` (dotted, "" for the root) or any
    /// of its sub-tables; falls back to the section header.
    fn line(&self, section: &str, key: &str) -> usize {
        let mut current = String::new();
        let mut header_line = 0;
        for (i, raw) in self.src.lines().enumerate() {
            let line = raw.trim();
            if let Some(h) = line.strip_prefix('[') {
                current = h.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
                if current == section {
                    header_line = i + 1;
                }
                continue;
            }
            let in_section = current == section || (!section.is_empty() && current.starts_with(&format!("{section}.")));
            if !in_section {
                continue;
            }
            if let Some((k, _)) = line.split_once('=') {
                let k = k.trim().trim_matches('"');
                if k == key || k.ends_with(&format!(".{key}")) {
                    return i + 1;
                }
            }
        }
        header_line
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let field = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if self.overridden.contains(&field) {
            return ConfigError {
                origin: self.origin.to_string(),
                line: 0,
                field,
                message: format!("{} (override)", message.into()),
            };
        }
        ConfigError { origin: self.origin.to_string(), line: self.line(section, key), field, message: message.into() }
    }

    /// Deserializes `table` and attributes failures to the deepest field.
    fn parse<T: DeserializeOwned>(&self, section: &str, table: Table) -> Result<T, ConfigError> {
        let de = Value::Table(table);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            let key = if path == "." || path.is_empty() { unknown_field(&message).unwrap_or_default() } else { path };
            let key = match unknown_field(&message) {
                Some(f) if !key.ends_with(&f) => format!("{key}.{f}").trim_start_matches('.').to_string(),
                _ => key,
            };
            let (sub, leaf) = match key.rsplit_once('.') {
                Some((s, l)) => {
                    (if section.is_empty() { s.to_string() } else { format!("{section}.{s}") }, l.to_string())
                }
                None => (section.to_string(), key.clone()),
            };
            let mut err = self.error(&sub, &leaf, first_line(&message));
            err.field = if section.is_empty() { key } else { format!("{section}.{key}") };
            err
        })
    }

    /// Attributes a semantic validation message to the first key of `table`
    /// it mentions.
    fn semantic(&self, section: &str, table: &Table, message: String) -> ConfigError {
        let mut keys = Vec::new();
        collect_keys(table, "", &mut keys);
        keys.sort_by_key(|k| std::cmp::Reverse(k.rsplit('.').next().unwrap_or(k).len()));
        let hit = keys.into_iter().find(|k| mentions(&message, k.rsplit('.').next().unwrap_or(k)));
        match hit {
            Some(k) => {
                let (sub, leaf) = match k.rsplit_once('.') {
                    Some((s, l)) => (format!("{section}.{s}"), l.to_string()),
                    None => (section.to_string(), k.clone()),
                };
                let mut err = self.error(&sub, &leaf, message);
                err.field = format!("{section}.{k}");
                err
            }
            None => ConfigError {
                origin: self.origin.to_string(),
                line: self.line(section, ""),
                field: section.to_string(),
                message,
            },
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or("").to_string()
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

fn mentions(message: &str, word: &str) -> bool {
    message.match_indices(word).any(|(i, _)| {
        let before = message[..i].chars().next_back();
        let after = message[i + word.len()..].chars().next();
        let boundary = |c: Option<char>| c.is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        boundary(before) && boundary(after)
    })
}

fn collect_keys(table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if let Value::Table(t) = v {
            collect_keys(t, &path, out);
        }
        out.push(path);
    }
}

fn take_section(root: &mut Table, loc: &Locator<'_>, name: &str, required: bool) -> Result<Table, ConfigError> {
    match root.remove(name) {
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(loc.error("", name, "expected a table")),
        None if required => Err(ConfigError {
            origin: loc.origin.to_string(),
            line: 0,
            field: name.to_string(),
            message: format!("missing [{name}] section"),
        }),
        None => Ok(Table::new()),
    }
}

fn take_name(section: &mut Table, loc: &Locator<'_>, which: &str, allowed: &[&str]) -> Result<String, ConfigError> {
    match section.remove("name") {
        Some(Value::String(s)) if allowed.contains(&s.as_str()) => Ok(s),
        Some(Value::String(s)) => {
            Err(loc.error(which, "name", format!("unknown {which} '{s}' (expected one of {})", allowed.join(", "))))
        }
        Some(_) => Err(loc.error(which, "name", "expected a string")),
        None => Err(loc.error(which, "name", format!("missing {which} name"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopLevel {
    label: Option<String>,
    #[serde(default)]
    seed: u64,
    generations: u64,
    #[serde(default = "default_metrics_every")]
    metrics_every: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    snapshot_every: Option<u64>,
    threads: Option<usize>,
}

fn default_metrics_every() -> u64 {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: path.display().to_string(),
            line: 0,
            field: "-".into(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&src, &path.display().to_string(), &[])
    }

    /// Parses `src`, then applies `overrides` (dotted key, TOML value) before
    /// validation.
    pub fn from_toml_str(src: &str, origin: &str, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let loc = Locator { origin, src, overridden: overrides.iter().map(|(k, _)| k.clone()).collect() };
        let mut root: Table = src.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| src[..s.start].matches('\n').count() + 1).unwrap_or(0);
            ConfigError { origin: origin.to_string(), line, field: "-".into(), message: first_line(e.message()) }
        })?;
        for (key, value) in overrides {
            set_path(&mut root, key, value.clone()).map_err(|m| ConfigError {
                origin: "override".into(),
                line: 0,
                field: key.clone(),
                message: m,
            })?;
        }
        if let Some(k) = root.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
            return Err(loc.error("", k, format!("unknown key (expected one of {})", TOP_KEYS.join(", "))));
        }

        let mut task_t = take_section(&mut root, &loc, "task", true)?;
        let archive_t = take_section(&mut root, &loc, "archive", false)?;
        let mut algo_t = take_section(&mut root, &loc, "algorithm", true)?;
        let top: TopLevel = loc.parse("", root)?;
        if top.generations == 0 {
            return Err(loc.error("", "generations", "must be >= 1"));
        }
        if top.metrics_every == 0 {
            return Err(loc.error("", "metrics_every", "must be >= 1"));
        }
        if top.snapshot_every == Some(0) {
            return Err(loc.error("", "snapshot_every", "must be >= 1"));
        }
        if top.threads == Some(0) {
            return Err(loc.error("", "threads", "must be >= 1"));
        }

        let task_name = take_name(&mut task_t, &loc, "task", &TASK_NAMES)?;
        let task_copy = task_t.clone();
        let task = match task_name.as_str() {
            "arm" => TaskConfig::Arm(loc.parse::<ArmParams>("task", task_t)?),
            "arm_noisy" => TaskConfig::ArmNoisy(loc.parse::<ArmParams>("task", task_t)?),
            "point_trap" => TaskConfig::PointTrap(loc.parse::<PointTrapParams>("task", task_t)?),
            _ => TaskConfig::PointTrapNoisy(loc.parse::<PointTrapParams>("task", task_t)?),
        };
        let built = task.build().map_err(|m| loc.semantic("task", &task_copy, m))?;

        let archive: ArchiveConfig = loc.parse("archive", archive_t.clone())?;
        grid_for(&archive, &task, built.as_ref()).map_err(|m| loc.semantic("archive", &archive_t, m))?;

        let algo_name = take_name(&mut algo_t, &loc, "algorithm", &ALGORITHM_NAMES)?;
        let algo_copy = algo_t.clone();
        let algorithm = match algo_name.as_str() {
            "memes" => AlgorithmConfig::Memes(loc.parse("algorithm", algo_t)?),
            "memes_sequential" => AlgorithmConfig::MemesSequential(loc.parse("algorithm", algo_t)?),
            "me" => AlgorithmConfig::Me(loc.parse("algorithm", algo_t)?),
            "me_sampling" => AlgorithmConfig::MeSampling(loc.parse("algorithm", algo_t)?),
            "me_es" => AlgorithmConfig::MeEs(loc.parse("algorithm", algo_t)?),
            "es" => AlgorithmConfig::Es(loc.parse("algorithm", algo_t)?),
            "ns_es" => AlgorithmConfig::NsEs(loc.parse("algorithm", algo_t)?),
            "nsr_es" => AlgorithmConfig::NsrEs(loc.parse("algorithm", algo_t)?),
            _ => AlgorithmConfig::NsraEs(loc.parse("algorithm", algo_t)?),
        };
        let cfg = RunConfig {
            label: top.label,
            seed: top.seed,
            generations: top.generations,
            metrics_every: top.metrics_every,
            output_dir: top.output_dir,
            snapshot_every: top.snapshot_every,
            threads: top.threads,
            task,
            archive,
            algorithm,
        };
        cfg.algorithm
            .build(cfg.grid(built.as_ref()).expect("validated grid"), cfg.seed)
            .map_err(|e| loc.semantic("algorithm", &algo_copy, e.to_string()))?;
        Ok(cfg)
    }

    pub fn build_task(&self) -> Box<dyn Task> {
        self.task.build().expect("validated task")
    }

    pub fn grid(&self, task: &dyn Task) -> Result<GridSpec, String> {
        grid_for(&self.archive, &self.task, task)
    }

    /// Output root after the environment override.
    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output_dir.clone())
    }

    /// Hash of everything that affects results except the seed.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.label = None;
        c.output_dir = PathBuf::new();
        c.snapshot_every = None;
        c.threads = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// `<label or algorithm>-<task>-<hash>-s<seed>`.
    pub fn run_id(&self) -> String {
        let label = self.label.clone().unwrap_or_else(|| self.algorithm.name().to_string());
        format!("{label}-{}-{}-s{}", self.task.name(), self.config_hash(), self.seed)
    }
}

fn grid_for(archive: &ArchiveConfig, task_cfg: &TaskConfig, task: &dyn Task) -> Result<GridSpec, String> {
    let spec = task.spec();
    let low = archive.low.clone().unwrap_or_else(|| spec.feature_bounds.low.clone());
    let high = archive.high.clone().unwrap_or_else(|| spec.feature_bounds.high.clone());
    let cells = archive.cells.clone().unwrap_or_else(|| task_cfg.default_cells());
    if cells.len() != spec.feature_bounds.dim() || low.len() != cells.len() || high.len() != cells.len() {
        return Err(format!(
            "cells, low and high must each have {} entries (the task's feature dimension)",
            spec.feature_bounds.dim()
        ));
    }
    let bounds = BoundedBox::new(low, high).map_err(|e| format!("low/high: {e}"))?;
    GridSpec::new(bounds, cells).map_err(|e| format!("cells: {e}"))
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| format!("empty key in '{key}'"))?;
    let mut table = root;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => return Err(format!("'{p}' in '{key}' is not a table")),
        };
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

/// Reads a command-line value as TOML (numbers, booleans, arrays, quoted
/// strings), falling back to a bare string.
pub fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    doc.parse::<Table>().ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| Value::String(raw.to_string()))
}
