//! Executes a [`RunConfig`] into a run directory:
//!
//! - `config.json`: resolved configuration
//! - `metrics.csv`: one row per metrics cadence, flushed as it is written
//! - `archive_gNNNNNN.json`: optional periodic snapshots
//! - `archive_final.json`: final archive
//! - `summary.json`: written with `complete: false` at start, rewritten at the end

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use memes_core::metrics::{archive_metrics, LifespanSummary, MetricsRow};
use memes_core::run::{drive, RunObserver, RunOptions};
use memes_core::{EliteArchive, GenerationReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub algorithm: String,
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
    pub complete: bool,
    pub generations: u64,
    pub generations_completed: u64,
    pub evaluations: u64,
    pub qd_score: Option<f64>,
    pub coverage: Option<f64>,
    pub max_fitness: Option<f64>,
    pub occupied_cells: Option<usize>,
    pub lifespans: Option<LifespanSummary>,
    pub elapsed_seconds: f64,
    pub error: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_archive(path: &Path, archive: &EliteArchive) -> Result<()> {
    write_json(path, &archive.to_snapshot())
}

struct DirObserver {
    dir: PathBuf,
    csv: csv::Writer<File>,
    snapshot_every: Option<u64>,
    generation: u64,
    evaluations: u64,
}

impl RunObserver for DirObserver {
    fn on_generation(&mut self, report: &GenerationReport, archive: &EliteArchive) -> Result<(), String> {
        self.generation = report.generation;
        self.evaluations += report.evaluations;
        match self.snapshot_every {
            Some(every) if report.generation.is_multiple_of(every) => {
                let path = self.dir.join(format!("archive_g{:06}.json", report.generation));
                write_archive(&path, archive).map_err(|e| format!("{e:#}"))
            }
            _ => Ok(()),
        }
    }

    fn on_row(&mut self, row: &MetricsRow) -> Result<(), String> {
        self.csv.serialize(row).map_err(|e| format!("writing metrics.csv: {e}"))?;
        self.csv.flush().map_err(|e| format!("writing metrics.csv: {e}"))
    }
}

/// Directory a run of `cfg` writes to.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_root().join(cfg.run_id())
}

/// Runs `cfg` on a pool of `cfg.threads` workers (all cores if unset).
pub fn execute(cfg: &RunConfig) -> Result<RunSummary> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    pool.install(|| execute_here(cfg))
}

fn execute_here(cfg: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;

    let task = cfg.build_task();
    let grid = cfg.grid(task.as_ref()).map_err(anyhow::Error::msg)?;
    let mut algo = cfg.algorithm.build(grid, cfg.seed)?;
    let mut summary = RunSummary {
        run_id: cfg.run_id(),
        algorithm: cfg.algorithm.name().into(),
        task: cfg.task.name().into(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        complete: false,
        generations: cfg.generations,
        generations_completed: 0,
        evaluations: 0,
        qd_score: None,
        coverage: None,
        max_fitness: None,
        occupied_cells: None,
        lifespans: None,
        elapsed_seconds: 0.0,
        error: None,
    };
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;

    let csv_path = dir.join("metrics.csv");
    let csv = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let mut observer =
        DirObserver { dir: dir.clone(), csv, snapshot_every: cfg.snapshot_every, generation: 0, evaluations: 0 };
    let opts = RunOptions { generations: cfg.generations, metrics_every: cfg.metrics_every };
    let result = drive(algo.as_mut(), task.as_ref(), opts, &mut observer);

    summary.generations_completed = observer.generation;
    summary.evaluations = observer.evaluations;
    let metrics = archive_metrics(algo.archive(), task.spec().fitness_offset);
    summary.qd_score = Some(metrics.qd_score);
    summary.coverage = Some(metrics.coverage);
    summary.max_fitness = metrics.max_fitness.is_finite().then_some(metrics.max_fitness);
    summary.occupied_cells = Some(metrics.occupied_cells);
    summary.elapsed_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(out) => {
            write_archive(&dir.join("archive_final.json"), &out.archive)?;
            summary.lifespans = Some(out.lifespans);
            summary.complete = true;
            write_json(&summary_path, &summary)?;
            Ok(summary)
        }
        Err(e) => {
            summary.error = Some(e.to_string());
            write_json(&summary_path, &summary)?;
            Err(anyhow::Error::new(e).context(format!(
                "run {} failed; partial results in {}",
                summary.run_id,
                dir.display()
            )))
        }
    }
}
