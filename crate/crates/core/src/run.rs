//! Generation loop shared by every algorithm: seeding, stepping, periodic
//! metric rows and observer callbacks.

use thiserror::Error;

use crate::algorithm::{AddedCounts, AlgoError, GenerationReport, LineageSource, QdAlgorithm};
use crate::archive::{EliteArchive, GridSpec};
use crate::baselines::{
    memes_sequential, EsFamily, EsFamilyConfig, EsVariant, IsoLineConfig, MapElites, MeEs, MeEsConfig,
};
use crate::emitters::{Memes, MemesConfig};
use crate::metrics::{
    archive_metrics, lineage_distances, DistanceSummary, LifespanSummary, LifespanTracker, MetricsLog, MetricsRow,
};
use crate::tasks::Task;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error("run aborted at generation {generation}: {reason}")]
    Aborted { generation: u64, reason: String },
}

/// Hooks called by [`drive`]. An `Err` stops the run.
pub trait RunObserver {
    fn on_generation(&mut self, _report: &GenerationReport, _archive: &EliteArchive) -> Result<(), String> {
        Ok(())
    }

    fn on_row(&mut self, _row: &MetricsRow) -> Result<(), String> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub generations: u64,
    /// Emit a metrics row every this many generations (plus generation 0 and
    /// the last one).
    pub metrics_every: u64,
}

impl RunOptions {
    pub fn new(generations: u64) -> Self {
        Self { generations, metrics_every: 10 }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub archive: EliteArchive,
    pub log: MetricsLog,
    pub lifespans: LifespanSummary,
    pub evaluations: u64,
    pub added: AddedCounts,
}

#[derive(Default)]
struct Window {
    added: AddedCounts,
    invalid: u64,
    distances: Vec<f64>,
}

/// Seeds `algo` and runs it for `opts.generations` steps.
pub fn drive(
    algo: &mut dyn QdAlgorithm,
    task: &dyn Task,
    opts: RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, RunError> {
    let offset = task.spec().fitness_offset;
    let every = opts.metrics_every.max(1);
    let grid: GridSpec = algo.archive().spec().clone();
    let mut log = MetricsLog::default();
    let mut lifespans = LifespanTracker::default();
    let mut evaluations = 0u64;
    let mut added_total = AddedCounts::default();
    let mut window = Window::default();

    let mut generation = 0;
    loop {
        let report = if generation == 0 { algo.initialize(task)? } else { algo.step(task)? };
        evaluations += report.evaluations;
        added_total += report.added;
        lifespans.observe(&report);
        window.added += report.added;
        window.invalid += report.invalid;
        window.distances.extend(lineage_distances(&report, &grid, LineageSource::is_local_optimizer));
        observer.on_generation(&report, algo.archive()).map_err(|reason| RunError::Aborted { generation, reason })?;

        if generation % every == 0 || generation == opts.generations {
            let m = archive_metrics(algo.archive(), offset);
            let life = lifespans.summary();
            let w = std::mem::take(&mut window);
            let dist = DistanceSummary::from_values(w.distances);
            let row = MetricsRow {
                generation,
                evaluations,
                qd_score: m.qd_score,
                coverage: m.coverage,
                max_fitness: m.max_fitness,
                occupied_cells: m.occupied_cells,
                added_exploit: w.added.exploit,
                added_explore: w.added.explore,
                added_other: w.added.other,
                invalid: w.invalid,
                lifespan_exploit: life.exploit,
                lifespan_explore: life.explore,
                po_dist_median: dist.map(|d| d.median),
                po_dist_q1: dist.map(|d| d.q1),
                po_dist_q3: dist.map(|d| d.q3),
            };
            observer.on_row(&row).map_err(|reason| RunError::Aborted { generation, reason })?;
            log.rows.push(row);
        }
        if generation == opts.generations {
            break;
        }
        generation += 1;
    }
    Ok(RunOutput {
        archive: algo.archive().clone(),
        log,
        lifespans: lifespans.summary(),
        evaluations,
        added: added_total,
    })
}

pub fn run_memes(
    cfg: MemesConfig,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut Memes::new(cfg, grid, seed)?, task, opts, &mut ())
}

pub fn run_memes_sequential(
    cfg: MemesConfig,
    period: u64,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut memes_sequential(cfg, period, grid, seed)?, task, opts, &mut ())
}

pub fn run_me(
    cfg: IsoLineConfig,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut MapElites::new(cfg, grid, seed)?, task, opts, &mut ())
}

pub fn run_me_sampling(
    cfg: IsoLineConfig,
    reevals: usize,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut MapElites::with_sampling(cfg, reevals, grid, seed)?, task, opts, &mut ())
}

pub fn run_me_es(
    cfg: MeEsConfig,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut MeEs::new(cfg, grid, seed)?, task, opts, &mut ())
}

pub fn run_es_family(
    variant: EsVariant,
    cfg: EsFamilyConfig,
    grid: GridSpec,
    task: &dyn Task,
    opts: RunOptions,
    seed: u64,
) -> Result<RunOutput, RunError> {
    drive(&mut EsFamily::new(variant, cfg, grid, seed)?, task, opts, &mut ())
}
