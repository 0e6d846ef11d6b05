//! Interface shared by MEMES and every baseline, plus per-generation reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveError, EliteArchive, Evaluation, Genome, Insertion};
use crate::es::EsError;
use crate::novelty::NoveltyError;
use crate::rng::{Domain, Streams};
use crate::tasks::{reevaluate, Task};

/// Slot index used in evaluation stream paths for the initial random genomes.
pub const SEED_SLOT: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Es(#[from] EsError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("task genome dimension {task} does not match {what} ({got})")]
    GenomeDim { task: usize, what: &'static str, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitterMode {
    Exploit,
    Explore,
}

impl EmitterMode {
    pub fn swapped(self) -> Self {
        match self {
            EmitterMode::Exploit => EmitterMode::Explore,
            EmitterMode::Explore => EmitterMode::Exploit,
        }
    }
}

/// What produced an offspring, for parent-offspring distance statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineageSource {
    /// Mean update of a fitness-driven ES.
    ExploitEs,
    /// Mean update of a novelty-driven ES.
    ExploreEs,
    /// Iso+line variation of archive parents.
    Variation,
}

impl LineageSource {
    /// Operators whose job is to improve fitness locally.
    pub fn is_local_optimizer(self) -> bool {
        matches!(self, LineageSource::ExploitEs | LineageSource::Variation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lineage {
    pub source: LineageSource,
    pub parent_feature: Vec<f64>,
    pub offspring_feature: Vec<f64>,
}

/// State of one ES thread after a generation.
#[derive(Clone, Debug, PartialEq)]
pub struct EmitterRecord {
    pub slot: usize,
    pub mode: EmitterMode,
    /// Offspring entered the elite archive this generation.
    pub added: bool,
    /// Emitter restarted from a new parent at the start of this generation.
    pub reset: bool,
    /// Steps taken since the last reset, including this one.
    pub lifespan: u64,
}

/// Accepted archive insertions in one generation, by producer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AddedCounts {
    pub exploit: u64,
    pub explore: u64,
    pub other: u64,
}

impl AddedCounts {
    pub fn record(&mut self, mode: Option<EmitterMode>, outcome: Insertion) {
        if outcome.is_added() {
            match mode {
                Some(EmitterMode::Exploit) => self.exploit += 1,
                Some(EmitterMode::Explore) => self.explore += 1,
                None => self.other += 1,
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.exploit + self.explore + self.other
    }
}

impl std::ops::AddAssign for AddedCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.exploit += rhs.exploit;
        self.explore += rhs.explore;
        self.other += rhs.other;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationReport {
    /// 0 for the seeding phase, then 1, 2, ...
    pub generation: u64,
    /// Task evaluations consumed by this generation.
    pub evaluations: u64,
    /// Candidates rejected for non-finite fitness or feature.
    pub invalid: u64,
    pub added: AddedCounts,
    pub emitters: Vec<EmitterRecord>,
    pub lineage: Vec<Lineage>,
}

/// A QD algorithm driven one generation at a time.
pub trait QdAlgorithm: Send {
    /// Seeds the archive; returns the generation-0 report.
    fn initialize(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError>;
    fn step(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError>;
    fn archive(&self) -> &EliteArchive;
    /// Generations completed since seeding.
    fn generation(&self) -> u64;
}

pub(crate) fn check_genome_dim(task: &dyn Task, what: &'static str, got: usize) -> Result<(), AlgoError> {
    let dim = task.spec().genome_dim;
    if dim != got {
        return Err(AlgoError::GenomeDim { task: dim, what, got });
    }
    Ok(())
}

/// `count` genomes drawn uniformly over the task's genome domain, evaluated
/// (averaged over `reevals` draws) and offered to `archive`. Returns the seeds
/// in draw order.
pub fn seed_archive(
    archive: &mut EliteArchive,
    task: &dyn Task,
    streams: &Streams,
    count: usize,
    reevals: usize,
    report: &mut GenerationReport,
) -> Vec<(Genome, Evaluation)> {
    let domain = &task.spec().genome_domain;
    let seeds: Vec<(Genome, Evaluation)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let genome = domain.sample(&mut streams.stream(Domain::Seeding, &[i]));
            let mut rng = streams.stream(Domain::Evaluation, &[0, SEED_SLOT, i]);
            let eval = reevaluate(&genome, task, reevals, &mut rng).mean;
            (genome, eval)
        })
        .collect();
    for (g, e) in &seeds {
        let outcome = archive.try_add(g, e);
        if outcome == Insertion::Invalid {
            report.invalid += 1;
        }
        report.added.record(None, outcome);
    }
    report.evaluations += (count * reevals) as u64;
    seeds
}
