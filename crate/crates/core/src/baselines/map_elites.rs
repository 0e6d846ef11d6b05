use rayon::prelude::*;

use crate::algorithm::{
    check_genome_dim, seed_archive, AlgoError, GenerationReport, Lineage, LineageSource, QdAlgorithm,
};
use crate::archive::{EliteArchive, Genome, GridSpec, Insertion};
use crate::rng::{Domain, Streams};
use crate::tasks::{reevaluate, Task};

use super::{iso_line_variation, IsoLineConfig};

/// MAP-Elites with iso+line variation. With `reevals > 1` every candidate is
/// scored by the mean of that many evaluations (ME-Sampling).
pub struct MapElites {
    cfg: IsoLineConfig,
    reevals: usize,
    streams: Streams,
    archive: EliteArchive,
    generation: u64,
}

impl MapElites {
    pub fn new(cfg: IsoLineConfig, grid: GridSpec, seed: u64) -> Result<Self, AlgoError> {
        Self::with_sampling(cfg, 1, grid, seed)
    }

    pub fn with_sampling(cfg: IsoLineConfig, reevals: usize, grid: GridSpec, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate().map_err(AlgoError::Config)?;
        if reevals == 0 {
            return Err(AlgoError::Config("n_reevals must be positive".into()));
        }
        Ok(Self { cfg, reevals, streams: Streams::new(seed), archive: EliteArchive::new(grid)?, generation: 0 })
    }
}

impl QdAlgorithm for MapElites {
    fn initialize(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let mut report = GenerationReport::default();
        seed_archive(&mut self.archive, task, &self.streams, self.cfg.batch_size, self.reevals, &mut report);
        self.generation = 0;
        Ok(report)
    }

    fn step(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let g = self.generation + 1;
        let batch = self.cfg.batch_size;
        let mut select_rng = self.streams.stream(Domain::Selection, &[g]);
        let mut vary_rng = self.streams.stream(Domain::Variation, &[g]);
        let parents = self.archive.uniform_select(&mut select_rng, 2 * batch)?;
        check_genome_dim(task, "archive genomes", parents[0].genome.len())?;
        let domain = &task.spec().genome_domain;
        let children: Vec<(Genome, Vec<f64>)> = parents
            .chunks(2)
            .map(|p| {
                (
                    iso_line_variation(&p[0].genome, &p[1].genome, &self.cfg, domain, &mut vary_rng),
                    p[0].eval.feature.clone(),
                )
            })
            .collect();
        let streams = &self.streams;
        let reevals = self.reevals;
        let evals: Vec<_> = children
            .par_iter()
            .enumerate()
            .map(|(i, (c, _))| {
                reevaluate(c, task, reevals, &mut streams.stream(Domain::Evaluation, &[g, 0, i as u64])).mean
            })
            .collect();

        let mut report =
            GenerationReport { generation: g, evaluations: (batch * reevals) as u64, ..Default::default() };
        for ((child, parent_feature), eval) in children.into_iter().zip(evals) {
            let outcome = self.archive.try_add(&child, &eval);
            report.invalid += u64::from(outcome == Insertion::Invalid);
            report.added.record(None, outcome);
            if eval.is_valid() {
                report.lineage.push(Lineage {
                    source: LineageSource::Variation,
                    parent_feature,
                    offspring_feature: eval.feature,
                });
            }
        }
        self.generation = g;
        Ok(report)
    }

    fn archive(&self) -> &EliteArchive {
        &self.archive
    }

    fn generation(&self) -> u64 {
        self.generation
    }
}
