use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithm::{
    check_genome_dim, seed_archive, AlgoError, EmitterMode, EmitterRecord, GenerationReport, Lineage, LineageSource,
    QdAlgorithm,
};
use crate::archive::{Elite, EliteArchive, Evaluation, Genome, GridSpec, Insertion};
use crate::emitters::{evaluated_es_step, Objective};
use crate::es::{EsConfig, EsError, OptimizerState};
use crate::novelty::{NoveltyArchive, NoveltyBackend, NoveltyConfig, NoveltySource};
use crate::rng::{Domain, Streams};
use crate::tasks::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeEsConfig {
    /// Generations per mode before switching and re-selecting a parent.
    pub mode_length: u64,
    /// Fraction of elites, ranked by the mode's criterion, eligible as parents.
    pub selection_quantile: f64,
    pub es: EsConfig,
    pub novelty: NoveltyConfig,
}

impl Default for MeEsConfig {
    fn default() -> Self {
        Self {
            mode_length: 10,
            selection_quantile: 0.1,
            es: EsConfig { sample_count: 10_000, l2_coefficient: 0.01, ..EsConfig::default() },
            novelty: NoveltyConfig::default(),
        }
    }
}

impl MeEsConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.mode_length == 0 {
            return Err(AlgoError::Config("mode_length must be >= 1".into()));
        }
        if !(self.selection_quantile > 0.0 && self.selection_quantile <= 1.0) {
            return Err(AlgoError::Config("selection_quantile must lie in (0, 1]".into()));
        }
        if matches!(self.novelty.backend, NoveltyBackend::None) {
            return Err(AlgoError::Config("ME-ES needs a novelty backend".into()));
        }
        self.es.validate()?;
        self.novelty.validate()?;
        Ok(())
    }
}

/// Mode that starts at 1-based generation `g`, if any: explore when
/// `g mod 2G == 0`, exploit when `(g - G) mod 2G == 0`.
pub fn me_es_switch(g: u64, mode_length: u64) -> Option<EmitterMode> {
    let period = 2 * mode_length;
    if g.is_multiple_of(period) {
        Some(EmitterMode::Explore)
    } else if g >= mode_length && (g - mode_length).is_multiple_of(period) {
        Some(EmitterMode::Exploit)
    } else {
        None
    }
}

/// Single-thread ME-ES alternating between fitness and novelty every
/// `mode_length` generations, restarting from a top-quantile elite.
pub struct MeEs {
    cfg: MeEsConfig,
    streams: Streams,
    archive: EliteArchive,
    novelty: NoveltyArchive,
    mode: EmitterMode,
    mean: Genome,
    mean_eval: Option<Evaluation>,
    optimizer: OptimizerState,
    lifespan: u64,
    generation: u64,
}

impl MeEs {
    pub fn new(cfg: MeEsConfig, grid: GridSpec, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate()?;
        Ok(Self {
            novelty: NoveltyArchive::new(&cfg.novelty),
            cfg,
            streams: Streams::new(seed),
            archive: EliteArchive::new(grid)?,
            mode: EmitterMode::Explore,
            mean: Vec::new(),
            mean_eval: None,
            optimizer: OptimizerState::zeros(0),
            lifespan: 0,
            generation: 0,
        })
    }

    pub fn mode(&self) -> EmitterMode {
        self.mode
    }

    fn novelty_source(&self) -> NoveltySource<'_> {
        match self.cfg.novelty.backend {
            NoveltyBackend::Elites => NoveltySource::Elites(&self.archive),
            _ => NoveltySource::Store(&self.novelty),
        }
    }

    /// Uniform draw among the top `selection_quantile` elites ranked by
    /// fitness (exploit) or novelty (explore).
    fn biased_select<R: Rng + ?Sized>(&self, mode: EmitterMode, rng: &mut R) -> Result<Elite, AlgoError> {
        let source = self.novelty_source();
        let k = self.cfg.novelty.k_nearest;
        let mut ranked: Vec<(f64, &Elite)> = self
            .archive
            .elites()
            .map(|(_, e)| {
                let key = match mode {
                    EmitterMode::Exploit => e.eval.fitness,
                    EmitterMode::Explore => source.score(&e.eval.feature, k),
                };
                (key, e)
            })
            .collect();
        if ranked.is_empty() {
            return Err(crate::archive::ArchiveError::Empty.into());
        }
        // stable: ties keep ascending cell order
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let top = ((ranked.len() as f64 * self.cfg.selection_quantile).ceil() as usize).clamp(1, ranked.len());
        Ok(ranked[rng.random_range(0..top)].1.clone())
    }
}

impl QdAlgorithm for MeEs {
    fn initialize(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let mut report = GenerationReport::default();
        let seeds = seed_archive(&mut self.archive, task, &self.streams, 1, 1, &mut report);
        let (genome, eval) = seeds.into_iter().next().expect("one seed");
        self.novelty.insert(eval.is_valid().then_some(&eval.feature))?;
        self.optimizer = OptimizerState::zeros(genome.len());
        self.mean = genome;
        self.mean_eval = eval.is_valid().then_some(eval);
        self.mode = EmitterMode::Explore;
        self.lifespan = 0;
        self.generation = 0;
        Ok(report)
    }

    fn step(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        check_genome_dim(task, "ES mean", self.mean.len())?;
        let g = self.generation + 1;
        let mut rng = self.streams.stream(Domain::Emitter, &[g, 0]);
        let mut reset = false;
        if let Some(mode) = me_es_switch(g, self.cfg.mode_length) {
            let parent = self.biased_select(mode, &mut rng)?;
            self.mode = mode;
            self.mean = parent.genome;
            self.mean_eval = Some(parent.eval);
            self.optimizer = OptimizerState::zeros(self.mean.len());
            self.lifespan = 0;
            reset = true;
        }
        self.lifespan += 1;
        let objective = match self.mode {
            EmitterMode::Exploit => Objective::Fitness,
            EmitterMode::Explore => Objective::Novelty { source: self.novelty_source(), k: self.cfg.novelty.k_nearest },
        };
        let parent_feature = self.mean_eval.as_ref().map(|e| e.feature.clone());
        let mut report =
            GenerationReport { generation: g, evaluations: self.cfg.es.sample_count as u64 + 1, ..Default::default() };
        let mut added = false;
        match evaluated_es_step(
            &self.mean,
            &self.optimizer,
            &self.cfg.es,
            objective,
            task,
            &self.streams,
            &mut rng,
            g,
            0,
        ) {
            Ok(out) => {
                let outcome = self.archive.try_add(&out.step.mean, &out.offspring);
                report.invalid += u64::from(outcome == Insertion::Invalid);
                report.added.record(Some(self.mode), outcome);
                added = outcome.is_added();
                if out.offspring.is_valid() {
                    let source = match self.mode {
                        EmitterMode::Exploit => LineageSource::ExploitEs,
                        EmitterMode::Explore => LineageSource::ExploreEs,
                    };
                    if let Some(parent_feature) = parent_feature {
                        report.lineage.push(Lineage {
                            source,
                            parent_feature,
                            offspring_feature: out.offspring.feature.clone(),
                        });
                    }
                    self.novelty.insert([&out.offspring.feature])?;
                }
                self.mean = out.step.mean;
                self.optimizer = out.step.optimizer;
                self.mean_eval = Some(out.offspring);
            }
            Err(EsError::NonFiniteGradient) => report.invalid += 1,
            Err(e) => return Err(e.into()),
        }
        report.emitters.push(EmitterRecord { slot: 0, mode: self.mode, added, reset, lifespan: self.lifespan });
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_schedule_follows_modulo_rule() {
        let switches: Vec<(u64, EmitterMode)> = (1..=45).filter_map(|g| me_es_switch(g, 10).map(|m| (g, m))).collect();
        assert_eq!(
            switches,
            vec![
                (10, EmitterMode::Exploit),
                (20, EmitterMode::Explore),
                (30, EmitterMode::Exploit),
                (40, EmitterMode::Explore)
            ]
        );
        assert_eq!(me_es_switch(1, 1), Some(EmitterMode::Exploit));
        assert_eq!(me_es_switch(2, 1), Some(EmitterMode::Explore));
    }

    #[test]
    fn defaults_follow_reference_hyperparameters() {
        let c = MeEsConfig::default();
        assert_eq!(c.es.sample_count, 10_000);
        assert_eq!(c.es.l2_coefficient, 0.01);
        assert_eq!(c.mode_length, 10);
        c.validate().unwrap();
    }
}
