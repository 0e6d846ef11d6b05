use serde::{Deserialize, Serialize};

use crate::algorithm::{
    check_genome_dim, seed_archive, AlgoError, EmitterMode, EmitterRecord, GenerationReport, Lineage, LineageSource,
    QdAlgorithm,
};
use crate::archive::{EliteArchive, Evaluation, Genome, GridSpec, Insertion};
use crate::emitters::{evaluated_es_step, Objective};
use crate::es::{EsConfig, EsError, OptimizerState};
use crate::novelty::{NoveltyArchive, NoveltyBackend, NoveltyConfig, NoveltySource};
use crate::rng::{Domain, Streams};
use crate::tasks::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsVariant {
    Es,
    NsEs,
    NsrEs,
    NsraEs,
}

impl EsVariant {
    pub fn uses_novelty(self) -> bool {
        !matches!(self, EsVariant::Es)
    }
}

/// Hyperparameters of the ES-only baselines. `None` fields take the
/// variant's reference default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsFamilyConfig {
    /// Number of means stepped round-robin (1 for ES, 5 otherwise).
    pub population: Option<usize>,
    /// Initial fitness weight (0.5 for NSR-ES, 1.0 for NSRA-ES).
    pub fitness_weight: Option<f64>,
    pub adapt_amount: f64,
    pub adapt_period: u64,
    /// Mix fitness and novelty after rank-shaping each (true) or raw.
    pub mix_on_ranks: bool,
    pub es: EsConfig,
    pub novelty: NoveltyConfig,
}

impl Default for EsFamilyConfig {
    fn default() -> Self {
        Self {
            population: None,
            fitness_weight: None,
            adapt_amount: 0.05,
            adapt_period: 50,
            mix_on_ranks: true,
            es: EsConfig::default(),
            novelty: NoveltyConfig::default(),
        }
    }
}

impl EsFamilyConfig {
    pub fn population_for(&self, variant: EsVariant) -> usize {
        self.population.unwrap_or(if variant == EsVariant::Es { 1 } else { 5 })
    }

    pub fn weight_for(&self, variant: EsVariant) -> f64 {
        match variant {
            EsVariant::Es => 1.0,
            EsVariant::NsEs => 0.0,
            EsVariant::NsrEs => self.fitness_weight.unwrap_or(0.5),
            EsVariant::NsraEs => self.fitness_weight.unwrap_or(1.0),
        }
    }

    pub fn validate(&self, variant: EsVariant) -> Result<(), AlgoError> {
        if self.population_for(variant) == 0 {
            return Err(AlgoError::Config("population must be positive".into()));
        }
        let w = self.weight_for(variant);
        if !(0.0..=1.0).contains(&w) {
            return Err(AlgoError::Config(format!("fitness_weight must lie in [0, 1], got {w}")));
        }
        if self.adapt_amount.is_nan() || self.adapt_amount <= 0.0 || self.adapt_period == 0 {
            return Err(AlgoError::Config("adapt_amount and adapt_period must be positive".into()));
        }
        if variant.uses_novelty() && self.novelty.backend == NoveltyBackend::None {
            return Err(AlgoError::Config("novelty-based ES variants need a novelty backend".into()));
        }
        self.es.validate()?;
        self.novelty.validate()?;
        Ok(())
    }
}

struct Member {
    mean: Genome,
    mean_eval: Option<Evaluation>,
    optimizer: OptimizerState,
    steps: u64,
}

/// ES, NS-ES, NSR-ES and NSRA-ES. The algorithms never read the elite
/// archive; every updated mean is offered to it so they can be scored with
/// the same metrics.
pub struct EsFamily {
    variant: EsVariant,
    cfg: EsFamilyConfig,
    streams: Streams,
    archive: EliteArchive,
    novelty: NoveltyArchive,
    members: Vec<Member>,
    weight: f64,
    best_fitness: f64,
    since_improvement: u64,
    generation: u64,
}

impl EsFamily {
    pub fn new(variant: EsVariant, cfg: EsFamilyConfig, grid: GridSpec, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate(variant)?;
        Ok(Self {
            variant,
            novelty: NoveltyArchive::new(&cfg.novelty),
            weight: cfg.weight_for(variant),
            cfg,
            streams: Streams::new(seed),
            archive: EliteArchive::new(grid)?,
            members: Vec::new(),
            best_fitness: f64::NEG_INFINITY,
            since_improvement: 0,
            generation: 0,
        })
    }

    /// Current fitness weight (changes only for NSRA-ES).
    pub fn fitness_weight(&self) -> f64 {
        self.weight
    }

    /// Means in population order.
    pub fn means(&self) -> impl Iterator<Item = &Genome> + '_ {
        self.members.iter().map(|m| &m.mean)
    }

    fn adapt_weight(&mut self, offspring_fitness: Option<f64>) {
        let improved = offspring_fitness.is_some_and(|f| f > self.best_fitness);
        if let Some(f) = offspring_fitness {
            self.best_fitness = self.best_fitness.max(f);
        }
        if self.variant != EsVariant::NsraEs {
            return;
        }
        if improved {
            self.weight = (self.weight + self.cfg.adapt_amount).min(1.0);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= self.cfg.adapt_period {
                self.weight = (self.weight - self.cfg.adapt_amount).max(0.0);
                self.since_improvement = 0;
            }
        }
    }
}

impl QdAlgorithm for EsFamily {
    fn initialize(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let mut report = GenerationReport::default();
        let pop = self.cfg.population_for(self.variant);
        let seeds = seed_archive(&mut self.archive, task, &self.streams, pop, 1, &mut report);
        self.members = seeds
            .into_iter()
            .map(|(genome, eval)| {
                if eval.is_valid() {
                    self.best_fitness = self.best_fitness.max(eval.fitness);
                }
                Member {
                    optimizer: OptimizerState::zeros(genome.len()),
                    mean: genome,
                    mean_eval: eval.is_valid().then_some(eval),
                    steps: 0,
                }
            })
            .collect();
        if self.variant.uses_novelty() {
            self.novelty.insert(self.members.iter().filter_map(|m| m.mean_eval.as_ref().map(|e| &e.feature)))?;
        }
        self.generation = 0;
        Ok(report)
    }

    fn step(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let g = self.generation + 1;
        let slot = ((g - 1) % self.members.len() as u64) as usize;
        check_genome_dim(task, "ES mean", self.members[slot].mean.len())?;
        let source = match self.cfg.novelty.backend {
            NoveltyBackend::Elites => NoveltySource::Elites(&self.archive),
            _ => NoveltySource::Store(&self.novelty),
        };
        let k = self.cfg.novelty.k_nearest;
        let (objective, mode, lineage_source) = match self.variant {
            EsVariant::Es => (Objective::Fitness, EmitterMode::Exploit, LineageSource::ExploitEs),
            EsVariant::NsEs => (Objective::Novelty { source, k }, EmitterMode::Explore, LineageSource::ExploreEs),
            EsVariant::NsrEs | EsVariant::NsraEs => (
                Objective::Mixed { source, k, weight: self.weight, on_ranks: self.cfg.mix_on_ranks },
                EmitterMode::Exploit,
                LineageSource::ExploitEs,
            ),
        };
        // slot 0 keeps single-mean ES on the same streams as a one-emitter MEMES
        let mut rng = self.streams.stream(Domain::Emitter, &[g, 0]);
        let member = &self.members[slot];
        let result = evaluated_es_step(
            &member.mean,
            &member.optimizer,
            &self.cfg.es,
            objective,
            task,
            &self.streams,
            &mut rng,
            g,
            0,
        );
        let mut report =
            GenerationReport { generation: g, evaluations: self.cfg.es.sample_count as u64 + 1, ..Default::default() };
        let mut added = false;
        let mut offspring_fitness = None;
        match result {
            Ok(out) => {
                let outcome = self.archive.try_add(&out.step.mean, &out.offspring);
                report.invalid += u64::from(outcome == Insertion::Invalid);
                report.added.record(Some(mode), outcome);
                added = outcome.is_added();
                if out.offspring.is_valid() {
                    offspring_fitness = Some(out.offspring.fitness);
                    if let Some(parent) = &self.members[slot].mean_eval {
                        report.lineage.push(Lineage {
                            source: lineage_source,
                            parent_feature: parent.feature.clone(),
                            offspring_feature: out.offspring.feature.clone(),
                        });
                    }
                    if self.variant.uses_novelty() {
                        self.novelty.insert([&out.offspring.feature])?;
                    }
                }
                let m = &mut self.members[slot];
                m.mean = out.step.mean;
                m.optimizer = out.step.optimizer;
                m.mean_eval = out.offspring.is_valid().then_some(out.offspring);
            }
            Err(EsError::NonFiniteGradient) => report.invalid += 1,
            Err(e) => return Err(e.into()),
        }
        self.adapt_weight(offspring_fitness);
        let m = &mut self.members[slot];
        m.steps += 1;
        report.emitters.push(EmitterRecord { slot, mode, added, reset: false, lifespan: m.steps });
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
    fn variant_defaults() {
        let c = EsFamilyConfig::default();
        assert_eq!(c.population_for(EsVariant::Es), 1);
        assert_eq!(c.population_for(EsVariant::NsEs), 5);
        assert_eq!(c.weight_for(EsVariant::NsrEs), 0.5);
        assert_eq!(c.weight_for(EsVariant::NsraEs), 1.0);
        assert_eq!((c.adapt_amount, c.adapt_period), (0.05, 50));
    }

    #[test]
    fn bad_weight_rejected() {
        let c = EsFamilyConfig { fitness_weight: Some(1.5), ..Default::default() };
        assert!(c.validate(EsVariant::NsrEs).is_err());
    }
}
