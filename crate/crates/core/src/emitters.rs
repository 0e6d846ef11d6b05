//! MEMES: a MAP-Elites archive fed by many independent ES emitters.
//!
//! A fixed share of the emitters climbs task fitness, the rest climb novelty.
//! Each emitter proposes its updated mean as offspring once per generation and
//! is restarted from a uniformly drawn elite after too many consecutive
//! rejections. Emitters run in parallel against read-only snapshots of both
//! archives; all writes happen afterwards in emitter order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{
    check_genome_dim, seed_archive, AlgoError, EmitterMode, EmitterRecord, GenerationReport, Lineage, LineageSource,
    QdAlgorithm,
};
use crate::archive::{EliteArchive, Evaluation, Genome, GridSpec, Insertion};
use crate::baselines::{iso_line_variation, IsoLineConfig};
use crate::es::{es_step, rank_shape, EsConfig, EsError, OptimizerState, StepOutput};
use crate::novelty::{NoveltyArchive, NoveltyBackend, NoveltyConfig, NoveltySource};
use crate::rng::{Domain, Streams};
use crate::tasks::Task;

/// When an emitter is restarted from a new archive parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetPolicy {
    /// After more than `budget` consecutive rejected offspring.
    Adaptive {
        budget: u64,
    },
    /// Every `period` generations regardless of progress.
    Fixed {
        period: u64,
    },
    /// Every `period` generations, with all emitters sharing one mode that
    /// flips at each reset (starting with explore).
    Sequential {
        period: u64,
    },
    Never,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy::Adaptive { budget: 32 }
    }
}

impl fmt::Display for ResetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetPolicy::Adaptive { budget } => write!(f, "adaptive:{budget}"),
            ResetPolicy::Fixed { period } => write!(f, "fixed:{period}"),
            ResetPolicy::Sequential { period } => write!(f, "sequential:{period}"),
            ResetPolicy::Never => write!(f, "never"),
        }
    }
}

impl FromStr for ResetPolicy {
    type Err = String;

    /// `adaptive[:budget]`, `fixed:period`, `sequential[:period]` or `never`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = |default: Option<u64>| -> Result<u64, String> {
            let v = match (arg, default) {
                (Some(a), _) => a.parse::<u64>().map_err(|e| format!("bad number in reset policy '{s}': {e}"))?,
                (None, Some(d)) => d,
                (None, None) => return Err(format!("reset policy '{s}' needs a period, e.g. '{kind}:10'")),
            };
            if v == 0 {
                return Err(format!("reset policy '{s}': value must be positive"));
            }
            Ok(v)
        };
        match kind {
            "adaptive" => Ok(ResetPolicy::Adaptive { budget: num(Some(32))? }),
            "fixed" => Ok(ResetPolicy::Fixed { period: num(None)? }),
            "sequential" => Ok(ResetPolicy::Sequential { period: num(Some(10))? }),
            "never" if arg.is_none() => Ok(ResetPolicy::Never),
            _ => Err(format!("unknown reset policy '{s}' (expected adaptive[:n], fixed:n, sequential[:n] or never)")),
        }
    }
}

impl Serialize for ResetPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResetPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Updates an emitter's count of consecutive rejected offspring after one
/// generation and returns whether it must restart before its next step.
pub fn stagnation_step(policy: ResetPolicy, stagnation: &mut u64, lifespan: u64, added: bool) -> bool {
    *stagnation = if added { 0 } else { *stagnation + 1 };
    match policy {
        ResetPolicy::Adaptive { budget } => *stagnation > budget,
        ResetPolicy::Fixed { period } | ResetPolicy::Sequential { period } => lifespan >= period,
        ResetPolicy::Never => false,
    }
}

/// How explore slots generate offspring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreOperator {
    /// ES on the novelty score.
    #[default]
    Es,
    /// Iso+line variation of uniformly drawn elites, `N + 1` children per slot.
    Ga,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemesConfig {
    pub n_emitters: usize,
    pub p_exploit: f64,
    pub reset: ResetPolicy,
    /// Offer every ES sample to the archive, not only the offspring.
    pub add_all_samples: bool,
    pub explore_operator: ExploreOperator,
    /// Variation used when `explore_operator = "ga"`; its batch size is unused.
    pub ga: IsoLineConfig,
    pub es: EsConfig,
    pub novelty: NoveltyConfig,
}

impl Default for MemesConfig {
    fn default() -> Self {
        Self {
            n_emitters: 32,
            p_exploit: 0.5,
            reset: ResetPolicy::default(),
            add_all_samples: false,
            explore_operator: ExploreOperator::Es,
            ga: IsoLineConfig::default(),
            es: EsConfig::default(),
            novelty: NoveltyConfig::default(),
        }
    }
}

/// Number of exploit emitters: `n * p` rounded half up.
pub fn exploit_count(n_emitters: usize, p_exploit: f64) -> usize {
    ((n_emitters as f64 * p_exploit + 0.5).floor() as usize).min(n_emitters)
}

impl MemesConfig {
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.n_emitters == 0 {
            return Err(AlgoError::Config("n_emitters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_exploit) {
            return Err(AlgoError::Config(format!("p_exploit must lie in [0, 1], got {}", self.p_exploit)));
        }
        self.es.validate()?;
        self.novelty.validate()?;
        self.ga.validate().map_err(AlgoError::Config)?;
        let explorers = match self.reset {
            ResetPolicy::Sequential { .. } => self.n_emitters,
            _ => self.n_emitters - exploit_count(self.n_emitters, self.p_exploit),
        };
        if explorers > 0 && self.explore_operator == ExploreOperator::Es && self.novelty.backend == NoveltyBackend::None
        {
            return Err(AlgoError::Config(
                "novelty backend 'none' leaves explore emitters without an objective".into(),
            ));
        }
        if matches!(self.reset, ResetPolicy::Sequential { .. }) && self.explore_operator == ExploreOperator::Ga {
            return Err(AlgoError::Config("sequential reset requires ES explore emitters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmitterState {
    pub mode: EmitterMode,
    pub mean: Genome,
    /// Evaluation of `mean`: the previous offspring or the reset parent.
    pub mean_eval: Option<Evaluation>,
    pub optimizer: OptimizerState,
    /// Consecutive generations without an accepted offspring.
    pub stagnation: u64,
    pub require_reset: bool,
    pub lifespan: u64,
}

/// First `round(n * p_exploit)` slots exploit, the rest explore; means are
/// taken from the seeds in order, cycling when there are fewer seeds.
pub fn init_emitters(cfg: &MemesConfig, seeds: &[(Genome, Evaluation)]) -> Result<Vec<EmitterState>, AlgoError> {
    if seeds.is_empty() {
        return Err(AlgoError::Config("at least one seed genome is required".into()));
    }
    let n_exploit = exploit_count(cfg.n_emitters, cfg.p_exploit);
    Ok((0..cfg.n_emitters)
        .map(|e| {
            let (genome, eval) = &seeds[e % seeds.len()];
            let mode = match cfg.reset {
                ResetPolicy::Sequential { .. } => EmitterMode::Explore,
                _ if e < n_exploit => EmitterMode::Exploit,
                _ => EmitterMode::Explore,
            };
            EmitterState {
                mode,
                mean: genome.clone(),
                mean_eval: eval.is_valid().then(|| eval.clone()),
                optimizer: OptimizerState::zeros(genome.len()),
                stagnation: 0,
                require_reset: false,
                lifespan: 0,
            }
        })
        .collect())
}

/// Scoring rule for ES samples.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    Fitness,
    Novelty {
        source: NoveltySource<'a>,
        k: usize,
    },
    /// `w * fitness + (1 - w) * novelty`, on centered ranks or raw values.
    Mixed {
        source: NoveltySource<'a>,
        k: usize,
        weight: f64,
        on_ranks: bool,
    },
}

impl Objective<'_> {
    pub fn scores(&self, evals: &[Evaluation]) -> Vec<f64> {
        let novelty = |source: &NoveltySource<'_>, k: usize| -> Vec<f64> {
            evals.par_iter().map(|e| if e.is_valid() { source.score(&e.feature, k) } else { f64::NAN }).collect()
        };
        match self {
            Objective::Fitness => evals.iter().map(|e| e.fitness).collect(),
            Objective::Novelty { source, k } => novelty(source, *k),
            Objective::Mixed { source, k, weight, on_ranks } => {
                let fit: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
                let nov = novelty(source, *k);
                let (fit, nov) =
                    if *on_ranks { (rank_shape(&fit).values, rank_shape(&nov).values) } else { (fit, nov) };
                fit.iter().zip(&nov).map(|(f, n)| weight * f + (1.0 - weight) * n).collect()
            }
        }
    }
}

/// One ES step whose samples and offspring are evaluated on a task.
pub(crate) struct EvaluatedStep {
    pub step: StepOutput,
    pub sample_evals: Vec<Evaluation>,
    pub offspring: Evaluation,
}

/// Samples use the emitter stream `(generation, slot)`; sample `i` is
/// evaluated on stream `(generation, slot, i)` and the offspring on
/// `(generation, slot, N)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn evaluated_es_step(
    mean: &[f64],
    optimizer: &OptimizerState,
    cfg: &EsConfig,
    objective: Objective<'_>,
    task: &dyn Task,
    streams: &Streams,
    rng: &mut crate::rng::StreamRng,
    generation: u64,
    slot: u64,
) -> Result<EvaluatedStep, EsError> {
    let mut sample_evals = Vec::new();
    let step = es_step(mean, optimizer, cfg, rng, |batch| {
        sample_evals = batch
            .genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| task.evaluate(g, &mut streams.stream(Domain::Evaluation, &[generation, slot, i as u64])))
            .collect();
        objective.scores(&sample_evals)
    })?;
    let n = cfg.sample_count as u64;
    let offspring = task.evaluate(&step.mean, &mut streams.stream(Domain::Evaluation, &[generation, slot, n]));
    Ok(EvaluatedStep { step, sample_evals, offspring })
}

/// What an emitter produced during the parallel phase.
struct SlotOutcome {
    state: EmitterState,
    reset: bool,
    /// ES offspring (none when the update failed).
    offspring: Option<(Genome, Evaluation)>,
    /// Feature of the mean the step started from.
    parent_feature: Option<Vec<f64>>,
    /// ES samples or GA children.
    extra: Vec<(Genome, Evaluation)>,
    failed: bool,
    ga: bool,
}

pub struct Memes {
    cfg: MemesConfig,
    streams: Streams,
    archive: EliteArchive,
    novelty: NoveltyArchive,
    emitters: Vec<EmitterState>,
    generation: u64,
}

impl Memes {
    pub fn new(cfg: MemesConfig, grid: GridSpec, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate()?;
        let novelty = NoveltyArchive::new(&cfg.novelty);
        Ok(Self {
            archive: EliteArchive::new(grid)?,
            novelty,
            cfg,
            streams: Streams::new(seed),
            emitters: Vec::new(),
            generation: 0,
        })
    }

    pub fn config(&self) -> &MemesConfig {
        &self.cfg
    }

    pub fn emitters(&self) -> &[EmitterState] {
        &self.emitters
    }

    pub fn novelty_archive(&self) -> &NoveltyArchive {
        &self.novelty
    }

    fn is_ga_slot(&self, state: &EmitterState) -> bool {
        self.cfg.explore_operator == ExploreOperator::Ga && state.mode == EmitterMode::Explore
    }

    fn slot_phase(&self, slot: usize, state: &EmitterState, task: &dyn Task, g: u64) -> Result<SlotOutcome, AlgoError> {
        let mut st = state.clone();
        let mut rng = self.streams.stream(Domain::Emitter, &[g, slot as u64]);
        let n = self.cfg.es.sample_count;

        if self.is_ga_slot(&st) {
            let domain = &task.spec().genome_domain;
            let parents = self.archive.uniform_select(&mut rng, 2 * (n + 1))?;
            let children: Vec<Genome> = parents
                .chunks(2)
                .map(|p| iso_line_variation(&p[0].genome, &p[1].genome, &self.cfg.ga, domain, &mut rng))
                .collect();
            let extra = children
                .into_par_iter()
                .enumerate()
                .map(|(i, c)| {
                    let e =
                        task.evaluate(&c, &mut self.streams.stream(Domain::Evaluation, &[g, slot as u64, i as u64]));
                    (c, e)
                })
                .collect();
            st.lifespan += 1;
            return Ok(SlotOutcome {
                state: st,
                reset: false,
                offspring: None,
                parent_feature: None,
                extra,
                failed: false,
                ga: true,
            });
        }

        let mut reset = false;
        if st.require_reset {
            let parent = self.archive.uniform_select(&mut rng, 1)?[0];
            st.mean = parent.genome.clone();
            st.mean_eval = Some(parent.eval.clone());
            st.optimizer = OptimizerState::zeros(st.mean.len());
            st.stagnation = 0;
            st.require_reset = false;
            st.lifespan = 0;
            if matches!(self.cfg.reset, ResetPolicy::Sequential { .. }) {
                st.mode = st.mode.swapped();
            }
            reset = true;
        }
        let source = match self.cfg.novelty.backend {
            NoveltyBackend::Elites => NoveltySource::Elites(&self.archive),
            _ => NoveltySource::Store(&self.novelty),
        };
        let objective = match st.mode {
            EmitterMode::Exploit => Objective::Fitness,
            EmitterMode::Explore => Objective::Novelty { source, k: self.cfg.novelty.k_nearest },
        };
        let parent_feature = st.mean_eval.as_ref().map(|e| e.feature.clone());
        st.lifespan += 1;
        match evaluated_es_step(
            &st.mean,
            &st.optimizer,
            &self.cfg.es,
            objective,
            task,
            &self.streams,
            &mut rng,
            g,
            slot as u64,
        ) {
            Ok(out) => {
                st.mean = out.step.mean.clone();
                st.optimizer = out.step.optimizer;
                st.mean_eval = Some(out.offspring.clone());
                let extra = if self.cfg.add_all_samples || self.cfg.novelty.insert_samples {
                    out.step.batch.genomes.into_iter().zip(out.sample_evals).collect()
                } else {
                    Vec::new()
                };
                Ok(SlotOutcome {
                    offspring: Some((out.step.mean, out.offspring)),
                    state: st,
                    reset,
                    parent_feature,
                    extra,
                    failed: false,
                    ga: false,
                })
            }
            Err(EsError::NonFiniteGradient) => Ok(SlotOutcome {
                state: st,
                reset,
                offspring: None,
                parent_feature,
                extra: Vec::new(),
                failed: true,
                ga: false,
            }),
            Err(e) => Err(e.into()),
        }
    }
}

impl QdAlgorithm for Memes {
    fn initialize(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        let mut report = GenerationReport::default();
        let seeds = seed_archive(&mut self.archive, task, &self.streams, self.cfg.n_emitters, 1, &mut report);
        self.emitters = init_emitters(&self.cfg, &seeds)?;
        self.novelty.insert(seeds.iter().filter(|s| s.1.is_valid()).map(|s| &s.1.feature))?;
        self.generation = 0;
        Ok(report)
    }

    fn step(&mut self, task: &dyn Task) -> Result<GenerationReport, AlgoError> {
        if self.emitters.is_empty() {
            return Err(AlgoError::Config("step called before initialize".into()));
        }
        check_genome_dim(task, "emitter mean", self.emitters[0].mean.len())?;
        let g = self.generation + 1;
        let outcomes: Vec<SlotOutcome> = {
            let this = &*self;
            this.emitters
                .par_iter()
                .enumerate()
                .map(|(slot, st)| this.slot_phase(slot, st, task, g))
                .collect::<Result<_, _>>()?
        };

        // barrier: archive writes in slot order
        let mut report = GenerationReport { generation: g, ..Default::default() };
        let mut novelty_batch: Vec<Vec<f64>> = Vec::new();
        for (slot, out) in outcomes.into_iter().enumerate() {
            let mut st = out.state;
            let mode = st.mode;
            report.evaluations += self.cfg.es.sample_count as u64 + 1;
            let mut added = false;
            if let Some((genome, eval)) = &out.offspring {
                let outcome = self.archive.try_add(genome, eval);
                report.invalid += u64::from(outcome == Insertion::Invalid);
                report.added.record(Some(mode), outcome);
                added = outcome.is_added();
                if eval.is_valid() {
                    if let Some(parent) = &out.parent_feature {
                        let source = match mode {
                            EmitterMode::Exploit => LineageSource::ExploitEs,
                            EmitterMode::Explore => LineageSource::ExploreEs,
                        };
                        report.lineage.push(Lineage {
                            source,
                            parent_feature: parent.clone(),
                            offspring_feature: eval.feature.clone(),
                        });
                    }
                    novelty_batch.push(eval.feature.clone());
                }
            } else if !out.ga {
                report.invalid += 1;
            }
            if out.ga || self.cfg.add_all_samples {
                for (genome, eval) in &out.extra {
                    let outcome = self.archive.try_add(genome, eval);
                    report.invalid += u64::from(outcome == Insertion::Invalid);
                    report.added.record(Some(mode), outcome);
                    added |= out.ga && outcome.is_added();
                }
            }
            if out.ga || self.cfg.novelty.insert_samples {
                novelty_batch.extend(out.extra.iter().filter(|(_, e)| e.is_valid()).map(|(_, e)| e.feature.clone()));
            }
            if out.ga {
                self.emitters[slot] = st;
                continue;
            }

            st.require_reset = stagnation_step(self.cfg.reset, &mut st.stagnation, st.lifespan, added) || out.failed;
            report.emitters.push(EmitterRecord { slot, mode, added, reset: out.reset, lifespan: st.lifespan });
            self.emitters[slot] = st;
        }
        self.novelty.insert(&novelty_batch)?;
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
    fn reset_policy_strings() {
        for (s, p) in [
            ("adaptive", ResetPolicy::Adaptive { budget: 32 }),
            ("adaptive:5", ResetPolicy::Adaptive { budget: 5 }),
            ("fixed:10", ResetPolicy::Fixed { period: 10 }),
            ("sequential", ResetPolicy::Sequential { period: 10 }),
            ("never", ResetPolicy::Never),
        ] {
            assert_eq!(s.parse::<ResetPolicy>().unwrap(), p);
            assert_eq!(p.to_string().parse::<ResetPolicy>().unwrap(), p);
        }
        for bad in ["fixed", "fixed:0", "adaptive:x", "sometimes", "never:3"] {
            assert!(bad.parse::<ResetPolicy>().is_err(), "{bad}");
        }
    }

    #[test]
    fn exploit_split() {
        assert_eq!(exploit_count(32, 0.5), 16);
        assert_eq!(exploit_count(1, 1.0), 1);
        assert_eq!(exploit_count(3, 0.5), 2);
        assert_eq!(exploit_count(5, 0.0), 0);
    }

    #[test]
    fn init_assigns_modes_and_seeds() {
        let seeds: Vec<(Genome, Evaluation)> =
            (0..2).map(|i| (vec![i as f64; 3], Evaluation::new(0.5, vec![0.1, 0.2]))).collect();
        let cfg = MemesConfig { n_emitters: 3, p_exploit: 0.5, ..Default::default() };
        let em = init_emitters(&cfg, &seeds).unwrap();
        let modes: Vec<_> = em.iter().map(|e| e.mode).collect();
        assert_eq!(modes, vec![EmitterMode::Exploit, EmitterMode::Exploit, EmitterMode::Explore]);
        assert_eq!(em[2].mean, vec![0.0; 3]);
        assert!(em.iter().all(|e| e.stagnation == 0 && e.lifespan == 0 && !e.require_reset));
        assert!(init_emitters(&cfg, &[]).is_err());
        let full = init_emitters(&MemesConfig { n_emitters: 32, ..Default::default() }, &seeds).unwrap();
        assert_eq!(full.iter().filter(|e| e.mode == EmitterMode::Exploit).count(), 16);
    }

    #[test]
    fn config_rejects_explorers_without_novelty() {
        let mut cfg = MemesConfig::default();
        cfg.novelty.backend = NoveltyBackend::None;
        assert!(cfg.validate().is_err());
        cfg.p_exploit = 1.0;
        cfg.validate().unwrap();
        cfg.p_exploit = 1.5;
        assert!(cfg.validate().is_err());
    }
}
