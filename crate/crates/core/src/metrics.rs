//! Archive scores, corrected (re-evaluated) archives and run statistics.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoError, EmitterMode, GenerationReport, LineageSource};
use crate::archive::{EliteArchive, GridSpec};
use crate::novelty::euclidean;
use crate::rng::{Domain, Streams};
use crate::tasks::{reevaluate, Task};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetrics {
    /// Sum over elites of `fitness + offset`.
    pub qd_score: f64,
    pub coverage: f64,
    /// `-inf` for an empty archive.
    pub max_fitness: f64,
    pub occupied_cells: usize,
}

pub fn archive_metrics(archive: &EliteArchive, fitness_offset: f64) -> ArchiveMetrics {
    let mut qd_score = 0.0;
    let mut max_fitness = f64::NEG_INFINITY;
    for (_, e) in archive.elites() {
        qd_score += e.eval.fitness + fitness_offset;
        max_fitness = max_fitness.max(e.eval.fitness);
    }
    ArchiveMetrics {
        qd_score,
        coverage: archive.len() as f64 / archive.spec().total_cells() as f64,
        max_fitness,
        occupied_cells: archive.len(),
    }
}

/// `100 * (original - corrected) / original`, or 0 when `original <= 0`.
pub fn loss_pct(original: f64, corrected: f64) -> f64 {
    if original > 0.0 {
        100.0 * (original - corrected) / original
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPct {
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub original: ArchiveMetrics,
    pub corrected: ArchiveMetrics,
    pub loss_pct: LossPct,
    pub reevaluations: usize,
    /// Mean over elites of the within-elite fitness std across draws.
    pub mean_fitness_std: f64,
    /// Mean over elites of the within-elite feature std, per axis.
    pub mean_feature_std: Vec<f64>,
    /// Mean over elites of `|stored fitness - mean fitness|`.
    pub mean_fitness_shift: f64,
    /// Mean over elites of `|| stored feature - mean feature ||`.
    pub mean_feature_shift: f64,
}

/// Re-evaluates every elite `m` times and inserts the mean estimates into an
/// empty archive with the same grid. Elite `i` (flat cell index) uses the
/// re-evaluation stream `(seed, i)`.
pub fn corrected_archive(
    archive: &EliteArchive,
    task: &dyn Task,
    m: usize,
    seed: u64,
    fitness_offset: f64,
) -> Result<(EliteArchive, CorrectionReport), AlgoError> {
    if m == 0 {
        return Err(AlgoError::Config("re-evaluation count must be >= 1".into()));
    }
    let streams = Streams::new(seed);
    let elites: Vec<_> = archive.elites().collect();
    let reevals: Vec<_> = elites
        .par_iter()
        .map(|(flat, e)| reevaluate(&e.genome, task, m, &mut streams.stream(Domain::Reevaluation, &[*flat as u64])))
        .collect();
    let mut corrected = EliteArchive::new(archive.spec().clone())?;
    for ((_, e), r) in elites.iter().zip(&reevals) {
        corrected.try_add(&e.genome, &r.mean);
    }
    let n = elites.len().max(1) as f64;
    let dim = archive.spec().dim();
    let mut mean_feature_std = vec![0.0; dim];
    for r in &reevals {
        for (acc, s) in mean_feature_std.iter_mut().zip(&r.feature_std) {
            *acc += s / n;
        }
    }
    let original = archive_metrics(archive, fitness_offset);
    let corr = archive_metrics(&corrected, fitness_offset);
    let report = CorrectionReport {
        loss_pct: LossPct {
            qd_score: loss_pct(original.qd_score, corr.qd_score),
            coverage: loss_pct(original.coverage, corr.coverage),
            max_fitness: loss_pct(original.max_fitness, corr.max_fitness),
        },
        original,
        corrected: corr,
        reevaluations: m,
        mean_fitness_std: reevals.iter().map(|r| r.fitness_std).sum::<f64>() / n,
        mean_feature_std,
        mean_fitness_shift: elites
            .iter()
            .zip(&reevals)
            .map(|((_, e), r)| (e.eval.fitness - r.mean.fitness).abs())
            .sum::<f64>()
            / n,
        mean_feature_shift: elites
            .iter()
            .zip(&reevals)
            .map(|((_, e), r)| euclidean(&e.eval.feature, &r.mean.feature))
            .sum::<f64>()
            / n,
    };
    Ok((corrected, report))
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: usize,
}

impl DistanceSummary {
    pub fn from_values(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        Some(Self {
            median: quantile_sorted(&values, 0.5),
            q1: quantile_sorted(&values, 0.25),
            q3: quantile_sorted(&values, 0.75),
            count: values.len(),
        })
    }
}

/// Parent-offspring feature distances of one report, in units of the mean
/// cell width, restricted to lineages accepted by `keep`.
pub fn lineage_distances(report: &GenerationReport, grid: &GridSpec, keep: impl Fn(LineageSource) -> bool) -> Vec<f64> {
    let width = grid.mean_cell_width();
    report
        .lineage
        .iter()
        .filter(|l| keep(l.source))
        .map(|l| euclidean(&l.parent_feature, &l.offspring_feature) / width)
        .collect()
}

/// Per-generation distance summary for fitness-driven operators (exploit ES
/// emitters, iso+line variation). Generations without such offspring are
/// absent.
pub fn parent_offspring_distance<'a, I>(reports: I, grid: &GridSpec) -> Vec<(u64, DistanceSummary)>
where
    I: IntoIterator<Item = &'a GenerationReport>,
{
    reports
        .into_iter()
        .filter_map(|r| {
            DistanceSummary::from_values(lineage_distances(r, grid, LineageSource::is_local_optimizer))
                .map(|s| (r.generation, s))
        })
        .collect()
}

/// Mean emitter episode length (reset to reset) per mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LifespanTracker {
    /// slot -> (mode, steps in the current episode)
    current: HashMap<usize, (EmitterMode, u64)>,
    completed: Vec<(EmitterMode, u64)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LifespanSummary {
    pub exploit: Option<f64>,
    pub explore: Option<f64>,
    pub exploit_episodes: usize,
    pub explore_episodes: usize,
}

impl LifespanTracker {
    pub fn observe(&mut self, report: &GenerationReport) {
        for rec in &report.emitters {
            if rec.reset {
                if let Some(prev) = self.current.remove(&rec.slot) {
                    self.completed.push(prev);
                }
            }
            self.current.insert(rec.slot, (rec.mode, rec.lifespan));
        }
    }

    /// Completed episodes plus the ongoing ones at their current length.
    pub fn summary(&self) -> LifespanSummary {
        let mut sums = [(0u64, 0usize); 2];
        for (mode, len) in self.completed.iter().chain(self.current.values()) {
            let s = &mut sums[(*mode == EmitterMode::Explore) as usize];
            s.0 += len;
            s.1 += 1;
        }
        let mean = |(total, n): (u64, usize)| (n > 0).then(|| total as f64 / n as f64);
        LifespanSummary {
            exploit: mean(sums[0]),
            explore: mean(sums[1]),
            exploit_episodes: sums[0].1,
            explore_episodes: sums[1].1,
        }
    }
}

pub fn emitter_lifespans<'a, I>(reports: I) -> LifespanSummary
where
    I: IntoIterator<Item = &'a GenerationReport>,
{
    let mut t = LifespanTracker::default();
    reports.into_iter().for_each(|r| t.observe(r));
    t.summary()
}

/// One line of the metrics log. Counters and distances cover the generations
/// since the previous row; archive metrics are taken at `generation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub generation: u64,
    pub evaluations: u64,
    pub qd_score: f64,
    pub coverage: f64,
    pub max_fitness: f64,
    pub occupied_cells: usize,
    pub added_exploit: u64,
    pub added_explore: u64,
    pub added_other: u64,
    pub invalid: u64,
    pub lifespan_exploit: Option<f64>,
    pub lifespan_explore: Option<f64>,
    pub po_dist_median: Option<f64>,
    pub po_dist_q1: Option<f64>,
    pub po_dist_q3: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{EmitterRecord, Lineage};
    use crate::archive::{BoundedBox, Evaluation};
    use crate::rng::Streams;
    use rand::Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(BoundedBox::uniform(2, 0.0, 1.0).unwrap(), vec![n, n]).unwrap()
    }

    #[test]
    fn metrics_examples() {
        let mut a = EliteArchive::new(grid(10)).unwrap();
        let empty = archive_metrics(&a, 0.0);
        assert_eq!((empty.qd_score, empty.coverage, empty.occupied_cells), (0.0, 0.0, 0));
        assert_eq!(empty.max_fitness, f64::NEG_INFINITY);
        a.try_add(&[0.0], &Evaluation::new(0.5, vec![0.05, 0.05]));
        a.try_add(&[0.0], &Evaluation::new(0.7, vec![0.95, 0.95]));
        let m = archive_metrics(&a, 0.0);
        assert!((m.qd_score - 1.2).abs() < 1e-15);
        assert_eq!(m.coverage, 0.02);
        assert_eq!(m.max_fitness, 0.7);
        assert!((archive_metrics(&a, 1.0).qd_score - 3.2).abs() < 1e-15);
    }

    #[test]
    fn qd_score_is_additive_over_disjoint_archives() {
        let mut r = Streams::new(3).stream(Domain::Selection, &[]);
        let (mut left, mut right, mut both) = (
            EliteArchive::new(grid(8)).unwrap(),
            EliteArchive::new(grid(8)).unwrap(),
            EliteArchive::new(grid(8)).unwrap(),
        );
        for _ in 0..200 {
            let e = Evaluation::new(r.random(), vec![r.random(), r.random()]);
            if e.feature[0] < 0.5 {
                left.try_add(&[0.0], &e)
            } else {
                right.try_add(&[0.0], &e)
            };
            both.try_add(&[0.0], &e);
        }
        let sum = archive_metrics(&left, 0.0).qd_score + archive_metrics(&right, 0.0).qd_score;
        assert!((archive_metrics(&both, 0.0).qd_score - sum).abs() < 1e-9);
        assert_eq!(archive_metrics(&both, 0.0).coverage, both.len() as f64 / 64.0);
    }

    #[test]
    fn loss_percentages() {
        assert_eq!(loss_pct(10.0, 7.5), 25.0);
        assert_eq!(loss_pct(0.0, 1.0), 0.0);
        assert_eq!(loss_pct(4.0, 4.0), 0.0);
    }

    #[test]
    fn quantiles_match_hand_table() {
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.75), 4.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
    }

    fn lineage(parent: [f64; 2], child: [f64; 2], source: LineageSource) -> Lineage {
        Lineage { source, parent_feature: parent.to_vec(), offspring_feature: child.to_vec() }
    }

    #[test]
    fn distance_normalization() {
        let g = grid(10);
        let report = GenerationReport {
            generation: 4,
            lineage: vec![
                lineage([0.3, 0.3], [0.3, 0.3], LineageSource::ExploitEs),
                lineage([0.3, 0.3], [0.4, 0.3], LineageSource::ExploitEs),
                lineage([0.0, 0.0], [0.9, 0.9], LineageSource::ExploreEs),
            ],
            ..Default::default()
        };
        let d = lineage_distances(&report, &g, LineageSource::is_local_optimizer);
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() < 1e-12);
        assert_eq!(d.len(), 2);
        let rows = parent_offspring_distance([&report, &GenerationReport::default()], &g);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].0, 4);
        assert!((rows[0].1.median - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distance_random_pairs_against_formula() {
        let mut r = Streams::new(12).stream(Domain::Selection, &[]);
        let g = grid(10);
        for _ in 0..50 {
            let (p, c) = ([r.random(), r.random()], [r.random(), r.random()]);
            let rep = GenerationReport { lineage: vec![lineage(p, c, LineageSource::Variation)], ..Default::default() };
            let hand = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() / 0.1;
            assert!((lineage_distances(&rep, &g, |_| true)[0] - hand).abs() < 1e-12);
        }
    }

    fn gen_with(g: u64, recs: Vec<(usize, EmitterMode, bool, u64)>) -> GenerationReport {
        GenerationReport {
            generation: g,
            emitters: recs
                .into_iter()
                .map(|(slot, mode, reset, lifespan)| EmitterRecord { slot, mode, added: false, reset, lifespan })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn lifespans_fixed_period() {
        // two emitters reset every 10 generations for 200 generations
        let reports: Vec<_> = (1..=200u64)
            .map(|g| {
                let life = (g - 1) % 10 + 1;
                gen_with(
                    g,
                    vec![
                        (0, EmitterMode::Exploit, life == 1 && g > 1, life),
                        (1, EmitterMode::Explore, life == 1 && g > 1, life),
                    ],
                )
            })
            .collect();
        let s = emitter_lifespans(&reports);
        assert_eq!(s.exploit, Some(10.0));
        assert_eq!(s.explore, Some(10.0));
        assert_eq!(s.exploit_episodes, 20);
    }

    #[test]
    fn lifespans_never_reset_and_mixed() {
        let reports: Vec<_> = (1..=200u64).map(|g| gen_with(g, vec![(0, EmitterMode::Exploit, false, g)])).collect();
        assert_eq!(emitter_lifespans(&reports).exploit, Some(200.0));
        assert_eq!(emitter_lifespans(&reports).explore, None);
        let reports = vec![
            gen_with(1, vec![(0, EmitterMode::Explore, false, 1)]),
            gen_with(2, vec![(0, EmitterMode::Explore, false, 2)]),
            gen_with(3, vec![(0, EmitterMode::Explore, false, 3)]),
            gen_with(4, vec![(0, EmitterMode::Explore, true, 1)]),
        ];
        let s = emitter_lifespans(&reports);
        assert_eq!(s.explore, Some(2.0));
        assert_eq!(s.explore_episodes, 2);
    }
}
