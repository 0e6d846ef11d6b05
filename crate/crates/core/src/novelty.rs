//! Novelty scores: mean feature-space distance to the K nearest stored features.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::EliteArchive;

/// Score returned when the store is empty; everything counts as novel.
pub const EMPTY_STORE_NOVELTY: f64 = f64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoveltyError {
    #[error("feature has dimensionality {got}, store holds {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid novelty config: {0}")]
    Config(String),
}

/// Where novelty is computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyBackend {
    /// Bounded first-in-first-out store of evaluated features.
    #[default]
    Fifo,
    /// Unbounded store of every evaluated feature.
    All,
    /// Features of the current elites.
    Elites,
    /// No novelty computation; only valid without novelty-driven emitters.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoveltyConfig {
    pub k_nearest: usize,
    pub fifo_capacity: usize,
    pub backend: NoveltyBackend,
    /// Also insert the features of every ES sample, not only offspring.
    pub insert_samples: bool,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self { k_nearest: 10, fifo_capacity: 50_000, backend: NoveltyBackend::Fifo, insert_samples: false }
    }
}

impl NoveltyConfig {
    pub fn validate(&self) -> Result<(), NoveltyError> {
        if self.k_nearest == 0 {
            return Err(NoveltyError::Config("k_nearest must be >= 1".into()));
        }
        if self.fifo_capacity < self.k_nearest {
            return Err(NoveltyError::Config(format!(
                "fifo_capacity ({}) must be >= k_nearest ({})",
                self.fifo_capacity, self.k_nearest
            )));
        }
        Ok(())
    }
}

/// Anything that exposes a collection of feature vectors.
pub trait FeatureStore {
    fn feature_count(&self) -> usize;
    fn for_each_feature<F: FnMut(&[f64])>(&self, f: F);
}

impl FeatureStore for EliteArchive {
    fn feature_count(&self) -> usize {
        self.len()
    }

    fn for_each_feature<F: FnMut(&[f64])>(&self, mut f: F) {
        for (_, e) in self.elites() {
            f(&e.eval.feature);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoveltyArchive {
    backend: NoveltyBackend,
    capacity: Option<usize>,
    dim: Option<usize>,
    features: VecDeque<Vec<f64>>,
    inserted: u64,
}

impl NoveltyArchive {
    pub fn new(cfg: &NoveltyConfig) -> Self {
        let capacity = match cfg.backend {
            NoveltyBackend::Fifo => Some(cfg.fifo_capacity),
            _ => None,
        };
        Self { backend: cfg.backend, capacity, dim: None, features: VecDeque::new(), inserted: 0 }
    }

    pub fn fifo(capacity: usize) -> Self {
        Self::new(&NoveltyConfig { fifo_capacity: capacity, backend: NoveltyBackend::Fifo, ..Default::default() })
    }

    pub fn unbounded() -> Self {
        Self::new(&NoveltyConfig { backend: NoveltyBackend::All, ..Default::default() })
    }

    pub fn backend(&self) -> NoveltyBackend {
        self.backend
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Number of features ever offered, evicted or not.
    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.iter().map(Vec::as_slice)
    }

    /// Appends `features` in order, evicting the oldest entries once a fifo
    /// store is full. The `elites` and `none` backends store nothing.
    pub fn insert<I, V>(&mut self, features: I) -> Result<(), NoveltyError>
    where
        I: IntoIterator<Item = V>,
        V: AsRef<[f64]>,
    {
        if matches!(self.backend, NoveltyBackend::Elites | NoveltyBackend::None) {
            return Ok(());
        }
        for f in features {
            let f = f.as_ref();
            match self.dim {
                Some(d) if d != f.len() => return Err(NoveltyError::Dimension { expected: d, got: f.len() }),
                None => self.dim = Some(f.len()),
                _ => {}
            }
            if let Some(cap) = self.capacity {
                if self.features.len() == cap {
                    self.features.pop_front();
                }
            }
            self.features.push_back(f.to_vec());
            self.inserted += 1;
        }
        Ok(())
    }
}

impl FeatureStore for NoveltyArchive {
    fn feature_count(&self) -> usize {
        self.len()
    }

    fn for_each_feature<F: FnMut(&[f64])>(&self, mut f: F) {
        for x in &self.features {
            f(x);
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from `query` to its `k` nearest stored features (all of them
/// when fewer than `k` are stored).
pub fn novelty_score<S: FeatureStore + ?Sized>(query: &[f64], store: &S, k: usize) -> f64 {
    if store.feature_count() == 0 || k == 0 {
        return EMPTY_STORE_NOVELTY;
    }
    let mut dists = Vec::with_capacity(store.feature_count());
    store.for_each_feature(|f| dists.push(euclidean(query, f)));
    let k = k.min(dists.len());
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        dists.truncate(k);
    }
    dists.sort_by(f64::total_cmp);
    dists.iter().sum::<f64>() / k as f64
}

/// Read-only view the explore objective scores against during a generation.
#[derive(Clone, Copy)]
pub enum NoveltySource<'a> {
    Store(&'a NoveltyArchive),
    Elites(&'a EliteArchive),
}

impl NoveltySource<'_> {
    pub fn score(&self, query: &[f64], k: usize) -> f64 {
        match self {
            NoveltySource::Store(s) => novelty_score(query, *s, k),
            NoveltySource::Elites(a) => novelty_score(query, *a, k),
        }
    }
}
