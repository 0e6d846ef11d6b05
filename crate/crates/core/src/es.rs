//! Gaussian evolution strategy with a fixed sampling radius.
//!
//! One step samples `N` perturbations around the current mean, scores them,
//! replaces the raw scores by centered ranks and moves the mean along the
//! resulting search-gradient estimate with an Adam or plain SGD update.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Genome;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsError {
    #[error("invalid ES config: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("objective returned {got} scores for {expected} samples")]
    ScoreCount { expected: usize, got: usize },
    #[error("non-finite mean")]
    NonFiniteMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsConfig {
    pub sample_count: usize,
    pub sigma: f64,
    pub learning_rate: f64,
    pub l2_coefficient: f64,
    pub optimizer: OptimizerKind,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            sample_count: 512,
            sigma: 0.02,
            learning_rate: 0.01,
            l2_coefficient: 0.0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<(), EsError> {
        if self.sample_count < 2 {
            return Err(EsError::Config(format!("sample_count must be >= 2, got {}", self.sample_count)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(EsError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EsError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return Err(EsError::Config(format!("l2_coefficient must be non-negative, got {}", self.l2_coefficient)));
        }
        Ok(())
    }
}

/// Adam moments; all zero right after an emitter reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn zeros(dim: usize) -> Self {
        Self { first_moment: vec![0.0; dim], second_moment: vec![0.0; dim], step_count: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub noise: Vec<Vec<f64>>,
    pub genomes: Vec<Genome>,
    /// Empty until the batch has been scored.
    pub raw_scores: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }
}

/// Draws `N` standard-normal perturbations and the matching search points
/// `mean + sigma * noise`.
pub fn sample_batch<R: Rng + ?Sized>(mean: &[f64], cfg: &EsConfig, rng: &mut R) -> Result<SampleBatch, EsError> {
    cfg.validate()?;
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(EsError::NonFiniteMean);
    }
    let mut noise = Vec::with_capacity(cfg.sample_count);
    let mut genomes = Vec::with_capacity(cfg.sample_count);
    for _ in 0..cfg.sample_count {
        let eps: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        genomes.push(mean.iter().zip(&eps).map(|(m, e)| m + cfg.sigma * e).collect());
        noise.push(eps);
    }
    Ok(SampleBatch { noise, genomes, raw_scores: Vec::new() })
}

/// Centered ranks in `[-0.5, 0.5]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shaped {
    pub values: Vec<f64>,
    /// Scores that were NaN or infinite and got the worst ranks.
    pub non_finite: usize,
}

/// `rank_i / (N - 1) - 0.5` with ascending ranks (0 = worst). Ties are broken
/// by sample index; non-finite scores rank below every finite one.
pub fn rank_shape(raw: &[f64]) -> Shaped {
    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match (raw[a].is_finite(), raw[b].is_finite()) {
        (true, true) => raw[a].partial_cmp(&raw[b]).expect("finite scores"),
        (false, true) => std::cmp::Ordering::Less,
        (true, false) => std::cmp::Ordering::Greater,
        (false, false) => std::cmp::Ordering::Equal,
    });
    let mut values = vec![0.0; n];
    let denom = n.saturating_sub(1).max(1) as f64;
    for (rank, &i) in order.iter().enumerate() {
        values[i] = rank as f64 / denom - 0.5;
    }
    Shaped { values, non_finite: raw.iter().filter(|s| !s.is_finite()).count() }
}

/// Search-gradient estimate `(1 / (N sigma)) * sum_i shaped_i * noise_i`.
pub fn estimate_gradient(noise: &[Vec<f64>], shaped: &[f64], sigma: f64) -> Vec<f64> {
    let dim = noise.first().map_or(0, Vec::len);
    let mut grad = vec![0.0; dim];
    for (eps, &w) in noise.iter().zip(shaped) {
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += w * e;
        }
    }
    let scale = 1.0 / (noise.len() as f64 * sigma);
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

/// One ascent step on `grad - l2 * mean`.
pub fn optimizer_update(
    mean: &[f64],
    grad: &[f64],
    state: &OptimizerState,
    cfg: &EsConfig,
) -> Result<(Genome, OptimizerState), EsError> {
    if grad.len() != mean.len() {
        return Err(EsError::Dimension { expected: mean.len(), got: grad.len() });
    }
    if state.first_moment.len() != mean.len() || state.second_moment.len() != mean.len() {
        return Err(EsError::Dimension { expected: mean.len(), got: state.first_moment.len() });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(EsError::NonFiniteGradient);
    }
    let lr = cfg.learning_rate;
    let step_count = state.step_count + 1;
    let mut next = state.clone();
    next.step_count = step_count;
    let mut new_mean = mean.to_vec();
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (m, g) in new_mean.iter_mut().zip(grad) {
                *m += lr * (g - cfg.l2_coefficient * *m);
            }
        }
        OptimizerKind::Adam => {
            let t = step_count as i32;
            let a = lr * (1.0 - ADAM_BETA2.powi(t)).sqrt() / (1.0 - ADAM_BETA1.powi(t));
            for i in 0..mean.len() {
                let g = grad[i] - cfg.l2_coefficient * mean[i];
                let m1 = ADAM_BETA1 * next.first_moment[i] + (1.0 - ADAM_BETA1) * g;
                let m2 = ADAM_BETA2 * next.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                next.first_moment[i] = m1;
                next.second_moment[i] = m2;
                new_mean[i] += a * m1 / (m2.sqrt() + ADAM_EPSILON);
            }
        }
    }
    Ok((new_mean, next))
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub mean: Genome,
    pub optimizer: OptimizerState,
    /// The scored batch; its samples may be offered to an archive.
    pub batch: SampleBatch,
    pub shaped: Shaped,
}

/// Sample, score through `objective`, shape, estimate and update.
///
/// `objective` receives the whole batch and returns one score per sample so
/// callers can evaluate the samples in parallel.
pub fn es_step<R, F>(
    mean: &[f64],
    state: &OptimizerState,
    cfg: &EsConfig,
    rng: &mut R,
    objective: F,
) -> Result<StepOutput, EsError>
where
    R: Rng + ?Sized,
    F: FnOnce(&SampleBatch) -> Vec<f64>,
{
    let mut batch = sample_batch(mean, cfg, rng)?;
    let scores = objective(&batch);
    if scores.len() != batch.len() {
        return Err(EsError::ScoreCount { expected: batch.len(), got: scores.len() });
    }
    batch.raw_scores = scores;
    let shaped = rank_shape(&batch.raw_scores);
    let grad = estimate_gradient(&batch.noise, &shaped.values, cfg.sigma);
    let (new_mean, optimizer) = optimizer_update(mean, &grad, state, cfg)?;
    Ok(StepOutput { mean: new_mean, optimizer, batch, shaped })
}
