//! Benchmark tasks and the registry that builds them from config.

mod arm;
mod point_trap;

pub use arm::{Arm, ArmParams, DEFAULT_ARM_NOISE};
pub use point_trap::{
    segment_hits_wall, PointTrap, PointTrapParams, DEFAULT_VELOCITY_NOISE, FITNESS_OFFSET, MAX_SPEED, PROJECTION,
    STEPS, WALL,
};

use serde::{Deserialize, Serialize};

use crate::archive::{BoundedBox, Evaluation};
use crate::rng::StreamRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub genome_dim: usize,
    pub genome_domain: BoundedBox,
    pub feature_bounds: BoundedBox,
    /// Whether repeated evaluations of one genome may differ.
    pub stochastic: bool,
    /// Added to every fitness when computing the QD-score.
    pub fitness_offset: f64,
}

/// A QD evaluation function. Deterministic tasks must not draw from `rng`.
pub trait Task: Send + Sync {
    fn spec(&self) -> &TaskSpec;
    fn evaluate(&self, genome: &[f64], rng: &mut StreamRng) -> Evaluation;
}

pub const TASK_NAMES: [&str; 4] = ["arm", "arm_noisy", "point_trap", "point_trap_noisy"];

/// Task name plus its parameter block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TaskConfig {
    Arm(ArmParams),
    /// `noise_sigma = 0` selects the default actuation noise.
    ArmNoisy(ArmParams),
    PointTrap(PointTrapParams),
    /// `noise_sigma = 0` selects the default velocity noise.
    PointTrapNoisy(PointTrapParams),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Arm(_) => "arm",
            TaskConfig::ArmNoisy(_) => "arm_noisy",
            TaskConfig::PointTrap(_) => "point_trap",
            TaskConfig::PointTrapNoisy(_) => "point_trap_noisy",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Task>, String> {
        Ok(match self {
            TaskConfig::Arm(p) => {
                if p.noise_sigma != 0.0 {
                    return Err("task 'arm' is deterministic; use 'arm_noisy' for noise_sigma".into());
                }
                Box::new(Arm::new(p.clone())?)
            }
            TaskConfig::ArmNoisy(p) => {
                let mut p = p.clone();
                if p.noise_sigma == 0.0 {
                    p.noise_sigma = DEFAULT_ARM_NOISE;
                }
                Box::new(Arm::new(p)?)
            }
            TaskConfig::PointTrap(p) => {
                if p.noise_sigma != 0.0 {
                    return Err("task 'point_trap' is deterministic; use 'point_trap_noisy' for noise_sigma".into());
                }
                Box::new(PointTrap::new(p.clone())?)
            }
            TaskConfig::PointTrapNoisy(p) => {
                let mut p = p.clone();
                if p.noise_sigma == 0.0 {
                    p.noise_sigma = DEFAULT_VELOCITY_NOISE;
                }
                Box::new(PointTrap::new(p)?)
            }
        })
    }

    /// Default grid resolution for the task's feature space.
    pub fn default_cells(&self) -> Vec<usize> {
        match self {
            TaskConfig::Arm(_) | TaskConfig::ArmNoisy(_) => vec![100, 100],
            TaskConfig::PointTrap(_) | TaskConfig::PointTrapNoisy(_) => vec![50, 50],
        }
    }
}

/// Mean of repeated evaluations plus per-component spread.
#[derive(Clone, Debug, PartialEq)]
pub struct Reevaluation {
    pub mean: Evaluation,
    pub fitness_std: f64,
    pub feature_std: Vec<f64>,
    pub samples: usize,
}

/// Component-wise mean of `m` independent evaluations. A deterministic task
/// is evaluated once and reported with zero spread.
pub fn reevaluate(genome: &[f64], task: &dyn Task, m: usize, rng: &mut StreamRng) -> Reevaluation {
    assert!(m >= 1, "need at least one evaluation");
    if !task.spec().stochastic || m == 1 {
        let e = task.evaluate(genome, rng);
        let dim = e.feature.len();
        return Reevaluation { mean: e, fitness_std: 0.0, feature_std: vec![0.0; dim], samples: m };
    }
    let draws: Vec<Evaluation> = (0..m).map(|_| task.evaluate(genome, rng)).collect();
    let n = m as f64;
    let dim = draws[0].feature.len();
    let f_mean = draws.iter().map(|e| e.fitness).sum::<f64>() / n;
    let d_mean: Vec<f64> = (0..dim).map(|j| draws.iter().map(|e| e.feature[j]).sum::<f64>() / n).collect();
    let f_std = (draws.iter().map(|e| (e.fitness - f_mean).powi(2)).sum::<f64>() / n).sqrt();
    let d_std =
        (0..dim).map(|j| (draws.iter().map(|e| (e.feature[j] - d_mean[j]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    Reevaluation { mean: Evaluation::new(f_mean, d_mean), fitness_std: f_std, feature_std: d_std, samples: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, Streams};

    #[test]
    fn registry_builds_every_task() {
        for cfg in [
            TaskConfig::Arm(ArmParams { n_joints: 5, ..Default::default() }),
            TaskConfig::ArmNoisy(ArmParams { n_joints: 5, ..Default::default() }),
            TaskConfig::PointTrap(PointTrapParams::default()),
            TaskConfig::PointTrapNoisy(PointTrapParams::default()),
        ] {
            let t = cfg.build().unwrap();
            assert_eq!(t.spec().stochastic, cfg.name().ends_with("noisy"));
            assert!(TASK_NAMES.contains(&cfg.name()));
        }
        assert!(TaskConfig::Arm(ArmParams { noise_sigma: 0.1, ..Default::default() }).build().is_err());
    }

    #[test]
    fn reevaluate_deterministic_is_exact() {
        let t = TaskConfig::Arm(ArmParams { n_joints: 7, ..Default::default() }).build().unwrap();
        let g = [0.1, 0.9, 0.3, 0.3, 0.5, 0.7, 0.2];
        let mut r = Streams::new(1).stream(Domain::Reevaluation, &[]);
        let single = t.evaluate(&g, &mut r);
        for m in [1, 2, 3, 17] {
            let re = reevaluate(&g, t.as_ref(), m, &mut r);
            assert_eq!(re.mean, single);
            assert_eq!(re.fitness_std, 0.0);
        }
    }

    #[test]
    fn reevaluate_single_draw_matches_evaluate() {
        let t = TaskConfig::ArmNoisy(ArmParams { n_joints: 7, ..Default::default() }).build().unwrap();
        let g = [0.5; 7];
        let s = Streams::new(3);
        let one = t.evaluate(&g, &mut s.stream(Domain::Reevaluation, &[0]));
        let re = reevaluate(&g, t.as_ref(), 1, &mut s.stream(Domain::Reevaluation, &[0]));
        assert_eq!(re.mean, one);
    }

    #[test]
    fn mean_feature_spread_scales_with_inverse_sqrt_m() {
        let t =
            TaskConfig::ArmNoisy(ArmParams { n_joints: 20, noise_sigma: 0.05, ..Default::default() }).build().unwrap();
        let g = vec![0.45; 20];
        let spread = |m: usize| {
            let reps = 400;
            let xs: Vec<f64> = (0..reps)
                .map(|k| {
                    let mut r = Streams::new(8).stream(Domain::Reevaluation, &[m as u64, k]);
                    reevaluate(&g, t.as_ref(), m, &mut r).mean.feature[1]
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
        };
        let ratio = spread(4) / spread(16);
        // ideal ratio is sqrt(16 / 4) = 2
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    }
}
