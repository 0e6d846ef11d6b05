use std::f64::consts::FRAC_PI_2;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Task, TaskSpec};
use crate::archive::{BoundedBox, Evaluation};
use crate::rng::StreamRng;

/// Actuation-noise standard deviation used by `arm_noisy` when none is given.
pub const DEFAULT_ARM_NOISE: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmParams {
    pub n_joints: usize,
    /// Joint angle at genome value 0 or 1, in radians from straight.
    pub joint_half_range: f64,
    /// Std of the Gaussian perturbation applied to every genome value.
    pub noise_sigma: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self { n_joints: 1000, joint_half_range: FRAC_PI_2, noise_sigma: 0.0 }
    }
}

/// Redundant planar arm with unit total length. Genome values in `[0, 1]`
/// map to relative joint angles; the feature is the end-effector position
/// rescaled to `[0, 1]^2` and the fitness rewards low joint-value spread.
#[derive(Clone, Debug)]
pub struct Arm {
    params: ArmParams,
    noise: Option<Normal<f64>>,
    spec: TaskSpec,
}

impl Arm {
    pub fn new(params: ArmParams) -> Result<Self, String> {
        if params.n_joints == 0 {
            return Err("n_joints must be >= 1".into());
        }
        if !(params.joint_half_range > 0.0 && params.joint_half_range.is_finite()) {
            return Err("joint_half_range must be positive".into());
        }
        if !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite()) {
            return Err("noise_sigma must be non-negative".into());
        }
        let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("valid sigma"));
        let spec = TaskSpec {
            genome_dim: params.n_joints,
            genome_domain: BoundedBox::uniform(params.n_joints, 0.0, 1.0).expect("unit box"),
            feature_bounds: BoundedBox::uniform(2, 0.0, 1.0).expect("unit box"),
            stochastic: noise.is_some(),
            fitness_offset: 0.0,
        };
        Ok(Self { params, noise, spec })
    }

    pub fn params(&self) -> &ArmParams {
        &self.params
    }

    /// End-effector position in `[-1, 1]^2` for joint values `theta`.
    pub fn forward_kinematics(&self, theta: &[f64]) -> (f64, f64) {
        let link = 1.0 / theta.len() as f64;
        let scale = 2.0 * self.params.joint_half_range;
        let (mut angle, mut x, mut y) = (0.0, 0.0, 0.0);
        for t in theta {
            angle += (t - 0.5) * scale;
            x += link * angle.cos();
            y += link * angle.sin();
        }
        (x, y)
    }

    pub fn smoothness(theta: &[f64]) -> f64 {
        let n = theta.len() as f64;
        let mean = theta.iter().sum::<f64>() / n;
        let var = theta.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        1.0 - var.sqrt()
    }
}

impl Task for Arm {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, genome: &[f64], rng: &mut StreamRng) -> Evaluation {
        let mut theta = genome.to_vec();
        self.spec.genome_domain.clip(&mut theta);
        if let Some(noise) = &self.noise {
            theta.iter_mut().for_each(|t| *t += noise.sample(rng));
        }
        let (x, y) = self.forward_kinematics(&theta);
        Evaluation::new(Self::smoothness(&theta), vec![(x + 1.0) / 2.0, (y + 1.0) / 2.0])
    }
}
