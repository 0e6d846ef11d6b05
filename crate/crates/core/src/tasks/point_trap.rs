use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Task, TaskSpec};
use crate::archive::{BoundedBox, Evaluation};
use crate::rng::StreamRng;

/// Control steps per episode.
pub const STEPS: usize = 10;
/// Largest per-axis displacement of a single step.
pub const MAX_SPEED: f64 = 0.1;
/// Wall rectangle `[x0, x1] x [y0, y1]` sitting across the forward direction.
pub const WALL: [f64; 4] = [0.25, 0.30, -0.25, 0.25];
/// Fixed control projection applied to each two-value genome slice.
pub const PROJECTION: [[f64; 2]; 2] = [[1.3, -0.4], [0.5, 1.1]];
/// Added to fitness in QD-score so every contribution is non-negative.
pub const FITNESS_OFFSET: f64 = 1.0;
/// Velocity-noise std used by `point_trap_noisy` when none is given.
pub const DEFAULT_VELOCITY_NOISE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointTrapParams {
    /// At least `2 * STEPS`; values beyond that are ignored.
    pub genome_dim: usize,
    pub noise_sigma: f64,
}

impl Default for PointTrapParams {
    fn default() -> Self {
        Self { genome_dim: 2 * STEPS, noise_sigma: 0.0 }
    }
}

/// Deceptive 2-D navigation: a point starting at the origin is rewarded for
/// its final `x`, but a wall blocks the straight path. Reaching beyond the
/// wall requires first moving sideways past its ends.
#[derive(Clone, Debug)]
pub struct PointTrap {
    noise: Option<Normal<f64>>,
    spec: TaskSpec,
}

/// Whether the segment `p -> q` touches the wall (Liang-Barsky clipping).
pub fn segment_hits_wall(p: (f64, f64), q: (f64, f64)) -> bool {
    let [x0, x1, y0, y1] = WALL;
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (den, num) in [(-dx, p.0 - x0), (dx, x1 - p.0), (-dy, p.1 - y0), (dy, y1 - p.1)] {
        if den == 0.0 {
            if num < 0.0 {
                return false;
            }
        } else {
            let t = num / den;
            if den < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

impl PointTrap {
    pub fn new(params: PointTrapParams) -> Result<Self, String> {
        if params.genome_dim < 2 * STEPS {
            return Err(format!("genome_dim must be >= {}, got {}", 2 * STEPS, params.genome_dim));
        }
        if !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite()) {
            return Err("noise_sigma must be non-negative".into());
        }
        let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("valid sigma"));
        let spec = TaskSpec {
            genome_dim: params.genome_dim,
            genome_domain: BoundedBox::uniform(params.genome_dim, -1.0, 1.0).expect("box"),
            feature_bounds: BoundedBox::uniform(2, -1.0, 1.0).expect("box"),
            stochastic: noise.is_some(),
            fitness_offset: FITNESS_OFFSET,
        };
        Ok(Self { noise, spec })
    }

    /// Positions after each step, starting with the origin.
    pub fn trajectory(&self, genome: &[f64], rng: &mut StreamRng) -> Vec<(f64, f64)> {
        let mut theta = genome.to_vec();
        self.spec.genome_domain.clip(&mut theta);
        let mut pos = (0.0, 0.0);
        let mut path = Vec::with_capacity(STEPS + 1);
        path.push(pos);
        for t in 0..STEPS {
            let s = [theta[2 * t], theta[2 * t + 1]];
            let mut v = PROJECTION.map(|row| MAX_SPEED * (row[0] * s[0] + row[1] * s[1]).tanh());
            if let Some(noise) = &self.noise {
                v.iter_mut().for_each(|c| *c += noise.sample(rng));
            }
            let next = (pos.0 + v[0], pos.1 + v[1]);
            if !segment_hits_wall(pos, next) {
                pos = next;
            }
            path.push(pos);
        }
        path
    }
}

impl Task for PointTrap {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, genome: &[f64], rng: &mut StreamRng) -> Evaluation {
        let &(x, y) = self.trajectory(genome, rng).last().expect("non-empty path");
        Evaluation::new(x, vec![x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)])
    }
}
