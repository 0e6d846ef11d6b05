#![allow(dead_code)]

use memes_core::rng::StreamRng;
use memes_core::tasks::{Task, TaskSpec};
use memes_core::{BoundedBox, Evaluation, GridSpec};
use rand_distr::{Distribution, Normal};

/// Negative squared distance to 0.3 in every coordinate; feature is the first
/// two coordinates. Optional additive feature noise.
pub struct Bowl {
    spec: TaskSpec,
    noise: f64,
}

impl Bowl {
    pub fn new(dim: usize, noise: f64) -> Self {
        Self {
            spec: TaskSpec {
                genome_dim: dim,
                genome_domain: BoundedBox::uniform(dim, 0.0, 1.0).unwrap(),
                feature_bounds: BoundedBox::uniform(2, 0.0, 1.0).unwrap(),
                stochastic: noise > 0.0,
                fitness_offset: 0.0,
            },
            noise,
        }
    }
}

impl Task for Bowl {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, g: &[f64], rng: &mut StreamRng) -> Evaluation {
        let f = -g.iter().map(|x| (x - 0.3).powi(2)).sum::<f64>();
        let mut d = vec![g[0], g[1]];
        if self.noise > 0.0 {
            let n = Normal::new(0.0, self.noise).unwrap();
            d.iter_mut().for_each(|x| *x += n.sample(rng));
        }
        Evaluation::new(f, d)
    }
}

/// Every genome scores the same and lands in the same cell, so nothing after
/// the first seed is ever accepted.
pub struct Flat {
    spec: TaskSpec,
}

impl Flat {
    pub fn new(dim: usize) -> Self {
        Self {
            spec: TaskSpec {
                genome_dim: dim,
                genome_domain: BoundedBox::uniform(dim, 0.0, 1.0).unwrap(),
                feature_bounds: BoundedBox::uniform(2, 0.0, 1.0).unwrap(),
                stochastic: false,
                fitness_offset: 0.0,
            },
        }
    }
}

impl Task for Flat {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn evaluate(&self, _: &[f64], _: &mut StreamRng) -> Evaluation {
        Evaluation::new(1.0, vec![0.5, 0.5])
    }
}

pub fn unit_grid(cells: usize) -> GridSpec {
    GridSpec::new(BoundedBox::uniform(2, 0.0, 1.0).unwrap(), vec![cells, cells]).unwrap()
}
