use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::{BoundedBox, Genome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsoLineConfig {
    pub iso_sigma: f64,
    pub line_sigma: f64,
    pub batch_size: usize,
}

impl Default for IsoLineConfig {
    fn default() -> Self {
        Self { iso_sigma: 0.01, line_sigma: 0.1, batch_size: 128 }
    }
}

impl IsoLineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.iso_sigma > 0.0 && self.line_sigma > 0.0) {
            return Err("iso_sigma and line_sigma must be positive".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        Ok(())
    }
}

/// `parent1 + iso * n + line * u * (parent2 - parent1)` with per-coordinate
/// `n ~ N(0, 1)` and a single scalar `u ~ N(0, 1)`, clipped to `domain`.
pub fn iso_line_variation<R: Rng + ?Sized>(
    parent1: &[f64],
    parent2: &[f64],
    cfg: &IsoLineConfig,
    domain: &BoundedBox,
    rng: &mut R,
) -> Genome {
    assert_eq!(parent1.len(), parent2.len(), "parents differ in dimensionality");
    let u: f64 = rng.sample(StandardNormal);
    let mut child: Genome = parent1
        .iter()
        .zip(parent2)
        .map(|(a, b)| {
            let n: f64 = rng.sample(StandardNormal);
            a + cfg.iso_sigma * n + cfg.line_sigma * u * (b - a)
        })
        .collect();
    domain.clip(&mut child);
    child
}
