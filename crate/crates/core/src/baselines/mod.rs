//! Reference algorithms sharing the archive, ES and task layers.

mod es_family;
mod map_elites;
mod me_es;
mod variation;

pub use es_family::{EsFamily, EsFamilyConfig, EsVariant};
pub use map_elites::MapElites;
pub use me_es::{me_es_switch, MeEs, MeEsConfig};
pub use variation::{iso_line_variation, IsoLineConfig};

use crate::algorithm::AlgoError;
use crate::archive::GridSpec;
use crate::emitters::{Memes, MemesConfig, ResetPolicy};

/// MEMES with every emitter in the same mode, all reset and flipped every
/// `period` generations.
pub fn memes_sequential(mut cfg: MemesConfig, period: u64, grid: GridSpec, seed: u64) -> Result<Memes, AlgoError> {
    cfg.reset = ResetPolicy::Sequential { period };
    Memes::new(cfg, grid, seed)
}
