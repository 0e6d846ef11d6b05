//! MAP-Elites with a pool of parallel evolution-strategy emitters (MEMES),
//! the baselines it is compared against, two benchmark tasks and the
//! quality-diversity metrics used to score them.
//!
//! Every algorithm implements [`QdAlgorithm`] and is driven by
//! [`run::drive`]. All randomness comes from [`rng::Streams`], so a run is a
//! pure function of its config and seed regardless of thread count.

pub mod algorithm;
pub mod archive;
pub mod baselines;
pub mod emitters;
pub mod es;
pub mod metrics;
pub mod novelty;
pub mod rng;
pub mod run;
pub mod tasks;

pub use algorithm::{AlgoError, EmitterMode, GenerationReport, QdAlgorithm};
pub use archive::{ArchiveError, BoundedBox, Elite, EliteArchive, Evaluation, Genome, GridSpec, Insertion};
pub use emitters::{Memes, MemesConfig, ResetPolicy};
pub use run::{drive, RunError, RunObserver, RunOptions, RunOutput};
pub use tasks::{Task, TaskConfig};
