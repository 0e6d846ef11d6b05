//! Seeded random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose key is derived
//! from `(run seed, subsystem, indices...)`. A stream never depends on which
//! thread consumes it or on how many other streams were used before, so thread
//! count and scheduling cannot change the output of a run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Subsystem tags keeping derived streams disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    /// Initial random genomes.
    Seeding = 1,
    /// Per-emitter draws (selection on reset, ES noise).
    Emitter = 2,
    /// Task evaluations of ES samples and offspring.
    Evaluation = 3,
    /// Variation operators of GA-style algorithms.
    Variation = 4,
    /// Re-evaluation for corrected metrics.
    Reevaluation = 5,
    /// Parent selection of GA-style algorithms.
    Selection = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Factory for independent streams of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream keyed by a subsystem and a path of indices.
    pub fn stream(&self, domain: Domain, path: &[u64]) -> StreamRng {
        let mut state = self.seed;
        let mut acc = splitmix64(&mut state) ^ (domain as u64).wrapping_mul(0xA24B_AED4_963E_E407);
        for &p in path {
            let mut s = acc ^ p.wrapping_mul(0x9FB2_1C65_1E98_DF25);
            acc = splitmix64(&mut s) ^ acc.rotate_left(17);
        }
        let mut key = [0u8; 32];
        let mut s = acc;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// A stream for a sub-computation identified by a 64-bit key drawn from
    /// another stream.
    pub fn derived(key: u64, index: u64) -> StreamRng {
        Streams::new(key).stream(Domain::Evaluation, &[index])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_stream() {
        let s = Streams::new(7);
        let a: Vec<u64> = (0..4)
            .map({
                let mut r = s.stream(Domain::Emitter, &[3, 1]);
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..4)
            .map({
                let mut r = s.stream(Domain::Emitter, &[3, 1]);
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_paths_differ() {
        let s = Streams::new(7);
        let first = |d, p: &[u64]| -> u64 { s.stream(d, p).random() };
        let draws = [
            first(Domain::Emitter, &[0, 1]),
            first(Domain::Emitter, &[1, 0]),
            first(Domain::Evaluation, &[0, 1]),
            first(Domain::Emitter, &[0]),
            first(Domain::Emitter, &[0, 1, 0]),
        ];
        for i in 0..draws.len() {
            for j in i + 1..draws.len() {
                assert_ne!(draws[i], draws[j], "{i} vs {j}");
            }
        }
        assert_ne!(Streams::new(8).stream(Domain::Emitter, &[0, 1]).random::<u64>(), draws[0]);
    }
}
