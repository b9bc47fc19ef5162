//! Seed derivation.
//!
//! Every stochastic step draws from its own ChaCha stream keyed by the
//! experiment seed plus a small tuple of indices (round, vehicle id, ...).
//! Results therefore do not depend on the order in which independent work
//! items are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags. Each stochastic stage uses a distinct tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Partition = 1,
    ModelInit = 2,
    AvHypernet = 3,
    RegionHypernet = 4,
    Sampling = 5,
    LocalTraining = 6,
    Synth = 7,
    GradCheck = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, stream, indices)`.
pub fn derive(seed: u64, stream: Stream, indices: &[u64]) -> SimRng {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    ChaCha8Rng::seed_from_u64(h)
}
