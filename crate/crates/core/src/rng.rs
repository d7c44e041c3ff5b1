//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by a 64-bit run seed. Each consumer draws
//! from its own ChaCha stream id, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Name of the generator as echoed into output files.
pub const GENERATOR_NAME: &str = "ChaCha8";

/// Consumers of randomness. Each maps to a distinct stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise,
    Split,
    Init,
    Shuffle,
    Synthetic,
    Subset,
    Test,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Noise => 1,
            Stream::Split => 2,
            Stream::Init => 3,
            Stream::Shuffle => 4,
            Stream::Synthetic => 5,
            Stream::Subset => 6,
            Stream::Test => 7,
        }
    }
}

/// Generator for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Stream) -> Rng {
    substream(seed, purpose, 0)
}

/// Generator for the `index`-th independent draw sequence of `purpose`, e.g. one per epoch.
pub fn substream(seed: u64, purpose: Stream, index: u32) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose.id() << 32) | u64::from(index));
    rng
}
