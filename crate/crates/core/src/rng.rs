//! Deterministic random substreams.
//!
//! Every unit of parallel work (a simulated trial, a bootstrap replicate, a
//! permutation) draws from its own ChaCha8 stream selected by `(seed, domain,
//! index)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families; each occupies a disjoint range of stream ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Trial = 1,
    Bootstrap = 2,
    Permutation = 3,
    IsiBootstrap = 4,
}

pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}
