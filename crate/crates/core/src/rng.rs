//! Deterministic random substreams.
//!
//! Every random draw in the crate is keyed by an explicit coordinate, e.g.
//! `(seed, gamma, replication)`, so results do not depend on how work is split
//! across threads. The key selects a ChaCha8 seed; the last coordinate selects
//! the ChaCha stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep substreams used for different purposes disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Experiment = 1,
    Expansion = 2,
    Posterior = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for draw `index` of the stream identified by `(seed, domain, key)`.
pub fn substream(seed: u64, domain: Domain, key: u64, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ domain as u64) ^ key);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(index);
    rng
}
