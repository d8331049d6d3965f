//! Deterministic seed derivation for parallel random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream roles inside one (point, realization) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Bits = 1,
    Noise = 2,
    TxPhase = 3,
    RxPhase = 4,
    Offsets = 5,
    Channel = 6,
    Training = 7,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a master seed and an index path. Order of indices matters;
/// evaluation order of workers does not.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
