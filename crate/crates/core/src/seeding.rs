//! Deterministic seed derivation.
//!
//! Every component draws from its own generator seeded with
//! `splitmix64(root ⊕ splitmix64(stream << 40 | index))`, so one root seed fixes
//! every stream and independent indices never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Trajectory = 1,
    Sensor = 2,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(root: u64, stream: Stream, index: u64) -> u64 {
    let counter = ((stream as u64) << 40) | (index & ((1 << 40) - 1));
    splitmix64(root ^ splitmix64(counter))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
