//! Independent random streams derived from one master seed.
//!
//! Every consumer of randomness gets its own ChaCha stream, so changing how
//! much one component draws never shifts another's sequence.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Noise = 2,
    Schedule = 3,
    Data = 4,
    SecAgg = 5,
    Poison = 6,
    Attack = 7,
    Task = 8,
}

/// Generator for `(purpose, index)` under `master`.
pub fn stream_rng(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 40) ^ index);
    rng
}

/// A derived 64-bit seed, for components that seed themselves.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    stream_rng(master, purpose, index).next_u64()
}
