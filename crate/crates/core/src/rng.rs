//! Seeded random streams.
//!
//! Every random draw comes from ChaCha8 seeded with `seed_from_u64(seed)`, and
//! each draw category uses its own ChaCha stream id. Adding draws in one
//! category therefore never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Positions = 1,
    Thetas = 2,
    Fading = 3,
    Subsets = 4,
    Formation = 5,
    Headings = 6,
    Traffic = 7,
    Refading = 8,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream for the `epoch`-th use of a category (dynamics re-draws).
pub fn epoch_stream(seed: u64, which: Stream, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which as u64) << 32) | (epoch & 0xFFFF_FFFF));
    rng
}
