//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha20 generator seeded with
//! [`SeedableRng::seed_from_u64`] and then moved to a dedicated stream, so features,
//! collocation points and test points drawn from the same run seed never share
//! random numbers and do not depend on the order in which they are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Features = 0,
    Collocation = 1,
    TestPoints = 2,
    KernelPairs = 3,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
