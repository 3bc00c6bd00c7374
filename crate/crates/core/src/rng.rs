//! Named random sub-streams derived from a single master seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that, for
//! example, changing the batching order never perturbs weight initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Batching = 3,
    Shuffle = 4,
    Noise = 5,
    Regressor = 6,
    Check = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
