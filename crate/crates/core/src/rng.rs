//! Seed handling.
//!
//! Every run has one root seed. It is split into independent ChaCha streams
//! (adversary, query decisions, action sampling) so that swapping one
//! component does not perturb the random numbers seen by the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const ADVERSARY_STREAM: u64 = 0;
const QUERY_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const AUX_STREAM: u64 = 3;

/// A ChaCha generator on a numbered stream of the root seed.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn adversary_stream(seed: u64) -> StreamRng {
    stream(seed, ADVERSARY_STREAM)
}

/// Auxiliary stream for test harnesses and estimators (instance generation,
/// pair sampling).
pub fn aux_stream(seed: u64) -> StreamRng {
    stream(seed, AUX_STREAM)
}

/// The randomness an algorithm may consume during a step.
#[derive(Debug, Clone)]
pub struct AlgorithmRng {
    pub query: StreamRng,
    pub action: StreamRng,
}

impl AlgorithmRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            query: stream(seed, QUERY_STREAM),
            action: stream(seed, ACTION_STREAM),
        }
    }
}

/// Seed for trial `trial` of an experiment rooted at `root` (splitmix64 finaliser).
pub fn trial_seed(root: u64, trial: u64) -> u64 {
    let mut z = root ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
