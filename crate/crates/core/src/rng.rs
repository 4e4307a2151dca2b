//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator whose key comes from the run seed and
//! whose 64-bit stream id packs the run index and a purpose tag, so parallel
//! runs and different uses inside one run never share draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Reward = 1,
    Reference = 2,
    Sampler = 3,
    Policy = 4,
    Dataset = 5,
    Sgd = 6,
    Probe = 7,
    Misc = 8,
}

/// Generator for `(seed, run, purpose)`.
pub fn stream(seed: u64, run: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run << 8) | purpose as u64);
    rng
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_index<S: Real, R: Rng + ?Sized>(weights: &[S], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
