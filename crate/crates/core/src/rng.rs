//! Counter-based random streams.
//!
//! Every Monte Carlo trial owns a ChaCha stream addressed by
//! `(derive_seed(master, purpose), trial_index)`, so results never depend on
//! how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Stream purposes. Distinct purposes never share a ChaCha key.
pub mod purpose {
    pub const TRIAL: u64 = 1;
    pub const FIXED_DOAS: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const RECEIVE: u64 = 4;
    pub const VALIDATE: u64 = 5;
    pub const TRAINING: u64 = 6;
}

/// SplitMix64 finalizer over `(master, tag)`.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// RNG for Monte Carlo trial `index` of a run keyed by `master`.
pub fn trial_rng(master: u64, index: usize) -> ChaCha8Rng {
    stream_rng(derive_seed(master, purpose::TRIAL), index as u64)
}

/// Circularly-symmetric complex Gaussian sample with total variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}
