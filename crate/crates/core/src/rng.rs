//! Reproducible random streams.
//!
//! Every Monte-Carlo trial owns a ChaCha stream selected by `(seed, point,
//! trial)`, so results do not depend on scheduling or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Independent stream for trial `trial` of sweep point `point`.
pub fn trial_stream(seed: u64, point: u32, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

/// One circularly-symmetric complex Gaussian sample with unit variance
/// (real and imaginary parts each of variance 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
