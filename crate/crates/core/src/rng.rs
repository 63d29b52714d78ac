//! Seeding conventions.
//!
//! Every random stream is a `ChaCha8Rng`. A master seed fans out to stage
//! seeds with [`stage_seed`], which hashes `(master, stage)` through the
//! SplitMix64 finalizer. Stage indices are fixed constants, so adding a new
//! stage never perturbs the streams of existing ones.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stage indices used by the experiment pipeline.
pub mod stage {
    pub const NOISE: u64 = 1;
    pub const COLLECTOR: u64 = 2;
    pub const GAMMA: u64 = 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stage `stage` from a master seed.
pub fn stage_seed(master: u64, stage: u64) -> u64 {
    splitmix64(splitmix64(master) ^ stage.wrapping_mul(0xd134_2543_de82_ef95))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` i.i.d. circular complex Gaussians with `E|z|^2 = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> Vec<Complex64> {
    let s = (variance / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect()
}
