//! Seeding and Gaussian sampling.
//!
//! Every random quantity in the crate comes from a [`ChaCha8Rng`] constructed
//! from an explicit `u64` seed. Standard normals are drawn with
//! [`rand_distr::StandardNormal`], which applies the ziggurat method to the
//! generator's uniform 64-bit output. Per-simulation seeds are derived from a
//! master seed with [`derive_seed`], a SplitMix64 finalizer, so simulation `i`
//! sees the same stream regardless of thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `master`: `splitmix64(master ^ splitmix64(index))`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `len` i.i.d. standard normals from a fresh generator seeded with `seed`.
pub fn standard_normals(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}
