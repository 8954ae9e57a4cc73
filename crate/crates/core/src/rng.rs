//! Named random sub-streams derived from a single master seed.
//!
//! Every stochastic component draws from `ChaCha8Rng` seeded through
//! [`derive_seed`], so an experiment is reproducible from its master seed
//! alone and independent of thread scheduling:
//!
//! ```text
//! trial seed   = derive_seed(master, "trial", trial_index)
//! graph seed   = derive_seed(trial,  "graph", 0)
//! view seed    = derive_seed(trial,  "view", nbv_iteration)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a stream label and an index.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut h = mix64(parent ^ 0x5348_5043_5345_4544);
    for b in label.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ mix64(index))
}

pub fn stream(parent: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, label, index))
}
