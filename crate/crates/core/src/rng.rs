//! Deterministic seed derivation so that parallel work units (chains,
//! patients, imputed datasets) get independent, reproducible streams from a
//! single root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and two stream coordinates.
pub(crate) fn derive_seed(root: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ a.wrapping_mul(0xA24B_AED4_963E_E407)) ^ b)
}

/// A seeded stream for the work unit at coordinates `(a, b)`.
pub(crate) fn stream(root: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, a, b))
}
