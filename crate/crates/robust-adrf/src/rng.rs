//! Seed derivation. Every random draw in the crate comes from a ChaCha8 stream whose
//! seed is derived from a root seed and a chain of (purpose, index) labels, so results
//! are reproducible across platforms and independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Child seed for `(purpose, index)` under `parent`.
pub fn derive(parent: u64, purpose: &str, index: u64) -> u64 {
    let a = splitmix64(parent ^ fnv1a(purpose));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Generator seeded from `derive(parent, purpose, index)`.
pub fn stream(parent: u64, purpose: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive(parent, purpose, index))
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn resample_indices(parent: u64, purpose: &str, index: u64, n: usize) -> Vec<usize> {
    use rand::Rng as _;
    let mut r = stream(parent, purpose, index);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive(7, "x", 1), derive(7, "x", 1));
        assert_ne!(derive(7, "x", 1), derive(7, "x", 2));
        assert_ne!(derive(7, "x", 1), derive(7, "y", 1));
        assert_ne!(derive(7, "x", 1), derive(8, "x", 1));
        let a: u64 = stream(3, "noise", 0).random();
        let b: u64 = stream(3, "noise", 0).random();
        assert_eq!(a, b);
    }
}
