//! Deterministic seed derivation.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`, one mixing round per part.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}
