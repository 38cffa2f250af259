//! Trajectory seed derivation.
//!
//! `seed(base, λ index, seed index) = mix(mix(base ⊕ mix(λ index)) ⊕ seed index)`
//! where `mix` is the SplitMix64 finaliser. Distinct `(λ index, seed index)`
//! pairs give unrelated streams and the mapping is stable across releases.

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_seed(base: u64, lambda_index: usize, seed_index: usize) -> u64 {
    mix64(mix64(base ^ mix64(lambda_index as u64)) ^ seed_index as u64)
}
