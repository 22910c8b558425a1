//! Deterministic seed derivation.

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(master, a, b)`; distinct tuples give unrelated seeds.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(master) ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ b)
}

/// K-Means seed used at step `t` of a run seeded with `seed`.
pub fn step_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, 0x5EC5_9EC0, t as u64)
}
