//! Stable seed derivation.
//!
//! Every random draw in the crate is keyed by a chain of labelled indices
//! hashed onto a base seed, e.g. `[("cell", 3), ("trial", 7), ("snapshot", l)]`.
//! The hash uses only wrapping 64-bit integer arithmetic so the result is the
//! same on every platform.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hash chain over `(label, index)` pairs. Order matters.
pub fn derive_seed(base: u64, labels: &[(&str, u64)]) -> u64 {
    labels.iter().fold(mix64(base), |h, &(label, index)| {
        let h = mix64(h ^ fnv1a(label.as_bytes()));
        mix64(h ^ index)
    })
}
