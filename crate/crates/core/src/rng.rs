//! Deterministic seed derivation for replication streams.
//!
//! Monte Carlo drivers hand every replication its own seed derived from the
//! study seed and the replication index. Because the derivation depends only
//! on the index, results are identical no matter how replications are
//! scheduled across threads.

/// SplitMix64 finalizer. Bijective on `u64`, good avalanche.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for stream `index` of a run keyed by `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index))
}
