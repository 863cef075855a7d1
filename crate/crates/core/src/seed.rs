//! Stable 64-bit seed derivation.
//!
//! Seeds are mixed with the SplitMix64 finaliser so that derived streams do
//! not depend on the order in which they are requested.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`, one SplitMix64 round per part.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(base.wrapping_add(GOLDEN)), |acc, &p| {
            mix64(acc ^ mix64(p.wrapping_add(GOLDEN)))
        })
}

/// Seed for one replicate at one sweep point, keyed by the sweep coordinates
/// so that adding or removing points and replicates leaves the rest untouched.
pub fn run_seed(master: u64, n: usize, m: usize, replicate: usize) -> u64 {
    derive(master, &[n as u64, m as u64, replicate as u64])
}
