//! Stage seed derivation.
//!
//! One global seed reproduces the whole pipeline, but each stage needs an
//! independent RNG stream: reusing the raw seed everywhere would correlate
//! calibration noise, dataset draws, and weight initialization. A stage is
//! named by a label ("calibrate", "pretrain/gp", "synthesize/img_003/gp"),
//! the label is hashed with FNV-1a, folded into the global seed, and the
//! result is finalized with one SplitMix64 round so labels differing in a
//! single byte land far apart.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Derives the sub-seed of the named stage from the global seed.
pub fn stage_seed(global: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(global ^ h)
}

/// SplitMix64 output mix; full avalanche on one round.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
