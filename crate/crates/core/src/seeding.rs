//! Deterministic seed derivation.
//!
//! Every random quantity in the pipeline flows from a single master seed
//! through named derivation: `derive(master, label, index)`. Labels are stage
//! names ("sbm.restart", "cv.fold", ...), indices are restart/fold/replicate
//! counters. The derivation is a fixed function of its inputs, so reruns with
//! the same master seed reproduce every stream bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// SplitMix64 step; the standard finalizer used to expand small seeds.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 256-bit seed from the master seed, a label, and an index.
pub fn derive(master: u64, label: &str, index: u64) -> [u8; 32] {
    // Fold the label into the state one byte at a time, then the index.
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    for &b in label.as_bytes() {
        state = splitmix64(&mut state) ^ u64::from(b);
    }
    state ^= index.wrapping_mul(0x2545_f491_4f6c_dd1d);

    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// A ChaCha20 RNG seeded by named derivation from the master seed.
pub fn rng(master: u64, label: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive(master, label, index))
}

/// A derived sub-master seed, for stages that fan out their own streams.
pub fn derive_master(master: u64, label: &str, index: u64) -> u64 {
    let bytes = derive(master, label, index);
    u64::from_le_bytes(bytes[..8].try_into().expect("8-byte slice"))
}
