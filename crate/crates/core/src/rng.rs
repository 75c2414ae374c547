//! Seed plumbing.
//!
//! All randomness in the crate flows from a single 64-bit master seed.
//! Each stage (parameter init, batch order, dropout, data generation, ...)
//! derives its own independent stream by hashing a stage name into the
//! master seed, so adding randomness to one stage never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stage name. Fixed algorithm so streams are stable
/// across platforms and compiler versions.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the generator for one named stage of a run.
pub fn stage_rng(master_seed: u64, stage: &str) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(stage.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let mut a = stage_rng(17, "train");
        let mut b = stage_rng(17, "train");
        for _ in 0..100 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn stages_are_independent() {
        let mut a = stage_rng(17, "train");
        let mut b = stage_rng(17, "dropout");
        let alike = (0..64).filter(|_| a.gen::<u64>() == b.gen::<u64>()).count();
        assert_eq!(alike, 0, "distinct stages must not share a stream");
    }

    #[test]
    fn seeds_are_independent() {
        let mut a = stage_rng(17, "train");
        let mut b = stage_rng(18, "train");
        let alike = (0..64).filter(|_| a.gen::<u64>() == b.gen::<u64>()).count();
        assert_eq!(alike, 0);
    }
}
