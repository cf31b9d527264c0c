//! Deterministic random streams.
//!
//! Every stochastic operation in this crate draws from an explicitly seeded
//! xoshiro256++ generator. Streams for distinct purposes (dataset draws,
//! batch shuffling, mix sampling, ...) are derived from one master seed by
//! folding purpose tags through SplitMix64 rounds, so adding or reordering
//! one consumer never perturbs the draws seen by another. The generator and
//! the derivation are fixed algorithms, independent of platform defaults.

use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The one PRNG type used everywhere.
pub type Stream = Xoshiro256PlusPlus;

/// One SplitMix64 round: advances `state` by the golden-ratio increment and
/// returns the mixed output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `tags` into `master`, one mixing round per tag. Distinct tag lists
/// give statistically independent seeds.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        out = splitmix64(&mut state);
    }
    out
}

/// A fresh generator for the purpose identified by `tags` under `master`.
pub fn stream(master: u64, tags: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(master, tags))
}

/// Purpose tags for stream derivation. Values are arbitrary but frozen:
/// changing one changes every byte downstream of that consumer.
pub mod tag {
    pub const DATASET: u64 = 0x4441_5441; // dataset generation
    pub const EVAL_DATA: u64 = 0x4556_4c44; // fresh evaluation dataset
    pub const PROTOCOL: u64 = 0x5052_4f54; // eval pair/gallery sampling
    pub const OLD_INIT: u64 = 0x4f4c_4449; // old model parameter init
    pub const OLD_TRAIN: u64 = 0x4f4c_4454; // old model training
    pub const NEW_INIT: u64 = 0x4e45_5749; // new model parameter init
    pub const NEW_TRAIN: u64 = 0x4e45_5754; // new model training
    pub const UPPER_INIT: u64 = 0x5550_4249; // upper-bound init
    pub const UPPER_TRAIN: u64 = 0x5550_4254; // upper-bound training
    pub const UPPER_P_INIT: u64 = 0x5550_5049; // restricted upper-bound init
    pub const UPPER_P_TRAIN: u64 = 0x5550_5054; // restricted upper-bound training
    pub const SHUFFLE: u64 = 0x5348_5546; // per-epoch batch order
    pub const MIX: u64 = 0x4d49_5842; // per-batch replacement sampling
    pub const AUDIT: u64 = 0x4155_4454; // constraint-audit triplets
    pub const CHANCE: u64 = 0x4348_4e43; // permutation chance baseline
    pub const CACHE_NOISE: u64 = 0x434e_5345; // injected cache corruption
    pub const SEQ: u64 = 0x5345_5143; // sequential-chain stages
    pub const SCATTER: u64 = 0x5343_5452; // scatter-plot PCA power iteration
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_xoshiro::rand_core::RngCore;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive_seed(42, &[tag::DATASET]), derive_seed(42, &[tag::DATASET]));
        let mut a = stream(42, &[tag::MIX, 3, 7]);
        let mut b = stream(42, &[tag::MIX, 3, 7]);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_tags_give_distinct_streams() {
        assert_ne!(derive_seed(42, &[tag::MIX, 0, 0]), derive_seed(42, &[tag::MIX, 0, 1]));
        assert_ne!(derive_seed(42, &[tag::MIX, 0, 0]), derive_seed(42, &[tag::MIX, 1, 0]));
        assert_ne!(derive_seed(42, &[tag::SHUFFLE]), derive_seed(42, &[tag::MIX]));
        assert_ne!(derive_seed(1, &[tag::SHUFFLE]), derive_seed(2, &[tag::SHUFFLE]));
    }

    #[test]
    fn frozen_reference_values() {
        // Frozen so an accidental change to the derivation (which would
        // silently re-seed every experiment) fails loudly.
        assert_eq!(derive_seed(0, &[]), 16294208416658607535);
        assert_eq!(derive_seed(42, &[tag::DATASET]), 10840680542369773063);
    }
}
