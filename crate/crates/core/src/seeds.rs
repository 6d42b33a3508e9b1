//! Deterministic sub-seed derivation.
//!
//! Every randomized component of an experiment draws from its own RNG,
//! seeded by a value derived from the root seed, a stream tag, and an
//! index.  Two runs with the same root seed therefore consume identical
//! random streams regardless of evaluation order, and paired runs that
//! share a root seed see identical scenes and initializations.
//!
//! Derivation applies the splitmix64 finalizer twice:
//!
//! ```text
//! sub_seed(root, tag, index) = mix(mix(root ^ mix(tag)) ^ index)
//! ```
//!
//! where `mix` is the 64-bit avalanche function from splitmix64.  The
//! double application keeps distinct `(tag, index)` pairs statistically
//! independent even for small consecutive values.

/// Stream tags for the experiment commands.  Each randomized component
/// owns exactly one tag so streams never collide.
pub mod stream {
    /// Query-matrix initialization (random or collapsed).
    pub const QUERY_INIT: u64 = 1;
    /// Surrogate model parameter initialization.
    pub const MODEL_INIT: u64 = 2;
    /// Training scenes; index = epoch * scenes_per_epoch + step.
    pub const TRAIN_SCENE: u64 = 3;
    /// Held-out evaluation scenes; index = scene number.
    pub const EVAL_SCENE: u64 = 4;
    /// Gradient-check trial instances; index = trial number.
    pub const GRADCHECK: u64 = 5;
    /// Class prototype construction for the scene generator.
    pub const PROTOTYPES: u64 = 6;
}

/// splitmix64 avalanche finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `(tag, index)` under `root`.
#[inline]
pub fn derive(root: u64, tag: u64, index: u64) -> u64 {
    mix(mix(root ^ mix(tag)) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_deterministic() {
        assert_eq!(derive(42, stream::QUERY_INIT, 0), derive(42, stream::QUERY_INIT, 0));
    }

    #[test]
    fn distinct_inputs_give_distinct_seeds() {
        let mut seen = std::collections::HashSet::new();
        for root in [0u64, 1, 42, u64::MAX] {
            for tag in 1..=6u64 {
                for index in 0..16u64 {
                    assert!(seen.insert(derive(root, tag, index)));
                }
            }
        }
    }

    #[test]
    fn mix_matches_reference_values() {
        // First three outputs of a splitmix64 stream seeded with 0,
        // i.e. mix(0x9e3779b97f4a7c15 * k) without the internal increment.
        let mut state = 0u64;
        let mut next = || {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            // mix() adds the increment itself, so feed the pre-increment state.
            mix(state.wrapping_sub(0x9e37_79b9_7f4a_7c15))
        };
        assert_eq!(next(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(next(), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(next(), 0x06c4_5d18_8009_454f);
    }
}
