//! Deterministic seed derivation.
//!
//! Every source of randomness in the pipeline is derived from a single root
//! seed through these mixers, so that runs are reproducible and independent
//! components (documents, factor tables, shuffles) consume independent
//! streams regardless of arrival order.

/// SplitMix64 finalizer; a full-period mixer with good avalanche behavior.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Component tags keeping derived streams disjoint.
pub mod tag {
    pub const DOCUMENT: u64 = 0xd0c;
    pub const USER_FACTOR: u64 = 0x05e7;
    pub const ITEM_FACTOR: u64 = 0x17e4;
    pub const SHUFFLE: u64 = 0x5481;
    pub const TOPIC_INIT: u64 = 0x70b1;
    pub const HOLDOUT_GIBBS: u64 = 0x4e1d;
}

/// Derive a child seed from a root seed, a component tag, and an entity id.
pub fn derive_seed(root: u64, tag: u64, id: u64) -> u64 {
    let mut state = root;
    let a = splitmix64(&mut state);
    let mut state = a ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let b = splitmix64(&mut state);
    let mut state = b ^ id;
    splitmix64(&mut state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let s1 = derive_seed(7, tag::DOCUMENT, 42);
        let s2 = derive_seed(7, tag::DOCUMENT, 42);
        assert_eq!(s1, s2);
        assert_ne!(s1, derive_seed(7, tag::DOCUMENT, 43));
        assert_ne!(s1, derive_seed(7, tag::USER_FACTOR, 42));
        assert_ne!(s1, derive_seed(8, tag::DOCUMENT, 42));
    }
}
