//! Named seed streams, so that independent stages of a run draw from
//! unrelated random sequences derived from one user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `label`/`index` under `seed`.
pub fn derive(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix(seed);
    for b in label.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h ^ index)
}

pub fn rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_eq!(derive(1, "folds", 0), derive(1, "folds", 0));
        assert_ne!(derive(1, "folds", 0), derive(1, "folds", 1));
        assert_ne!(derive(1, "folds", 0), derive(1, "forest", 0));
        assert_ne!(derive(1, "folds", 0), derive(2, "folds", 0));
    }
}
