//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by `(master seed, stage, entity)`
//! so results do not depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from a master seed, a stage label, and an entity id.
pub fn derive_seed(master: u64, stage: &str, entity: u64) -> u64 {
    let h = splitmix64(master ^ splitmix64(fnv1a(stage.as_bytes())));
    splitmix64(h ^ splitmix64(entity.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Same as [`derive_seed`] with a string entity (participant or stimulus id).
pub fn derive_seed_str(master: u64, stage: &str, entity: &str) -> u64 {
    derive_seed(master, stage, fnv1a(entity.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
