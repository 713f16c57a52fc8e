//! Seeded, independent RNG streams.
//!
//! Every source of randomness in a run (mobility of each entity, task
//! arrivals of each MU, each agent's exploration and replay sampling)
//! draws from its own named stream derived from the master seed, so the
//! world trajectory does not depend on which policy consumes randomness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn fnv1a(label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the RNG for the stream `(label, index)` under `master`.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mixed = splitmix(master ^ splitmix(fnv1a(label) ^ splitmix(index)));
    ChaCha12Rng::seed_from_u64(mixed)
}
