//! Named child random streams derived from a single run seed.
//!
//! Every consumer of randomness (data, time, noise, gate, init, ...) owns an
//! independent ChaCha stream keyed by `(seed, name)`, so changing how much one
//! consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const DATA: &str = "data";
pub const TIME: &str = "time";
pub const NOISE: &str = "noise";
pub const GATE: &str = "gate";
pub const INIT: &str = "init";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `name` under the run seed.
pub fn child(seed: u64, name: &str) -> Rng {
    // FNV-1a over the name, mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Rng::seed_from_u64(splitmix64(seed ^ splitmix64(h)))
}
