//! Counter-based random substreams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by
//! `(master seed, domain, index)`. The key fully determines the stream, so a
//! permutation or replicate is reproducible regardless of which worker
//! produces it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating independent uses of one master seed.
pub mod domain {
    pub const PERMUTATION: u64 = 0x7065_726d;
    pub const SIMULATION: u64 = 0x7369_6d75;
    pub const ALTERNATIVES: u64 = 0x616c_7473;
    pub const ORACLE: u64 = 0x6f72_636c;
    pub const EFFECTIVE_LEVEL: u64 = 0x6566_6c76;
    pub const FISHER_MC: u64 = 0x6669_7368;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child master seed, e.g. one per experiment cell.
pub fn derive_seed(master: u64, domain: u64) -> u64 {
    splitmix64(master ^ splitmix64(domain))
}

/// Generator for item `index` of `domain` under `master`.
pub fn substream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, domain));
    rng.set_stream(index);
    rng
}
