//! Counter-based reproducible RNG streams.
//!
//! Every replica draws from a ChaCha12 stream addressed by
//! (master seed, domain, replica): the master seed and domain tag are mixed
//! into the 256-bit key, the replica index selects the ChaCha stream, and
//! the draw counter is the block counter. Distinct replicas can never
//! collide and results are independent of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche for combining seed words.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for whole-domain draws (one stream per logical task).
pub fn domain_rng(master: u64, domain: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(master ^ mix(domain)))
}

/// RNG for replica `replica` of domain `domain`.
pub fn replica_rng(master: u64, domain: u64, replica: u64) -> ChaCha12Rng {
    let mut rng = domain_rng(master, domain);
    rng.set_stream(replica);
    rng
}
