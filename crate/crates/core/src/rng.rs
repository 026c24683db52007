//! Deterministic random substreams.
//!
//! Every trajectory, walker block or field realization draws from its own
//! ChaCha8 keystream. The key is derived from the master seed and the stream
//! id selects one of 2^64 independent keystreams, so a substream is a pure
//! function of `(master_seed, domain, index)` and never depends on which
//! worker thread happens to run it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default master seed used by the command-line runner.
pub const DEFAULT_MASTER_SEED: u64 = 0xC510;

/// Separates the stream spaces of different subsystems sharing one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Tracer = 1,
    Walker = 2,
    Forcing = 3,
    Lattice = 4,
}

/// splitmix64 finalizer; used to spread the master seed into a key.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for substream `index` of `domain`.
pub fn substream(master_seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        let word = mix(master_seed ^ mix((domain as u64) << 32 | i as u64));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
