//! Counter-based random streams.
//!
//! Every consumer derives its generator from `(master_seed, stream id)`, so
//! results never depend on scheduling or batching order. Purpose salts keep
//! streams for different roles disjoint even when they share a run index.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream salt for Born sampling of a run's initial configuration.
pub const SALT_BORN: u64 = 0x1000_0000_0000;
/// Stream salt for setting-policy draws.
pub const SALT_SETTINGS: u64 = 0x2000_0000_0000;
/// Stream salt for local-hidden-variable strategy draws.
pub const SALT_STRATEGY: u64 = 0x3000_0000_0000;
/// Stream salt for oracle outcome draws.
pub const SALT_ORACLE: u64 = 0x4000_0000_0000;
/// Stream salt for lattice initializers.
pub const SALT_LATTICE: u64 = 0x5000_0000_0000;

/// ChaCha stream `stream_id` of the generator seeded by `master`.
pub fn stream(master: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id);
    rng
}
