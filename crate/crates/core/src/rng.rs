//! Seed derivation: one master seed fans out into independent, reproducible
//! streams, one per component (data generation, mode finding, each chain,
//! each study cell).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Component tags for derived streams. Keeping them in one place avoids
/// accidental stream collisions between subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    ModeFinder,
    Chain,
    StudyCell,
    Test,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::ModeFinder => 2,
            Stream::Chain => 3,
            Stream::StudyCell => 4,
            Stream::Test => 5,
        }
    }
}

/// RNG for `component` stream number `index`, derived from `master`.
///
/// Streams with distinct `(component, index)` never overlap: the ChaCha
/// stream id is set to `component_tag << 32 | index`.
pub fn derived_rng(master: u64, component: Stream, index: u64) -> ChaCha8Rng {
    assert!(index < (1 << 32), "stream index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((component.tag() << 32) | index);
    rng
}

/// Plain seeded RNG (stream 0); used where a config carries its own seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
