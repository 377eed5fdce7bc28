//! Counter-based seed derivation.
//!
//! Every random draw in a run is taken from a stream keyed by
//! `(master seed, purpose, round, agent)`. Streams are independent of the
//! order in which agents are processed, so a run replays bit-identically
//! whether agents are updated sequentially or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Keeps e.g. compression randomness
/// and gradient sampling from sharing a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Compression = 1,
    Gradient = 2,
    InitialState = 3,
    Dataset = 4,
    Graph = 5,
    Estimation = 6,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all randomness in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive the 64-bit seed of stream `(purpose, round, agent)`.
    pub fn derive(&self, purpose: Purpose, round: u64, agent: u64) -> u64 {
        let mut h = splitmix64(self.master ^ 0xA076_1D64_78BD_642F);
        h = splitmix64(h ^ purpose as u64);
        h = splitmix64(h ^ round);
        splitmix64(h ^ agent.wrapping_mul(0xE703_7ED1_A0B4_28DB))
    }

    pub fn stream(&self, purpose: Purpose, round: u64, agent: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(purpose, round, agent))
    }
}
