//! Order-independent random streams.
//!
//! Every random draw in a simulation is addressed by a [`StreamPath`]: the
//! client it belongs to, the epoch, the inner step and what the draw is for.
//! The path is hashed together with the run seed into a ChaCha8 key, so the
//! sequence produced for a given `(seed, path)` never depends on the order in
//! which clients happen to be evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Permutation,
    Compression,
    Sampling,
    SigmaRadius,
    Synthetic,
    Probe,
    Partition,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Permutation => 0x5045_524d,
            Purpose::Compression => 0x434f_4d50,
            Purpose::Sampling => 0x5341_4d50,
            Purpose::SigmaRadius => 0x5241_4449,
            Purpose::Synthetic => 0x5359_4e54,
            Purpose::Probe => 0x5052_4f42,
            Purpose::Partition => 0x5041_5254,
        }
    }
}

/// Address of a stream inside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamPath {
    pub client: u64,
    pub epoch: u64,
    pub step: u64,
    pub purpose: Purpose,
}

impl StreamPath {
    pub fn new(purpose: Purpose, client: usize, epoch: usize, step: usize) -> Self {
        Self {
            client: client as u64,
            epoch: epoch as u64,
            step: step as u64,
            purpose,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded stream factory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// 256-bit ChaCha key for `path`.
    pub fn key(&self, path: StreamPath) -> [u8; 32] {
        let mut h = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        for word in [path.purpose.tag(), path.client, path.epoch, path.step] {
            h = splitmix64(h ^ word);
        }
        let mut key = [0u8; 32];
        let mut s = h;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        key
    }

    /// Generator positioned at the start of the stream addressed by `path`.
    pub fn at(&self, path: StreamPath) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key(path))
    }

    /// Shorthand for `at(StreamPath::new(..))`.
    pub fn rng(&self, purpose: Purpose, client: usize, epoch: usize, step: usize) -> ChaCha8Rng {
        self.at(StreamPath::new(purpose, client, epoch, step))
    }
}
