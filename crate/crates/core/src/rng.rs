//! Counter-based, splittable random streams.
//!
//! Every random draw in the samplers comes from a ChaCha8 stream addressed by
//! a tuple of coordinates (iteration, step, index, ...). Two work items never
//! share a stream, so the values they see do not depend on how the work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed out by [`StreamFactory`].
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_coords(coords: &[u64]) -> u64 {
    let mut h = splitmix64(coords.len() as u64);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c));
    }
    h
}

/// Root of a family of independent streams derived from one 64-bit seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream addressed by `coords`.
    pub fn stream(&self, coords: &[u64]) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(mix_coords(coords));
        rng
    }

    /// A factory for an independent sub-computation, e.g. a second chain.
    pub fn child(&self, tag: u64) -> StreamFactory {
        StreamFactory::new(mix_coords(&[self.seed, tag, 0xC4A1_0000]))
    }
}

/// Tags for the sampler steps. Each step draws from streams whose second
/// coordinate is its tag.
pub mod tag {
    pub const Z: u64 = 1;
    pub const WEIGHTS: u64 = 2;
    pub const ALPHA: u64 = 3;
    pub const RESIDUAL: u64 = 4;
    pub const TOTALS: u64 = 10;
    pub const U: u64 = 11;
    pub const JOINT_UW: u64 = 12;
    pub const FLIP: u64 = 13;
    pub const RESIDUAL_BLOCK: u64 = 14;
    pub const ROOT: u64 = 15;
    pub const CLUSTER_WEIGHTS: u64 = 16;
    pub const STICKS: u64 = 17;
    pub const SLICE: u64 = 18;
    pub const ASSIGN: u64 = 19;
    pub const NEW_CLUSTER: u64 = 20;
    pub const GAMMA: u64 = 21;
    pub const PHI: u64 = 22;
    pub const Z_REFRESH: u64 = 23;
    pub const REPLAY: u64 = 30;
    pub const INIT: u64 = 31;
    pub const LOG_Z_MH: u64 = 32;
}
