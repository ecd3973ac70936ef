//! Counter-based, splittable random streams.
//!
//! A stream is addressed by a master seed and a path of child indices, e.g.
//! `(seed, n-index, replicate)`. The address is hashed into a ChaCha key and
//! the final path component selects the ChaCha stream, so any two distinct
//! addresses yield independent generators regardless of the order in which
//! they are materialized.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream `index` of this stream.
    pub fn substream(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { seed: self.seed, path }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let (prefix, stream) = match self.path.split_last() {
            Some((last, prefix)) => (prefix, *last),
            None => (&[][..], 0),
        };
        let mut state = splitmix64(self.seed ^ 0x5EED_0FF1_5E00_u64);
        state = splitmix64(state ^ self.path.len() as u64);
        for &p in prefix {
            state = splitmix64(state ^ splitmix64(p));
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}
