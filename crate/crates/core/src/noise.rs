//! Counter-based Gaussian noise.
//!
//! Every noise row is a pure function of `(seed, input_id, stream, row)`: the
//! first three fix a ChaCha8 key, the row index selects the ChaCha stream. Rows
//! can therefore be generated in any order, on any thread, with the same bits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Validation draws used to select a simplex map.
pub const STREAM_VALIDATION: u64 = 0x5641_4c49_4441_5445;
/// Certification draws.
pub const STREAM_CERTIFICATION: u64 = 0x4345_5254_4946_5900;
/// Monte-Carlo draws for gradient estimates.
pub const STREAM_GRADIENT: u64 = 0x4752_4144_4945_4e54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSeed {
    pub seed: u64,
    pub input_id: u64,
    pub stream: u64,
}

impl NoiseSeed {
    pub fn new(seed: u64, input_id: u64, stream: u64) -> Self {
        NoiseSeed {
            seed,
            input_id,
            stream,
        }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        NoiseSeed { stream, ..self }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.input_id,
            splitmix64(&mut state) ^ self.stream,
            splitmix64(&mut state),
        ];
        // one more mixing round so nearby ids do not share key bits
        let mut mixed = [0u64; 4];
        for (i, w) in words.iter().enumerate() {
            let mut s = *w ^ (i as u64).wrapping_mul(0xa076_1d64_78bd_642f);
            mixed[i] = splitmix64(&mut s);
        }
        for (chunk, w) in key.chunks_exact_mut(8).zip(mixed) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        key
    }

    /// Generator for noise row `row`.
    pub fn row_rng(&self, row: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(row);
        rng
    }

    /// Fills `out` with i.i.d. `N(0, sigma^2)` draws for row `row`.
    pub fn fill_gaussian(&self, row: u64, sigma: f64, out: &mut [f64]) {
        let mut rng = self.row_rng(row);
        fill_from(&mut rng, sigma, out);
    }
}

pub(crate) fn fill_from<R: RngCore>(rng: &mut R, sigma: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = sigma * z;
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
