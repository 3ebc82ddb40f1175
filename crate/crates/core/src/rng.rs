//! Seeded, splittable random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha8 stream keyed by the run
//! seed and a domain tag, with the stream id selecting the sub-sequence. Two
//! draws never share a stream, so results do not depend on evaluation order
//! or thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Domain tags separating the independent uses of a run seed.
pub mod domain {
    pub const SYNTHETIC_INPUTS: u64 = 0x01;
    pub const SYNTHETIC_TRAINING: u64 = 0x02;
    pub const SYNTHETIC_EXPERIMENTAL: u64 = 0x03;
    pub const LEARNING_VELOCITY: u64 = 0x10;
    pub const LEARNING_WIENER: u64 = 0x11;
    pub const POSTERIOR_VELOCITY: u64 = 0x20;
    pub const POSTERIOR_WIENER: u64 = 0x21;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for `(seed, domain, stream)`.
pub fn stream(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ domain.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Fills a `rows × cols` matrix with standard normal draws from one stream.
pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Wiener increments with one independent stream per matrix entry.
pub struct WienerIncrements {
    rows: usize,
    cols: usize,
    scale: f64,
    streams: Vec<ChaCha8Rng>,
}

impl WienerIncrements {
    /// Increments of variance `dt` for a `rows × cols` state.
    pub fn new(seed: u64, domain: u64, rows: usize, cols: usize, dt: f64) -> Self {
        let streams = (0..rows * cols)
            .map(|k| stream(seed, domain, k as u64))
            .collect();
        Self {
            rows,
            cols,
            scale: dt.sqrt(),
            streams,
        }
    }

    /// Draws the next increment matrix.
    pub fn next_increment(&mut self) -> DMatrix<f64> {
        let scale = self.scale;
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (value, rng) in out.iter_mut().zip(self.streams.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *value = scale * z;
        }
        out
    }
}
