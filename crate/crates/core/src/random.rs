//! Reproducible random streams.
//!
//! A [`RandomSource`] is a seed plus a generator name. Independent streams
//! are derived by index through ChaCha's native stream counter, so a Monte
//! Carlo run split into chunks over any number of threads draws exactly the
//! same numbers as the sequential run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::problem::GammaMatrix;
use crate::Matrix;

pub const ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub algorithm: String,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            algorithm: ALGORITHM.to_string(),
        }
    }

    /// Stream 0.
    pub fn rng(&self) -> ChaCha8Rng {
        self.stream(0)
    }

    /// The `index`-th independent stream for this seed.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// A child source with a seed mixed from this seed and `tag`.
    pub fn derive(&self, tag: u64) -> RandomSource {
        RandomSource {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))),
            algorithm: self.algorithm.clone(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One standard exponential draw by inversion, `-ln u` with `u` in `(0, 1]`.
pub fn standard_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -u.ln()
}

/// An `m × n` matrix of independent standard exponentials.
pub fn sample_gamma<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> GammaMatrix {
    let mut values = Matrix::zeros(m, n);
    for v in values.as_mut_slice() {
        let mut x = standard_exponential(rng);
        // -ln(1) = 0 has probability 2^-53; keep the entries strictly positive
        while x <= 0.0 {
            x = standard_exponential(rng);
        }
        *v = x;
    }
    GammaMatrix::new(values).expect("exponential draws are positive")
}
