//! Counter-based random streams.
//!
//! A stream is a 64-bit key plus a counter; output `k` is
//! `mix64(key + (k + 1) * GOLDEN_GAMMA)` (the SplitMix64 construction), so
//! any draw is a pure function of `(key, k)`. Substreams are derived with
//! [`derive_seed`], which lets every Monte Carlo trial own an independent,
//! reproducible stream no matter which thread runs it.
//!
//! `mix64` is the SplitMix64 finalizer:
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//! z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//! z ^ (z >> 31)
//! ```
//!
//! Gaussian variates use the Box-Muller transform, consuming two uniforms
//! and returning both outputs.

use crate::linalg::Matrix;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of substream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Folds a path of indices into one key: `derive_seed(derive_seed(m, a), b)...`.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |k, &i| derive_seed(k, i))
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    spare: Option<f64>,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0, spare: None }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on `(0, 1]` with 53 random bits.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box-Muller, both outputs used).
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], std_dev: f64) {
        for x in out {
            *x = std_dev * self.next_gaussian();
        }
    }
}

/// `rows×cols` matrix of i.i.d. `N(0, std_dev²)` entries, filled row-major.
pub fn gaussian_matrix(rows: usize, cols: usize, std_dev: f64, rng: &mut CounterRng) -> Matrix {
    let mut data = vec![0.0; rows * cols];
    rng.fill_gaussian(&mut data, std_dev);
    Matrix::new(rows, cols, data).expect("finite gaussian draws")
}

/// Vector of `dim` i.i.d. `N(0, std_dev²)` entries.
pub fn gaussian_vector(dim: usize, std_dev: f64, rng: &mut CounterRng) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    rng.fill_gaussian(&mut v, std_dev);
    v
}
