use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::DenseMatrix;
use crate::{Error, Result};

/// Seeded random stream.
///
/// Backed by ChaCha8 (seeded through `seed_from_u64`), so the stream is the
/// same on every platform. Gaussian draws use the Ziggurat sampler from
/// `rand_distr`. Independent sub-streams come from [`Rng::derive`], which
/// selects a ChaCha stream id instead of reseeding.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator on the same seed but a separate ChaCha stream.
    pub fn derive(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        Self {
            seed: self.seed,
            inner,
        }
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Matrix of i.i.d. standard normal draws, filled row-major.
pub fn gaussian_like(rng: &mut Rng, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "gaussian sample needs a nonempty shape, got {rows}x{cols}"
        )));
    }
    let values = (0..rows * cols).map(|_| rng.gaussian()).collect();
    DenseMatrix::from_vec(rows, cols, values)
}

/// Matrix of i.i.d. uniform draws on `[-bound, bound)`.
pub fn uniform_like(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| (2.0 * rng.uniform() - 1.0) * bound)
}
