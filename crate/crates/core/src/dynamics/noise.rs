use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{check_dim, PolexError, Result};
use crate::policy::NoiseLaw;
use crate::rng::{mix, StreamTag};

/// Source of the sampling noise `xi_i`, indexed by grid-point index.
pub trait SamplingNoise {
    fn draw(&mut self, grid_index: usize, out: &mut [f64]) -> Result<()>;
}

/// Keyed sampling noise: the draw at grid point `i` is the `i`-th draw of a
/// stream seeded by the key alone, so it never depends on the order in
/// which grid points are visited.
#[derive(Debug, Clone)]
pub struct KeyedNoise {
    law: NoiseLaw,
    key: u64,
    rng: Xoshiro256PlusPlus,
    next: usize,
}

impl KeyedNoise {
    /// Independent noise per path: keyed by `(master_seed, path_index, i, n)`.
    pub fn naive(law: NoiseLaw, master_seed: u64, path_index: u64, grid_size: usize) -> Self {
        let key = mix(
            mix(mix(master_seed, StreamTag::NaiveSampling as u64), grid_size as u64),
            path_index,
        );
        Self::from_key(law, key)
    }

    /// Noise shared by all paths: keyed by `(master_seed, i, n)` only.
    pub fn shared(law: NoiseLaw, master_seed: u64, grid_size: usize) -> Self {
        let key = mix(mix(master_seed, StreamTag::SharedSampling as u64), grid_size as u64);
        Self::from_key(law, key)
    }

    fn from_key(law: NoiseLaw, key: u64) -> Self {
        KeyedNoise {
            law,
            key,
            rng: Xoshiro256PlusPlus::seed_from_u64(key),
            next: 0,
        }
    }
}

impl SamplingNoise for KeyedNoise {
    fn draw(&mut self, grid_index: usize, out: &mut [f64]) -> Result<()> {
        check_dim("sampling noise", self.law.dim(), out.len())?;
        if grid_index < self.next {
            self.rng = Xoshiro256PlusPlus::seed_from_u64(self.key);
            self.next = 0;
        }
        while self.next <= grid_index {
            self.law.sample(&mut self.rng, out);
            self.next += 1;
        }
        Ok(())
    }
}

/// Pre-drawn noise, one vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedNoise {
    dim: usize,
    draws: Vec<f64>,
}

impl FixedNoise {
    pub fn new(dim: usize, draws: Vec<f64>) -> Result<Self> {
        if dim == 0 || draws.len() % dim != 0 {
            return Err(PolexError::config("fixed noise does not fill whole draws"));
        }
        Ok(FixedNoise { dim, draws })
    }

    /// Materialize the first `points` draws of `source`.
    pub fn collect(source: &mut dyn SamplingNoise, dim: usize, points: usize) -> Result<Self> {
        let mut draws = vec![0.0; dim * points];
        for (i, chunk) in draws.chunks_mut(dim).enumerate() {
            source.draw(i, chunk)?;
        }
        Self::new(dim, draws)
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }
}

impl SamplingNoise for FixedNoise {
    fn draw(&mut self, grid_index: usize, out: &mut [f64]) -> Result<()> {
        check_dim("sampling noise", self.dim, out.len())?;
        let chunk = self
            .draws
            .get(grid_index * self.dim..(grid_index + 1) * self.dim)
            .ok_or_else(|| {
                PolexError::config(format!("no sampling noise for grid point {grid_index}"))
            })?;
        out.copy_from_slice(chunk);
        Ok(())
    }
}

impl SamplingNoise for &mut FixedNoise {
    fn draw(&mut self, grid_index: usize, out: &mut [f64]) -> Result<()> {
        (**self).draw(grid_index, out)
    }
}

/// Read-only view of pre-drawn noise, shareable across threads.
#[derive(Debug, Clone, Copy)]
pub struct NoiseView<'a>(pub &'a FixedNoise);

impl SamplingNoise for NoiseView<'_> {
    fn draw(&mut self, grid_index: usize, out: &mut [f64]) -> Result<()> {
        let FixedNoise { dim, draws } = self.0;
        check_dim("sampling noise", *dim, out.len())?;
        let chunk = draws
            .get(grid_index * dim..(grid_index + 1) * dim)
            .ok_or_else(|| {
                PolexError::config(format!("no sampling noise for grid point {grid_index}"))
            })?;
        out.copy_from_slice(chunk);
        Ok(())
    }
}
