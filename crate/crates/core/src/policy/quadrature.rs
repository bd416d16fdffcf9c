use nalgebra::{DMatrix, SymmetricEigen};
use crate::error::{PolexError, Result};
use crate::rng::{substream, StreamTag};

use super::NoiseLaw;

pub const DEFAULT_GAUSS_HERMITE_ORDER: usize = 20;
pub const DEFAULT_MONTE_CARLO_SAMPLES: usize = 10_000;
const MAX_TENSOR_NODES: usize = 1 << 20;

/// How policy averages of coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureSpec {
    ClosedForm,
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::GaussHermite { order } if order == 0 => {
                Err(PolexError::config("Gauss-Hermite order must be at least 1"))
            }
            QuadratureSpec::MonteCarlo { samples, .. } if samples == 0 => {
                Err(PolexError::config("Monte Carlo quadrature needs at least one sample"))
            }
            _ => Ok(()),
        }
    }
}

/// Nodes and weights of the probabilists' Gauss-Hermite rule, i.e. for the
/// standard normal density. Golub-Welsch on the Jacobi matrix.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eigen.eigenvectors[(0, i)];
            (eigen.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Points in the noise space of a policy with their weights.
#[derive(Debug, Clone, Default)]
pub struct NoiseNodes {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NoiseNodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Tensor-product Gauss-Hermite rule in `dim` standard normal coordinates.
    pub fn gauss_hermite(dim: usize, order: usize) -> Result<Self> {
        let total = order
            .checked_pow(dim as u32)
            .filter(|&n| n <= MAX_TENSOR_NODES)
            .ok_or_else(|| {
                PolexError::config(format!(
                    "Gauss-Hermite tensor rule of order {order} in {dim} dimensions is too large"
                ))
            })?;
        let (x, w) = gauss_hermite(order);
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut index = vec![0usize; dim];
        for _ in 0..total {
            let mut weight = 1.0;
            for &k in &index {
                points.push(x[k]);
                weight *= w[k];
            }
            weights.push(weight);
            for slot in index.iter_mut() {
                *slot += 1;
                if *slot < order {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(NoiseNodes {
            dim,
            points,
            weights,
        })
    }

    /// Equally weighted draws from `law`, fixed by `seed`.
    pub fn monte_carlo(law: &NoiseLaw, samples: usize, seed: u64) -> Self {
        let dim = law.dim();
        let mut rng = substream(seed, StreamTag::Quadrature, 0, 0);
        let mut points = vec![0.0; samples * dim];
        for chunk in points.chunks_mut(dim.max(1)) {
            law.sample(&mut rng, chunk);
        }
        NoiseNodes {
            dim,
            points,
            weights: vec![1.0 / samples as f64; samples],
        }
    }
}
