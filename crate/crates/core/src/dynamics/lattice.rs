use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, PolexError, Result};
use crate::rng::{substream, StreamTag};

/// Largest lattice accepted by the simulators.
pub const MAX_LATTICE_CELLS: usize = 1 << 20;

/// Brownian increments on `cells` equal cells of `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianLattice {
    dim: usize,
    cells: usize,
    horizon: f64,
    increments: Vec<f64>,
    master_seed: u64,
    path_index: u64,
}

/// Brownian lattice for path `path_index` of the experiment seeded by
/// `master_seed`. The same pair always yields the same increments.
pub fn make_lattice(
    master_seed: u64,
    path_index: u64,
    dim: usize,
    cells: usize,
    horizon: f64,
) -> Result<BrownianLattice> {
    let mut lattice = BrownianLattice::zeros(dim, cells, horizon)?;
    lattice.refill(master_seed, path_index);
    Ok(lattice)
}

impl BrownianLattice {
    pub fn zeros(dim: usize, cells: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(PolexError::config("Brownian dimension must be positive"));
        }
        if cells == 0 || cells > MAX_LATTICE_CELLS {
            return Err(PolexError::config(format!(
                "lattice size {cells} outside 1..={MAX_LATTICE_CELLS}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PolexError::config("horizon must be positive and finite"));
        }
        Ok(BrownianLattice {
            dim,
            cells,
            horizon,
            increments: vec![0.0; dim * cells],
            master_seed: 0,
            path_index: 0,
        })
    }

    /// Lattice with the given row-major `cells x dim` increments.
    pub fn from_increments(dim: usize, horizon: f64, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 || increments.len() % dim != 0 {
            return Err(PolexError::config("increments do not fill whole cells"));
        }
        let mut lattice = Self::zeros(dim, increments.len() / dim, horizon)?;
        lattice.increments = increments;
        Ok(lattice)
    }

    /// Overwrite the increments with the stream of `(master_seed, path_index)`.
    pub(crate) fn refill(&mut self, master_seed: u64, path_index: u64) {
        let mut rng = substream(master_seed, StreamTag::Brownian, 0, path_index);
        let scale = self.step().sqrt();
        for v in self.increments.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = scale * z;
        }
        self.master_seed = master_seed;
        self.path_index = path_index;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.cells as f64
    }

    pub fn seed(&self) -> (u64, u64) {
        (self.master_seed, self.path_index)
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, cell: usize) -> &[f64] {
        &self.increments[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Sum of the increments of cells `start..end`.
    pub fn block_sum(&self, start: usize, end: usize, out: &mut [f64]) {
        out.fill(0.0);
        for cell in start..end {
            for (o, v) in out.iter_mut().zip(self.increment(cell)) {
                *o += v;
            }
        }
    }

    /// Lattice whose cells are blocks of `factor` consecutive cells.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.cells % factor != 0 {
            return Err(PolexError::config(format!(
                "cannot coarsen {} cells by a factor of {factor}",
                self.cells
            )));
        }
        let cells = self.cells / factor;
        let mut increments = vec![0.0; cells * self.dim];
        for (c, block) in increments.chunks_mut(self.dim).enumerate() {
            self.block_sum(c * factor, (c + 1) * factor, block);
        }
        Ok(BrownianLattice {
            dim: self.dim,
            cells,
            horizon: self.horizon,
            increments,
            master_seed: self.master_seed,
            path_index: self.path_index,
        })
    }

    /// Brownian motion at lattice point `k`.
    pub fn value_at(&self, k: usize, out: &mut [f64]) -> Result<()> {
        check_dim("Brownian value buffer", self.dim, out.len())?;
        self.block_sum(0, k, out);
        Ok(())
    }
}
