//! Path loop shared by the estimators.
//!
//! Paths are processed in fixed-size chunks; each chunk owns its
//! accumulators and the chunks are merged in ascending order. The result is
//! therefore independent of the number of worker threads.

use rayon::prelude::*;

use crate::dynamics::{
    simulate_aggregated_into, simulate_sampled_into, AggregatedPath, BrownianLattice,
    SampledPath, SamplingNoise, TimeGrid,
};
use crate::error::Result;

use super::Setup;

pub(crate) const CHUNK: u64 = 256;

/// Run `work` on every path index in `0..paths`, one accumulator per chunk,
/// and return the accumulators in chunk order.
pub(crate) fn run_chunks<S, M, W>(paths: u64, make: M, work: W) -> Result<Vec<S>>
where
    S: Send,
    M: Fn() -> Result<S> + Sync,
    W: Fn(&mut S, u64) -> Result<()> + Sync,
{
    let chunks = paths.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = make()?;
            for path in c * CHUNK..((c + 1) * CHUNK).min(paths) {
                work(&mut state, path)?;
            }
            Ok(state)
        })
        .collect()
}

/// Per-chunk simulation buffers.
pub(crate) struct Workspace {
    pub lattice: BrownianLattice,
    pub sampled: SampledPath,
    pub aggregated: AggregatedPath,
}

impl Workspace {
    pub fn new(setup: &Setup, cells: usize) -> Result<Self> {
        Ok(Workspace {
            lattice: BrownianLattice::zeros(setup.dynamics.state_dim, cells, setup.horizon)?,
            sampled: SampledPath::default(),
            aggregated: AggregatedPath::default(),
        })
    }

    pub fn load_lattice(&mut self, seed: u64, path: u64) {
        self.lattice.refill(seed, path);
    }

    pub fn sample(
        &mut self,
        setup: &Setup,
        grid: &TimeGrid,
        noise: &mut dyn SamplingNoise,
    ) -> Result<()> {
        simulate_sampled_into(
            &setup.dynamics,
            &setup.policy,
            grid,
            &self.lattice,
            noise,
            &mut self.sampled,
        )
    }

    pub fn aggregate(&mut self, setup: &Setup) -> Result<()> {
        simulate_aggregated_into(
            &setup.aggregated,
            &self.lattice,
            &setup.dynamics.x0,
            &mut self.aggregated,
        )
    }
}
