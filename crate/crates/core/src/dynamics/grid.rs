use crate::error::{PolexError, Result};

/// Action-sampling grid `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(PolexError::config("a time grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(PolexError::config("a time grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(PolexError::config("grid times must be finite and strictly increasing"));
        }
        Ok(TimeGrid { times })
    }

    /// `n` equal intervals on `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(PolexError::config("grid size must be at least 1"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PolexError::config("horizon must be positive and finite"));
        }
        let mut times: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        times[n] = horizon;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    /// Largest interval length.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Lattice index of every grid point on a lattice of `cells` equal cells.
    pub fn lattice_indices(&self, cells: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.times.len());
        self.lattice_indices_into(cells, &mut out)?;
        Ok(out)
    }

    pub(crate) fn lattice_indices_into(&self, cells: usize, out: &mut Vec<usize>) -> Result<()> {
        let horizon = self.horizon();
        out.clear();
        for &t in &self.times {
            let pos = t / horizon * cells as f64;
            let k = pos.round();
            if (pos - k).abs() > 1e-9 * cells as f64 {
                return Err(PolexError::config(format!(
                    "grid time {t} does not fall on the Brownian lattice with {cells} cells"
                )));
            }
            out.push(k as usize);
        }
        Ok(())
    }
}
