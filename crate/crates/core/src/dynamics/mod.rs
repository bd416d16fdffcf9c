//! Controlled dynamics, Brownian lattices and the paired simulation of the
//! sampled and aggregated state processes.

mod grid;
mod lattice;
mod noise;
mod simulate;

use std::fmt;
use std::sync::Arc;

pub use grid::TimeGrid;
pub use lattice::{make_lattice, BrownianLattice, MAX_LATTICE_CELLS};
pub use noise::{FixedNoise, KeyedNoise, NoiseView, SamplingNoise};
pub use simulate::{
    simulate_aggregated, simulate_pair, simulate_sampled, AggregatedPath, PairedTrajectory,
    SampledPath,
};

pub(crate) use simulate::{distance, simulate_aggregated_into, simulate_sampled_into};

/// `(t, x, a, out)` for drift (`d` entries) and volatility (`d x d`, row-major).
pub type ActionField = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Running reward `r(t, x, a)`.
pub type RewardFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// Terminal reward `h(x)`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `dX = b(t, X, a) dt + sigma(t, X, a) dW` with rewards `r` and `h`.
#[derive(Clone)]
pub struct DynamicsSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub x0: Vec<f64>,
    /// `b` and `sigma` depend on the action only, so an interval with a
    /// frozen action integrates exactly as `b dt + sigma dW`.
    pub per_interval_exact: bool,
    /// `b` and `sigma` are affine in the action.
    pub affine_in_action: bool,
    drift: ActionField,
    vol: ActionField,
    running_reward: Option<RewardFn>,
    terminal_reward: TerminalFn,
}

impl fmt::Debug for DynamicsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicsSpec")
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("x0", &self.x0)
            .field("per_interval_exact", &self.per_interval_exact)
            .field("affine_in_action", &self.affine_in_action)
            .finish()
    }
}

impl DynamicsSpec {
    /// Zero coefficients and rewards; set them with the `with_*` builders.
    pub fn new(state_dim: usize, action_dim: usize, x0: Vec<f64>) -> Self {
        DynamicsSpec {
            state_dim,
            action_dim,
            x0,
            per_interval_exact: false,
            affine_in_action: false,
            drift: Arc::new(|_, _, _, out| out.fill(0.0)),
            vol: Arc::new(|_, _, _, out| out.fill(0.0)),
            running_reward: None,
            terminal_reward: Arc::new(|_| 0.0),
        }
    }

    pub fn with_drift(mut self, drift: ActionField) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_vol(mut self, vol: ActionField) -> Self {
        self.vol = vol;
        self
    }

    pub fn with_running_reward(mut self, r: RewardFn) -> Self {
        self.running_reward = Some(r);
        self
    }

    pub fn with_terminal_reward(mut self, h: TerminalFn) -> Self {
        self.terminal_reward = h;
        self
    }

    pub fn with_per_interval_exact(mut self, exact: bool) -> Self {
        self.per_interval_exact = exact;
        self
    }

    pub fn with_affine_in_action(mut self, affine: bool) -> Self {
        self.affine_in_action = affine;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, a, out)
    }

    #[inline]
    pub fn vol(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.vol)(t, x, a, out)
    }

    #[inline]
    pub fn running_reward(&self, t: f64, x: &[f64], a: &[f64]) -> f64 {
        self.running_reward.as_ref().map_or(0.0, |r| r(t, x, a))
    }

    /// False when no running reward was set.
    pub fn has_running_reward(&self) -> bool {
        self.running_reward.is_some()
    }

    #[inline]
    pub fn terminal_reward(&self, x: &[f64]) -> f64 {
        (self.terminal_reward)(x)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(crate::PolexError::config("dimensions must be positive"));
        }
        crate::error::check_dim("x0", self.state_dim, self.x0.len())?;
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(crate::PolexError::config("x0 must be finite"));
        }
        Ok(())
    }

    /// `dX = a dt + dW` on a scalar state started at 0.
    pub fn drift_control() -> Self {
        DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_, _, a, out| out[0] = a[0]))
            .with_vol(Arc::new(|_, _, _, out| out[0] = 1.0))
            .with_per_interval_exact(true)
            .with_affine_in_action(true)
    }

    /// `dX = a dW` on a scalar state started at 0.
    pub fn volatility_control() -> Self {
        DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_, _, _, out| out[0] = 0.0))
            .with_vol(Arc::new(|_, _, a, out| out[0] = a[0]))
            .with_per_interval_exact(true)
            .with_affine_in_action(true)
    }
}
