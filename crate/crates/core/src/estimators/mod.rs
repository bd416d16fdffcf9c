//! Error metrics and reinforcement-learning estimators evaluated on the
//! sampled dynamics, with their aggregated counterparts.
//!
//! Every estimator is a deterministic function of its arguments and seed:
//! the Brownian lattice of path `k` comes from the substream
//! `(seed, k)`, sampling noise from the keyed streams of
//! [`KeyedNoise`](crate::dynamics::KeyedNoise), and path results are merged
//! in ascending path order.

mod engine;
mod toolkit;

use std::fmt;
use std::sync::Arc;

use crate::analysis::{complexity_report, Complexity, NoiseMode};
use crate::dynamics::{distance, FixedNoise, KeyedNoise, NoiseView, TimeGrid, MAX_LATTICE_CELLS};
use crate::error::{PolexError, Result};
use crate::policy::{aggregate_coefficients, AggregatedCoefficients, PolicySpec};
use crate::dynamics::DynamicsSpec;
use crate::rng::mix;
use crate::stats::{quantile, CompensatedSum, RunningStats};

use engine::{run_chunks, Workspace};

pub use toolkit::{ArrayFn, ScalarFn, TestFn, ValueToolkit};

/// Default ratio of lattice cells to grid intervals for Euler sub-stepping.
pub const DEFAULT_LATTICE_FACTOR: usize = 16;
/// Highest monomial power accepted by the weak-error estimators.
pub const MAX_TEST_POWER: u32 = 8;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub mean: f64,
    pub std_error: f64,
    pub num_paths: usize,
    pub seed: u64,
}

impl EstimateResult {
    fn from_stats(stats: &RunningStats, seed: u64) -> Self {
        EstimateResult {
            mean: stats.mean(),
            std_error: stats.std_error(),
            num_paths: stats.count() as usize,
            seed,
        }
    }
}

/// Test function `f` in `E f(X_T)`.
#[derive(Clone)]
pub enum TestFunctionSpec {
    /// `x_0^power` (first state coordinate).
    Monomial { power: u32 },
    Custom {
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        label: String,
    },
}

impl fmt::Debug for TestFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl TestFunctionSpec {
    /// Parses `x`, `x^p` and `tanh`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text {
            "x" => Ok(TestFunctionSpec::Monomial { power: 1 }),
            "tanh" | "tanh(x)" => Ok(Self::tanh()),
            _ => text
                .strip_prefix("x^")
                .and_then(|p| p.parse::<u32>().ok())
                .map(|power| TestFunctionSpec::Monomial { power })
                .ok_or_else(|| PolexError::config(format!("unknown test function '{text}'"))),
        }
    }

    pub fn tanh() -> Self {
        TestFunctionSpec::Custom {
            f: Arc::new(|x| x[0].tanh()),
            label: "tanh".into(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunctionSpec::Monomial { power: 1 } => "x".into(),
            TestFunctionSpec::Monomial { power } => format!("x^{power}"),
            TestFunctionSpec::Custom { label, .. } => label.clone(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunctionSpec::Monomial { power } => x[0].powi(*power as i32),
            TestFunctionSpec::Custom { f, .. } => f(x),
        }
    }

    /// `f(x)` at the horizon `t`, rejecting non-finite values.
    fn eval_terminal(&self, t: f64, x: &[f64]) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PolexError::BlowUp {
                t,
                x: x.to_vec(),
                a: Vec::new(),
            })
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TestFunctionSpec::Monomial { power } if *power > MAX_TEST_POWER => Err(
                PolexError::config(format!("test power {power} exceeds {MAX_TEST_POWER}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Norm of the pathwise difference used by [`strong_error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrongNorm {
    Terminal,
    SupLattice,
}

/// Everything an estimator needs about the controlled system.
#[derive(Debug, Clone)]
pub struct Setup {
    pub dynamics: DynamicsSpec,
    pub policy: PolicySpec,
    pub aggregated: AggregatedCoefficients,
    pub horizon: f64,
    /// Lattice cells per interval of the finest grid.
    pub lattice_factor: usize,
}

impl Setup {
    /// Aggregates the coefficients and picks the lattice factor: 1 when
    /// both processes integrate exactly on any lattice, 16 otherwise.
    pub fn new(dynamics: DynamicsSpec, policy: PolicySpec, horizon: f64) -> Result<Self> {
        dynamics.validate()?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(PolexError::config("horizon must be positive and finite"));
        }
        let aggregated = aggregate_coefficients(&policy, &dynamics)?;
        let lattice_factor = if dynamics.per_interval_exact && aggregated.is_constant() {
            1
        } else {
            DEFAULT_LATTICE_FACTOR
        };
        Ok(Setup {
            dynamics,
            policy,
            aggregated,
            horizon,
            lattice_factor,
        })
    }

    pub fn with_lattice_factor(mut self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(PolexError::config("lattice factor must be at least 1"));
        }
        self.lattice_factor = factor;
        Ok(self)
    }

    pub fn with_dynamics(mut self, dynamics: DynamicsSpec) -> Result<Self> {
        dynamics.validate()?;
        self.aggregated = aggregate_coefficients(&self.policy, &dynamics)?;
        self.dynamics = dynamics;
        Ok(self)
    }

    /// Lattice size shared by all grids in `grid_sizes`.
    pub fn lattice_cells(&self, grid_sizes: &[usize]) -> Result<usize> {
        let mut cells = 1usize;
        for &n in grid_sizes {
            if n == 0 {
                return Err(PolexError::config("grid sizes must be at least 1"));
            }
            cells = lcm(cells, n);
            if cells > MAX_LATTICE_CELLS {
                break;
            }
        }
        cells = cells.saturating_mul(self.lattice_factor);
        if cells > MAX_LATTICE_CELLS {
            return Err(PolexError::config(format!(
                "lattice for grids {grid_sizes:?} exceeds {MAX_LATTICE_CELLS} cells"
            )));
        }
        Ok(cells)
    }

    fn grid(&self, n: usize) -> Result<TimeGrid> {
        TimeGrid::uniform(n, self.horizon)
    }

    /// `int r(t, x, a) pi(da | t, x)`.
    pub fn aggregated_reward(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.policy
            .expect(t, x, |a| self.dynamics.running_reward(t, x, a))
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

fn require_paths(m: usize, at_least: usize) -> Result<()> {
    if m < at_least {
        Err(PolexError::config(format!("need at least {at_least} paths, got {m}")))
    } else {
        Ok(())
    }
}

fn merge_all(chunks: impl IntoIterator<Item = RunningStats>) -> RunningStats {
    let mut total = RunningStats::default();
    for c in chunks {
        total.merge(&c);
    }
    total
}

/// Weak and strong error at one grid size of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEstimate {
    pub n: usize,
    /// Paired estimate of `E f(X^G_T) - E f(X~_T)`.
    pub weak: EstimateResult,
    /// Estimate of `E[|X^G - X~|^p]^{1/p}`.
    pub strong: EstimateResult,
}

/// Weak and strong errors for every grid size, all grids sharing one
/// Brownian lattice per path and drawing independent sampling noise per path.
pub fn convergence_sweep(
    setup: &Setup,
    f: &TestFunctionSpec,
    grid_sizes: &[usize],
    m: usize,
    seed: u64,
    norm: StrongNorm,
    p: u32,
) -> Result<Vec<SweepEstimate>> {
    require_paths(m, 2)?;
    f.validate()?;
    if p < 2 || p % 2 != 0 {
        return Err(PolexError::config(format!("strong-error power must be even and >= 2, got {p}")));
    }
    let cells = setup.lattice_cells(grid_sizes)?;
    let grids: Vec<TimeGrid> = grid_sizes.iter().map(|&n| setup.grid(n)).collect::<Result<_>>()?;
    let law = setup.policy.noise_law();
    let k = grid_sizes.len();

    let chunks = run_chunks(
        m as u64,
        || {
            Ok((
                Workspace::new(setup, cells)?,
                vec![RunningStats::default(); k],
                vec![RunningStats::default(); k],
            ))
        },
        |(ws, weak, strong), path| {
            ws.load_lattice(seed, path);
            ws.aggregate(setup)?;
            let f_agg = f.eval_terminal(setup.horizon, ws.aggregated.terminal())?;
            for (j, grid) in grids.iter().enumerate() {
                let mut noise = KeyedNoise::naive(law.clone(), seed, path, grid_sizes[j]);
                ws.sample(setup, grid, &mut noise)?;
                weak[j].push(f.eval_terminal(setup.horizon, ws.sampled.terminal())? - f_agg);
                let dist = match norm {
                    StrongNorm::Terminal => distance(
                        ws.sampled.terminal(),
                        ws.aggregated.terminal(),
                    ),
                    StrongNorm::SupLattice => (0..=cells)
                        .map(|c| {
                            distance(
                                ws.sampled.state(c),
                                ws.aggregated.state(c),
                            )
                        })
                        .fold(0.0, f64::max),
                };
                strong[j].push(dist.powi(p as i32));
            }
            Ok(())
        },
    )?;

    let mut weak = vec![RunningStats::default(); k];
    let mut strong = vec![RunningStats::default(); k];
    for (_, w, s) in chunks {
        for j in 0..k {
            weak[j].merge(&w[j]);
            strong[j].merge(&s[j]);
        }
    }
    Ok((0..k)
        .map(|j| SweepEstimate {
            n: grid_sizes[j],
            weak: EstimateResult::from_stats(&weak[j], seed),
            strong: pth_root(&strong[j], p, seed),
        })
        .collect())
}

/// `(mean)^{1/p}` with a delta-method standard error.
fn pth_root(stats: &RunningStats, p: u32, seed: u64) -> EstimateResult {
    let moment = stats.mean().max(0.0);
    let root = moment.powf(1.0 / p as f64);
    let std_error = if moment > 0.0 {
        stats.std_error() / (p as f64 * moment.powf((p as f64 - 1.0) / p as f64))
    } else {
        0.0
    };
    EstimateResult {
        mean: root,
        std_error,
        num_paths: stats.count() as usize,
        seed,
    }
}

/// Paired estimate of `E f(X^G_T) - E f(X~_T)` on the uniform grid of size `n`.
pub fn weak_error(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    let points = convergence_sweep(setup, f, &[n], m, seed, StrongNorm::Terminal, 2)?;
    Ok(points[0].weak)
}

/// `E[|X^G - X~|^p]^{1/p}` on the uniform grid of size `n`.
pub fn strong_error(
    setup: &Setup,
    n: usize,
    m: usize,
    seed: u64,
    norm: StrongNorm,
    p: u32,
) -> Result<EstimateResult> {
    let f = TestFunctionSpec::Monomial { power: 1 };
    let points = convergence_sweep(setup, &f, &[n], m, seed, norm, p)?;
    Ok(points[0].strong)
}

/// Frozen sampling noise of the `j`-th outer realization.
fn frozen_noise(setup: &Setup, seed: u64, realization: u64, n: usize) -> Result<FixedNoise> {
    let law = setup.policy.noise_law();
    let mut source = KeyedNoise::shared(law.clone(), mix(seed, realization), n);
    FixedNoise::collect(&mut source, law.dim(), n)
}

/// `|E^W f(X^G_T) - E f(X~_T)|` for each of `k_outer` frozen sampling-noise
/// realizations, both expectations over the same `m_inner` Brownian paths.
pub fn conditional_weak_errors(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m_inner: usize,
    k_outer: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    require_paths(m_inner, 1)?;
    f.validate()?;
    let cells = setup.lattice_cells(&[n])?;
    let grid = setup.grid(n)?;
    let noises: Vec<FixedNoise> = (0..k_outer as u64)
        .map(|j| frozen_noise(setup, seed, j, n))
        .collect::<Result<_>>()?;

    let chunks = run_chunks(
        m_inner as u64,
        || {
            Ok((
                Workspace::new(setup, cells)?,
                vec![CompensatedSum::default(); k_outer],
                CompensatedSum::default(),
            ))
        },
        |(ws, sums, agg_sum), path| {
            ws.load_lattice(seed, path);
            ws.aggregate(setup)?;
            agg_sum.add(f.eval_terminal(setup.horizon, ws.aggregated.terminal())?);
            for (sum, noise) in sums.iter_mut().zip(&noises) {
                ws.sample(setup, &grid, &mut NoiseView(noise))?;
                sum.add(f.eval_terminal(setup.horizon, ws.sampled.terminal())?);
            }
            Ok(())
        },
    )?;

    let mut totals = vec![CompensatedSum::default(); k_outer];
    let mut agg_total = CompensatedSum::default();
    for (_, sums, agg) in chunks {
        for (t, s) in totals.iter_mut().zip(&sums) {
            t.add(s.value());
        }
        agg_total.add(agg.value());
    }
    let inv = 1.0 / m_inner as f64;
    let reference = agg_total.value() * inv;
    Ok(totals
        .iter()
        .map(|t| (t.value() * inv - reference).abs())
        .collect())
}

/// Empirical `(1 - rho)`-quantile of the conditional weak error across
/// frozen sampling-noise realizations.
pub fn conditional_weak_error_quantile(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m_inner: usize,
    k_outer: usize,
    rho: f64,
    seed: u64,
) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(PolexError::config(format!("tail probability {rho} outside (0, 1)")));
    }
    if (k_outer as f64) * rho < 1.0 {
        return Err(PolexError::Resolution(format!(
            "{k_outer} realizations cannot resolve a {rho} tail"
        )));
    }
    let errors = conditional_weak_errors(setup, f, n, m_inner, k_outer, seed)?;
    Ok(quantile(&errors, 1.0 - rho))
}

/// Monte Carlo estimate of `E f(X^G_T)` with its noise-draw accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledMean {
    pub estimate: EstimateResult,
    pub complexity: Complexity,
}

/// Terminal mean with every path reusing one sampling-noise realization.
pub fn shared_noise_estimate(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<SampledMean> {
    terminal_mean(setup, f, n, m, seed, NoiseMode::Shared)
}

/// Terminal mean with fresh sampling noise on every path.
pub fn naive_estimate(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<SampledMean> {
    terminal_mean(setup, f, n, m, seed, NoiseMode::Naive)
}

fn terminal_mean(
    setup: &Setup,
    f: &TestFunctionSpec,
    n: usize,
    m: usize,
    seed: u64,
    mode: NoiseMode,
) -> Result<SampledMean> {
    require_paths(m, 2)?;
    f.validate()?;
    let shared = match mode {
        NoiseMode::Shared => {
            let law = setup.policy.noise_law();
            let mut source = KeyedNoise::shared(law.clone(), seed, n);
            Some(FixedNoise::collect(&mut source, law.dim(), n)?)
        }
        NoiseMode::Naive => None,
    };
    let stats = sampled_statistic(setup, n, m, seed, shared.as_ref(), |ws| {
        f.eval_terminal(setup.horizon, ws.sampled.terminal())
    })?;
    Ok(SampledMean {
        estimate: EstimateResult::from_stats(&stats, seed),
        complexity: complexity_report(mode, m, n)?,
    })
}

/// Per-path statistic of the sampled dynamics on grid `n`; `shared` noise
/// replaces the per-path streams when given.
fn sampled_statistic<F>(
    setup: &Setup,
    n: usize,
    m: usize,
    seed: u64,
    shared: Option<&FixedNoise>,
    stat: F,
) -> Result<RunningStats>
where
    F: Fn(&Workspace) -> Result<f64> + Sync,
{
    path_statistic(setup, n, m, seed, shared, false, stat)
}

/// As [`sampled_statistic`] with the aggregated path on the same lattice.
fn paired_statistic<F>(setup: &Setup, n: usize, m: usize, seed: u64, stat: F) -> Result<RunningStats>
where
    F: Fn(&Workspace) -> Result<f64> + Sync,
{
    path_statistic(setup, n, m, seed, None, true, stat)
}

fn path_statistic<F>(
    setup: &Setup,
    n: usize,
    m: usize,
    seed: u64,
    shared: Option<&FixedNoise>,
    paired: bool,
    stat: F,
) -> Result<RunningStats>
where
    F: Fn(&Workspace) -> Result<f64> + Sync,
{
    let cells = setup.lattice_cells(&[n])?;
    let grid = setup.grid(n)?;
    let law = setup.policy.noise_law();
    let chunks = run_chunks(
        m as u64,
        || Ok((Workspace::new(setup, cells)?, RunningStats::default())),
        |(ws, stats), path| {
            ws.load_lattice(seed, path);
            if paired {
                ws.aggregate(setup)?;
            }
            match shared {
                Some(noise) => ws.sample(setup, &grid, &mut NoiseView(noise))?,
                None => {
                    let mut noise = KeyedNoise::naive(law.clone(), seed, path, n);
                    ws.sample(setup, &grid, &mut noise)?
                }
            }
            stats.push(stat(&*ws)?);
            Ok(())
        },
    )?;
    Ok(merge_all(chunks.into_iter().map(|(_, s)| s)))
}

/// Per-path statistic of the aggregated dynamics on `cells` lattice cells.
fn aggregated_statistic<F>(setup: &Setup, cells: usize, m: usize, seed: u64, stat: F) -> Result<RunningStats>
where
    F: Fn(&Workspace) -> Result<f64> + Sync,
{
    let chunks = run_chunks(
        m as u64,
        || Ok((Workspace::new(setup, cells)?, RunningStats::default())),
        |(ws, stats), path| {
            ws.load_lattice(seed, path);
            ws.aggregate(setup)?;
            stats.push(stat(&*ws)?);
            Ok(())
        },
    )?;
    Ok(merge_all(chunks.into_iter().map(|(_, s)| s)))
}

fn sampled_value(setup: &Setup, ws: &Workspace) -> f64 {
    ws.sampled.total_reward() + setup.dynamics.terminal_reward(ws.sampled.terminal())
}

fn aggregated_value(setup: &Setup, ws: &Workspace) -> Result<f64> {
    let path = &ws.aggregated;
    let h = path.step();
    let mut running = CompensatedSum::default();
    for k in 0..path.cells() {
        running.add(setup.aggregated_reward(k as f64 * h, path.state(k))? * h);
    }
    Ok(running.value() + setup.dynamics.terminal_reward(path.terminal()))
}

/// Value collected by the agent: `E[sum_i R_i + h(X^G_T)]`.
pub fn value_sampled(setup: &Setup, n: usize, m: usize, seed: u64) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    let stats = sampled_statistic(setup, n, m, seed, None, |ws| Ok(sampled_value(setup, ws)))?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Value under continuous execution: `E[int r~(s, X~_s) ds + h(X~_T)]`,
/// left-endpoint quadrature on `n_lattice` cells.
pub fn value_aggregated(setup: &Setup, n_lattice: usize, m: usize, seed: u64) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    if n_lattice == 0 || n_lattice > MAX_LATTICE_CELLS {
        return Err(PolexError::config(format!("lattice size {n_lattice} out of range")));
    }
    let stats = aggregated_statistic(setup, n_lattice, m, seed, |ws| aggregated_value(setup, ws))?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Paired estimate of `J^G - J~` on common lattices.
pub fn value_gap(setup: &Setup, n: usize, m: usize, seed: u64) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    let stats = paired_statistic(setup, n, m, seed, |ws| {
        Ok(sampled_value(setup, ws) - aggregated_value(setup, ws)?)
    })?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Value conditional on one sampling-noise realization keyed by `xi_seed`,
/// averaged over `m_inner` Brownian paths keyed by `seed`.
pub fn conditional_value(
    setup: &Setup,
    n: usize,
    m_inner: usize,
    xi_seed: u64,
    seed: u64,
) -> Result<EstimateResult> {
    require_paths(m_inner, 2)?;
    let law = setup.policy.noise_law();
    let mut source = KeyedNoise::shared(law.clone(), xi_seed, n);
    let noise = FixedNoise::collect(&mut source, law.dim(), n)?;
    let stats = sampled_statistic(setup, n, m_inner, seed, Some(&noise), |ws| {
        Ok(sampled_value(setup, ws))
    })?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Which power of the bracket `Delta V + R` enters a discrete sum.
#[derive(Clone, Copy)]
enum Bracket {
    Linear,
    Squared,
}

fn discrete_sum(toolkit: &ValueToolkit, ws: &Workspace, bracket: Bracket) -> f64 {
    let path = &ws.sampled;
    let h = path.step();
    let mut acc = CompensatedSum::default();
    for i in 0..path.intervals() {
        let (c0, c1) = (path.grid_cell(i), path.grid_cell(i + 1));
        let (t0, t1) = (c0 as f64 * h, c1 as f64 * h);
        let (x0, x1) = (path.state(c0), path.state(c1));
        let increment = toolkit.value(t1, x1) - toolkit.value(t0, x0) + path.reward(i);
        let weight = toolkit.test.eval(t0, x0, path.action(i));
        acc.add(match bracket {
            Bracket::Linear => weight * increment,
            Bracket::Squared => weight * increment * increment,
        });
    }
    acc.value()
}

fn check_toolkit(setup: &Setup, toolkit: &ValueToolkit) -> Result<()> {
    crate::error::check_dim("toolkit state dimension", setup.dynamics.state_dim, toolkit.state_dim)
}

/// TD residual `sum_i S(t_i, X_i) (V(t_{i+1}, X_{i+1}) - V(t_i, X_i) + R_i)`.
pub fn td_residual(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    if toolkit.test.depends_on_action() {
        return Err(PolexError::config(
            "the TD residual takes a test function of (t, x) only",
        ));
    }
    sum_estimate(setup, toolkit, n, m, seed, Bracket::Linear)
}

/// `sum_i S(t_i, X_i, a_i) (Delta V + R_i)`; with `S` the policy score and
/// `V` the value function this estimates the policy gradient.
pub fn policy_gradient_estimate(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    sum_estimate(setup, toolkit, n, m, seed, Bracket::Linear)
}

/// `sum_i S(t_i, X_i, a_i) (Delta V + R_i)^2`.
pub fn quadratic_variation_estimate(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    sum_estimate(setup, toolkit, n, m, seed, Bracket::Squared)
}

fn sum_estimate(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n: usize,
    m: usize,
    seed: u64,
    bracket: Bracket,
) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    check_toolkit(setup, toolkit)?;
    let stats = sampled_statistic(setup, n, m, seed, None, |ws| {
        let v = discrete_sum(toolkit, ws, bracket);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PolexError::Unsupported(
                "test function is undefined along the sampled path".into(),
            ))
        }
    })?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Continuous-execution limit of the linear discrete sum:
/// `E int int S(t, X~, a) g(t, X~, a) pi(da) dt` on `n_lattice` cells.
pub fn orthogonality_limit(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n_lattice: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    limit_estimate(setup, toolkit, n_lattice, m, seed, Bracket::Linear)
}

/// Continuous-execution limit of the squared discrete sum:
/// `E int int S |sigma^T grad V|^2 pi(da) dt`.
pub fn quadratic_variation_limit(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n_lattice: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    limit_estimate(setup, toolkit, n_lattice, m, seed, Bracket::Squared)
}

fn limit_estimate(
    setup: &Setup,
    toolkit: &ValueToolkit,
    n_lattice: usize,
    m: usize,
    seed: u64,
    bracket: Bracket,
) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    check_toolkit(setup, toolkit)?;
    if n_lattice == 0 || n_lattice > MAX_LATTICE_CELLS {
        return Err(PolexError::config(format!("lattice size {n_lattice} out of range")));
    }
    let dynamics = &setup.dynamics;
    let stats = aggregated_statistic(setup, n_lattice, m, seed, |ws| {
        let path = &ws.aggregated;
        let h = path.step();
        let mut acc = CompensatedSum::default();
        for k in 0..path.cells() {
            let (t, x) = (k as f64 * h, path.state(k));
            let inner = setup.policy.expect(t, x, |a| {
                let g = match bracket {
                    Bracket::Linear => toolkit.generator(dynamics, t, x, a),
                    Bracket::Squared => toolkit.quadratic_generator(dynamics, t, x, a),
                };
                toolkit.test.eval(t, x, a) * g
            })?;
            acc.add(inner * h);
        }
        Ok(acc.value())
    })?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// `E f(X~_T)` on `n_lattice` cells.
pub fn aggregated_terminal_mean(
    setup: &Setup,
    f: &TestFunctionSpec,
    n_lattice: usize,
    m: usize,
    seed: u64,
) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    f.validate()?;
    if n_lattice == 0 || n_lattice > MAX_LATTICE_CELLS {
        return Err(PolexError::config(format!("lattice size {n_lattice} out of range")));
    }
    let stats = aggregated_statistic(setup, n_lattice, m, seed, |ws| {
        f.eval_terminal(setup.horizon, ws.aggregated.terminal())
    })?;
    Ok(EstimateResult::from_stats(&stats, seed))
}

/// Largest of the estimates of `E |X^G_{t_i}|^power` over the grid points
/// `t_1, ..., t_n`, with the standard error of that estimate.
pub fn grid_moment_sup(
    setup: &Setup,
    n: usize,
    m: usize,
    seed: u64,
    power: u32,
) -> Result<EstimateResult> {
    require_paths(m, 2)?;
    let cells = setup.lattice_cells(&[n])?;
    let grid = setup.grid(n)?;
    let law = setup.policy.noise_law();
    let chunks = run_chunks(
        m as u64,
        || Ok((Workspace::new(setup, cells)?, vec![RunningStats::default(); n])),
        |(ws, stats), path| {
            ws.load_lattice(seed, path);
            let mut noise = KeyedNoise::naive(law.clone(), seed, path, n);
            ws.sample(setup, &grid, &mut noise)?;
            for (i, s) in stats.iter_mut().enumerate() {
                let norm = ws.sampled.grid_state(i + 1).iter().map(|v| v * v).sum::<f64>().sqrt();
                s.push(norm.powi(power as i32));
            }
            Ok(())
        },
    )?;
    let mut total = vec![RunningStats::default(); n];
    for (_, stats) in chunks {
        for (t, s) in total.iter_mut().zip(&stats) {
            t.merge(s);
        }
    }
    let best = total
        .iter()
        .max_by(|a, b| a.mean().total_cmp(&b.mean()))
        .expect("at least one grid point");
    Ok(EstimateResult::from_stats(best, seed))
}

#[cfg(test)]
mod tests;
