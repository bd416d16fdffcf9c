use std::io::Write;

use crate::error::{check_dim, PolexError, Result};
use crate::policy::{AggregatedCoefficients, PolicySpec};

use super::{BrownianLattice, DynamicsSpec, SamplingNoise, TimeGrid};

#[derive(Debug, Clone, Default)]
struct Scratch {
    drift: Vec<f64>,
    vol: Vec<f64>,
    noise: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, d: usize, noise_dim: usize) {
        self.drift.resize(d, 0.0);
        self.vol.resize(d * d, 0.0);
        self.noise.resize(noise_dim, 0.0);
    }
}

/// A path of the sampled dynamics on every lattice point, with the action
/// and accumulated running reward of every grid interval.
#[derive(Debug, Clone, Default)]
pub struct SampledPath {
    state_dim: usize,
    action_dim: usize,
    step: f64,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    grid_cells: Vec<usize>,
    scratch: Scratch,
}

impl SampledPath {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn cells(&self) -> usize {
        self.states.len() / self.state_dim.max(1) - 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn intervals(&self) -> usize {
        self.rewards.len()
    }

    /// State at lattice point `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// State at grid point `i`.
    pub fn grid_state(&self, i: usize) -> &[f64] {
        self.state(self.grid_cells[i])
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.cells())
    }

    /// Action held on grid interval `i`.
    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// Accumulated running reward over grid interval `i`.
    pub fn reward(&self, i: usize) -> f64 {
        self.rewards[i]
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Lattice index of grid point `i`.
    pub fn grid_cell(&self, i: usize) -> usize {
        self.grid_cells[i]
    }
}

/// Simulate the sampled dynamics: an action is drawn at every grid point
/// from the current state and that point's sampling noise, then held while
/// the SDE runs on the lattice until the next grid point.
pub fn simulate_sampled(
    dynamics: &DynamicsSpec,
    policy: &PolicySpec,
    grid: &TimeGrid,
    lattice: &BrownianLattice,
    noise: &mut dyn SamplingNoise,
) -> Result<SampledPath> {
    let mut path = SampledPath::default();
    simulate_sampled_into(dynamics, policy, grid, lattice, noise, &mut path)?;
    Ok(path)
}

pub(crate) fn simulate_sampled_into(
    dynamics: &DynamicsSpec,
    policy: &PolicySpec,
    grid: &TimeGrid,
    lattice: &BrownianLattice,
    noise: &mut dyn SamplingNoise,
    path: &mut SampledPath,
) -> Result<()> {
    let d = dynamics.state_dim;
    let m = dynamics.action_dim;
    check_dim("x0", d, dynamics.x0.len())?;
    check_dim("Brownian dimension", d, lattice.dim())?;
    check_dim("policy action dimension", m, policy.action_dim())?;
    check_horizon(grid.horizon(), lattice.horizon())?;

    let cells = lattice.cells();
    let n = grid.intervals();
    let h = lattice.step();
    path.state_dim = d;
    path.action_dim = m;
    path.step = h;
    grid.lattice_indices_into(cells, &mut path.grid_cells)?;
    path.states.resize((cells + 1) * d, 0.0);
    path.actions.resize(n * m, 0.0);
    path.rewards.resize(n, 0.0);
    path.scratch.resize(d, policy.noise_law().dim());
    path.states[..d].copy_from_slice(&dynamics.x0);

    let SampledPath {
        states,
        actions,
        rewards,
        grid_cells,
        scratch,
        ..
    } = path;
    let exact = dynamics.per_interval_exact;

    for i in 0..n {
        let t_i = grid.times()[i];
        let (start, end) = (grid_cells[i], grid_cells[i + 1]);
        // The action is fixed from X at t_i and xi_i before any increment of
        // the interval is read.
        let action = &mut actions[i * m..(i + 1) * m];
        {
            let x_i = &states[start * d..(start + 1) * d];
            noise.draw(i, &mut scratch.noise)?;
            policy.sample_action(t_i, x_i, &scratch.noise, action)?;
            if action.iter().any(|v| !v.is_finite()) {
                return Err(blow_up(t_i, x_i, action));
            }
            if exact {
                dynamics.drift(t_i, x_i, action, &mut scratch.drift);
                dynamics.vol(t_i, x_i, action, &mut scratch.vol);
            }
        }
        let mut reward = 0.0;
        if exact && !dynamics.has_running_reward() {
            // Frozen coefficients: accumulate the increments directly.
            if d == 1 {
                let (b, s) = (scratch.drift[0] * h, scratch.vol[0]);
                let dw = &lattice.increments()[start..end];
                let xs = &mut states[start..=end];
                let mut x = xs[0];
                for (next, w) in xs[1..].iter_mut().zip(dw) {
                    x = x + b + s * w;
                    *next = x;
                }
            } else {
                for k in start..end {
                    let (done, rest) = states.split_at_mut((k + 1) * d);
                    euler_step(&done[k * d..], &scratch.drift, &scratch.vol, lattice.increment(k), h, &mut rest[..d]);
                }
            }
            let last = &states[end * d..(end + 1) * d];
            if last.iter().any(|v| !v.is_finite()) {
                return Err(blow_up(end as f64 * h, last, action));
            }
            rewards[i] = 0.0;
            continue;
        }
        for k in start..end {
            let t_k = k as f64 * h;
            let (done, rest) = states.split_at_mut((k + 1) * d);
            let x = &done[k * d..];
            let next = &mut rest[..d];
            if !exact {
                dynamics.drift(t_k, x, action, &mut scratch.drift);
                dynamics.vol(t_k, x, action, &mut scratch.vol);
            }
            reward += dynamics.running_reward(t_k, x, action) * h;
            euler_step(x, &scratch.drift, &scratch.vol, lattice.increment(k), h, next);
            if next.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
                return Err(blow_up(t_k + h, next, action));
            }
        }
        rewards[i] = reward;
    }
    Ok(())
}

/// Aggregated-dynamics path on every lattice point.
#[derive(Debug, Clone, Default)]
pub struct AggregatedPath {
    dim: usize,
    step: f64,
    states: Vec<f64>,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
}

impl AggregatedPath {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn cells(&self) -> usize {
        self.states.len() / self.dim.max(1) - 1
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.cells())
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

/// Euler-Maruyama for the aggregated dynamics on the full lattice. Exact
/// when the aggregated coefficients are constant.
pub fn simulate_aggregated(
    agg: &AggregatedCoefficients,
    lattice: &BrownianLattice,
    x0: &[f64],
) -> Result<AggregatedPath> {
    let mut path = AggregatedPath::default();
    simulate_aggregated_into(agg, lattice, x0, &mut path)?;
    Ok(path)
}

pub(crate) fn simulate_aggregated_into(
    agg: &AggregatedCoefficients,
    lattice: &BrownianLattice,
    x0: &[f64],
    path: &mut AggregatedPath,
) -> Result<()> {
    let d = agg.state_dim();
    check_dim("x0", d, x0.len())?;
    check_dim("Brownian dimension", d, lattice.dim())?;
    let cells = lattice.cells();
    let h = lattice.step();
    path.dim = d;
    path.step = h;
    path.states.resize((cells + 1) * d, 0.0);
    path.drift.resize(d, 0.0);
    path.diffusion.resize(d * d, 0.0);
    path.states[..d].copy_from_slice(x0);

    let constant = agg.is_constant();
    if constant {
        agg.drift(0.0, x0, &mut path.drift)?;
        agg.diffusion(0.0, x0, &mut path.diffusion)?;
    }
    for k in 0..cells {
        let t_k = k as f64 * h;
        let (done, rest) = path.states.split_at_mut((k + 1) * d);
        let x = &done[k * d..];
        let next = &mut rest[..d];
        if !constant {
            agg.drift(t_k, x, &mut path.drift)?;
            agg.diffusion(t_k, x, &mut path.diffusion)?;
        }
        euler_step(x, &path.drift, &path.diffusion, lattice.increment(k), h, next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(blow_up(t_k + h, next, &[]));
        }
    }
    Ok(())
}

/// Sampled and aggregated paths driven by the same Brownian increments.
#[derive(Debug, Clone)]
pub struct PairedTrajectory {
    pub grid: TimeGrid,
    pub sampled: SampledPath,
    pub aggregated: AggregatedPath,
}

impl PairedTrajectory {
    /// `max_k |X^G_k - X~_k|` over lattice points: a lower bound of the
    /// supremum over continuous time.
    pub fn sup_difference(&self) -> f64 {
        (0..=self.sampled.cells())
            .map(|k| distance(self.sampled.state(k), self.aggregated.state(k)))
            .fold(0.0, f64::max)
    }

    pub fn terminal_difference(&self) -> Vec<f64> {
        self.sampled
            .terminal()
            .iter()
            .zip(self.aggregated.terminal())
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Debug dump: `time, sampled_*, aggregated_*, action_index`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.sampled.state_dim();
        let mut header = vec!["time".to_string()];
        header.extend((0..d).map(|j| format!("sampled_state_{j}")));
        header.extend((0..d).map(|j| format!("aggregated_state_{j}")));
        header.push("action_index".into());
        writeln!(w, "{}", header.join(","))?;
        let n = self.sampled.intervals();
        let mut interval = 0;
        for k in 0..=self.sampled.cells() {
            while interval < n && k >= self.sampled.grid_cell(interval + 1) {
                interval += 1;
            }
            let mut row = vec![format!("{}", k as f64 * self.sampled.step())];
            row.extend(self.sampled.state(k).iter().map(|v| v.to_string()));
            row.extend(self.aggregated.state(k).iter().map(|v| v.to_string()));
            row.push(interval.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Simulate both processes on one lattice.
pub fn simulate_pair(
    dynamics: &DynamicsSpec,
    policy: &PolicySpec,
    agg: &AggregatedCoefficients,
    grid: &TimeGrid,
    lattice: &BrownianLattice,
    noise: &mut dyn SamplingNoise,
) -> Result<PairedTrajectory> {
    let sampled = simulate_sampled(dynamics, policy, grid, lattice, noise)?;
    let aggregated = simulate_aggregated(agg, lattice, &dynamics.x0)?;
    Ok(PairedTrajectory {
        grid: grid.clone(),
        sampled,
        aggregated,
    })
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
fn euler_step(x: &[f64], drift: &[f64], vol: &[f64], dw: &[f64], h: f64, next: &mut [f64]) {
    let d = x.len();
    if d == 1 {
        next[0] = x[0] + drift[0] * h + vol[0] * dw[0];
        return;
    }
    for i in 0..d {
        let noise: f64 = vol[i * d..(i + 1) * d].iter().zip(dw).map(|(s, w)| s * w).sum();
        next[i] = x[i] + drift[i] * h + noise;
    }
}

fn check_horizon(grid: f64, lattice: f64) -> Result<()> {
    if (grid - lattice).abs() > 1e-12 * grid.abs().max(1.0) {
        Err(PolexError::config(format!(
            "grid horizon {grid} differs from lattice horizon {lattice}"
        )))
    } else {
        Ok(())
    }
}

fn blow_up(t: f64, x: &[f64], a: &[f64]) -> PolexError {
    PolexError::BlowUp {
        t,
        x: x.to_vec(),
        a: a.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::{make_lattice, FixedNoise, KeyedNoise};
    use crate::policy::aggregate_coefficients;

    fn fixed(values: &[f64]) -> FixedNoise {
        FixedNoise::new(1, values.to_vec()).unwrap()
    }

    #[test]
    fn single_interval_is_exact() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::gauss_std();
        let grid = TimeGrid::uniform(1, 1.0).unwrap();
        let lattice = make_lattice(4, 0, 1, 16, 1.0).unwrap();
        let mut noise = fixed(&[0.8]);
        let path = simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise).unwrap();
        let mut w = [0.0];
        lattice.value_at(16, &mut w).unwrap();
        assert!((path.terminal()[0] - (0.8 + w[0])).abs() < 1e-14);
        assert_eq!(path.action(0), &[0.8]);
    }

    #[test]
    fn volatility_control_freezes_the_action() {
        let dynamics = DynamicsSpec::volatility_control();
        let policy = crate::policy::PolicySpec::gauss_std();
        let grid = TimeGrid::uniform(2, 1.0).unwrap();
        let lattice = make_lattice(5, 0, 1, 4, 1.0).unwrap();
        let mut noise = fixed(&[2.0, -1.0]);
        let path = simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise).unwrap();
        let (mut w1, mut w2) = ([0.0], [0.0]);
        lattice.block_sum(0, 2, &mut w1);
        lattice.block_sum(2, 4, &mut w2);
        assert!((path.terminal()[0] - (2.0 * w1[0] - w2[0])).abs() < 1e-14);
    }

    #[test]
    fn dirac_policy_paths_coincide() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::dirac(vec![0.0]).unwrap();
        let agg = aggregate_coefficients(&policy, &dynamics).unwrap();
        for n in [1, 3, 8] {
            let grid = TimeGrid::uniform(n, 1.0).unwrap();
            let lattice = make_lattice(9, n as u64, 1, 24, 1.0).unwrap();
            let mut noise = KeyedNoise::naive(policy.noise_law(), 9, 0, n);
            let pair = simulate_pair(&dynamics, &policy, &agg, &grid, &lattice, &mut noise).unwrap();
            assert_eq!(pair.sup_difference(), 0.0);
            assert_eq!(pair.terminal_difference(), vec![0.0]);
        }
    }

    #[test]
    fn aggregated_with_zero_noise_is_the_ode() {
        let agg = AggregatedCoefficients::constant(vec![0.7], vec![1.0]).unwrap();
        let lattice = BrownianLattice::zeros(1, 10, 2.0).unwrap();
        let path = simulate_aggregated(&agg, &lattice, &[1.0]).unwrap();
        assert!((path.terminal()[0] - (1.0 + 0.7 * 2.0)).abs() < 1e-14);
    }

    #[test]
    fn aggregated_brownian_motion_is_the_lattice_path() {
        let agg = AggregatedCoefficients::constant(vec![0.0], vec![1.0]).unwrap();
        let lattice = make_lattice(2, 0, 1, 32, 1.0).unwrap();
        let path = simulate_aggregated(&agg, &lattice, &[0.0]).unwrap();
        let mut w = [0.0];
        for k in [0, 5, 32] {
            lattice.value_at(k, &mut w).unwrap();
            assert!((path.state(k)[0] - w[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn euler_on_linear_decay_is_first_order() {
        // dX = -X dt, X_0 = 1: X_1 = e^{-1}; Euler gives (1 - h)^L.
        let agg = AggregatedCoefficients::from_functions(
            1,
            Arc::new(|_, x, out| out[0] = -x[0]),
            Arc::new(|_, _, out| out[0] = 0.0),
        );
        let exact = (-1f64).exp();
        let mut errors = Vec::new();
        for cells in [64, 128, 256] {
            let lattice = make_lattice(1, 0, 1, cells, 1.0).unwrap();
            let path = simulate_aggregated(&agg, &lattice, &[1.0]).unwrap();
            let h = 1.0 / cells as f64;
            assert!((path.terminal()[0] - (1.0 - h).powi(cells as i32)).abs() < 1e-13);
            errors.push((path.terminal()[0] - exact).abs());
        }
        // e^{-1} h / 2 leading term.
        assert!((errors[0] * 64.0 - exact / 2.0).abs() < 0.01);
        assert!((errors[0] / errors[1] - 2.0).abs() < 0.05);
        assert!((errors[1] / errors[2] - 2.0).abs() < 0.05);
    }

    #[test]
    fn refining_the_lattice_keeps_exact_grid_states() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::gauss_std();
        let fine = make_lattice(17, 3, 1, 64, 1.0).unwrap();
        let coarse = fine.coarsen(8).unwrap();
        for n in [2, 4, 8] {
            let grid = TimeGrid::uniform(n, 1.0).unwrap();
            let mut a = KeyedNoise::naive(policy.noise_law(), 17, 3, n);
            let mut b = KeyedNoise::naive(policy.noise_law(), 17, 3, n);
            let p_fine = simulate_sampled(&dynamics, &policy, &grid, &fine, &mut a).unwrap();
            let p_coarse = simulate_sampled(&dynamics, &policy, &grid, &coarse, &mut b).unwrap();
            for i in 0..=n {
                assert!((p_fine.grid_state(i)[0] - p_coarse.grid_state(i)[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn actions_ignore_future_increments() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::gauss_mean_field(0.0, -1.0, 0.5).unwrap();
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let lattice = make_lattice(8, 0, 1, 16, 1.0).unwrap();
        let mut perturbed = lattice.increments().to_vec();
        for v in perturbed[9..].iter_mut() {
            *v += 1.0;
        }
        let perturbed = BrownianLattice::from_increments(1, 1.0, perturbed).unwrap();
        let mut a = KeyedNoise::naive(policy.noise_law(), 8, 0, 4);
        let mut b = KeyedNoise::naive(policy.noise_law(), 8, 0, 4);
        let p = simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut a).unwrap();
        let q = simulate_sampled(&dynamics, &policy, &grid, &perturbed, &mut b).unwrap();
        // Cells 9.. belong to interval 2 onwards; actions at t_0, t_1, t_2 see only cells < 8.
        for i in 0..3 {
            assert_eq!(p.action(i), q.action(i));
        }
        assert_ne!(p.action(3), q.action(3));
    }

    #[test]
    fn rewards_use_left_endpoint_quadrature() {
        let dynamics = DynamicsSpec::drift_control()
            .with_running_reward(Arc::new(|t, _x, a| t + a[0]));
        let policy = crate::policy::PolicySpec::gauss_std();
        let grid = TimeGrid::uniform(2, 1.0).unwrap();
        let lattice = BrownianLattice::zeros(1, 4, 1.0).unwrap();
        let mut noise = fixed(&[1.0, -1.0]);
        let path = simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise).unwrap();
        // Interval 0: cells at t = 0, 0.25; interval 1: t = 0.5, 0.75.
        assert!((path.reward(0) - (0.25 * (0.0 + 0.25) + 0.5)).abs() < 1e-15);
        assert!((path.reward(1) - (0.25 * (0.5 + 0.75) - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn blow_up_reports_context() {
        let dynamics = DynamicsSpec::new(1, 1, vec![1.0])
            .with_drift(Arc::new(|_, x, _, out| out[0] = x[0] * x[0] * 1e200));
        let policy = crate::policy::PolicySpec::gauss_std();
        let grid = TimeGrid::uniform(1, 1.0).unwrap();
        let lattice = BrownianLattice::zeros(1, 8, 1.0).unwrap();
        let mut noise = fixed(&[0.5]);
        match simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise) {
            Err(PolexError::BlowUp { a, .. }) => assert_eq!(a, vec![0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::gauss_std();
        let grid = TimeGrid::uniform(3, 1.0).unwrap();
        let lattice = BrownianLattice::zeros(1, 8, 1.0).unwrap();
        let mut noise = fixed(&[0.0; 3]);
        assert!(simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise).is_err());
        let lattice = BrownianLattice::zeros(1, 6, 2.0).unwrap();
        assert!(simulate_sampled(&dynamics, &policy, &grid, &lattice, &mut noise).is_err());
    }

    #[test]
    fn csv_dump_layout() {
        let dynamics = DynamicsSpec::drift_control();
        let policy = crate::policy::PolicySpec::gauss_std();
        let agg = aggregate_coefficients(&policy, &dynamics).unwrap();
        let grid = TimeGrid::uniform(2, 1.0).unwrap();
        let lattice = make_lattice(1, 0, 1, 4, 1.0).unwrap();
        let mut noise = fixed(&[0.1, 0.2]);
        let pair = simulate_pair(&dynamics, &policy, &agg, &grid, &lattice, &mut noise).unwrap();
        let mut buf = Vec::new();
        pair.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,sampled_state_0,aggregated_state_0,action_index");
        assert_eq!(lines.len(), 6);
        let idx: Vec<_> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(idx, vec!["0", "0", "1", "1", "2"]);
    }
}
