//! Stochastic policies, their sampling procedures and the aggregated
//! coefficients they induce on the controlled dynamics.
//!
//! A policy maps a time-state pair to a distribution over actions. Executing
//! it requires a sampling procedure: a map `(t, x, noise) -> action` such that
//! the action has the policy's law whenever the noise is drawn from the
//! policy's [`NoiseLaw`]. Three kinds are supported: Gaussian with affine
//! sampling map, finite support via inverse CDF, and user-supplied samplers.

mod aggregate;
mod linalg;
mod quadrature;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, PolexError, Result};

pub use aggregate::{aggregate_coefficients, AggregatedCoefficients};
pub use linalg::{psd_sqrt, PSD_TOLERANCE};
pub use quadrature::{
    gauss_hermite, NoiseNodes, QuadratureSpec, DEFAULT_GAUSS_HERMITE_ORDER,
    DEFAULT_MONTE_CARLO_SAMPLES,
};

pub(crate) use linalg::{add_outer_square, mat_vec};

/// `(t, x, out)`: writes the action-space mean.
pub type MeanFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(t, x, noise, out)`: writes an action.
pub type SamplerFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `(a, t, x, out)`: writes the parameter gradient of the log-density at `a`.
pub type ScoreFn = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;

const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Law of the noise fed to a sampling procedure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoiseLaw {
    /// Independent standard normals.
    StandardNormal(usize),
    /// Independent uniforms on `[0, 1)`.
    Uniform(usize),
}

impl NoiseLaw {
    pub fn dim(&self) -> usize {
        match *self {
            NoiseLaw::StandardNormal(d) | NoiseLaw::Uniform(d) => d,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            NoiseLaw::StandardNormal(_) => {
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            NoiseLaw::Uniform(_) => {
                for v in out.iter_mut() {
                    *v = rng.random::<f64>();
                }
            }
        }
    }
}

/// Mean map of a Gaussian policy.
#[derive(Clone)]
pub enum GaussianMean {
    Constant(Vec<f64>),
    /// `offset + gain * x`, with `gain` row-major `action_dim x state_dim`.
    Affine {
        offset: Vec<f64>,
        gain: Vec<f64>,
        state_dim: usize,
    },
    Custom(MeanFn),
}

impl fmt::Debug for GaussianMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaussianMean::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            GaussianMean::Affine {
                offset,
                gain,
                state_dim,
            } => f
                .debug_struct("Affine")
                .field("offset", offset)
                .field("gain", gain)
                .field("state_dim", state_dim)
                .finish(),
            GaussianMean::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone)]
pub enum PolicyKind {
    /// `a = mean(t, x) + chol_cov * noise` with standard normal noise.
    GaussianAffine {
        mean: GaussianMean,
        /// Row-major lower-triangular `action_dim x action_dim`.
        chol_cov: Vec<f64>,
    },
    /// Discrete policy sampled by inverse CDF from one uniform.
    FiniteSupport { atoms: Vec<(Vec<f64>, f64)> },
    Custom {
        sampler: SamplerFn,
        noise: NoiseLaw,
        state_independent: bool,
    },
}

impl fmt::Debug for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::GaussianAffine { mean, chol_cov } => f
                .debug_struct("GaussianAffine")
                .field("mean", mean)
                .field("chol_cov", chol_cov)
                .finish(),
            PolicyKind::FiniteSupport { atoms } => {
                f.debug_struct("FiniteSupport").field("atoms", atoms).finish()
            }
            PolicyKind::Custom { noise, .. } => {
                f.debug_struct("Custom").field("noise", noise).finish()
            }
        }
    }
}

/// An executable stochastic policy.
#[derive(Clone)]
pub struct PolicySpec {
    action_dim: usize,
    kind: PolicyKind,
    quadrature: Option<QuadratureSpec>,
    nodes: Arc<NoiseNodes>,
    cumulative: Vec<f64>,
    score: Option<(usize, ScoreFn)>,
}

impl fmt::Debug for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicySpec")
            .field("action_dim", &self.action_dim)
            .field("kind", &self.kind)
            .field("quadrature", &self.quadrature)
            .field("has_score", &self.score.is_some())
            .finish()
    }
}

impl PolicySpec {
    pub fn gaussian(mean: GaussianMean, chol_cov: Vec<f64>, action_dim: usize) -> Result<Self> {
        if action_dim == 0 {
            return Err(PolexError::config("action dimension must be positive"));
        }
        check_dim("Cholesky factor", action_dim * action_dim, chol_cov.len())?;
        for i in 0..action_dim {
            if !(chol_cov[i * action_dim + i] >= 0.0) {
                return Err(PolexError::config(
                    "Cholesky factor must have a nonnegative diagonal",
                ));
            }
            for j in (i + 1)..action_dim {
                if chol_cov[i * action_dim + j] != 0.0 {
                    return Err(PolexError::config("Cholesky factor must be lower triangular"));
                }
            }
        }
        match &mean {
            GaussianMean::Constant(m) => check_dim("policy mean", action_dim, m.len())?,
            GaussianMean::Affine {
                offset,
                gain,
                state_dim,
            } => {
                check_dim("policy mean offset", action_dim, offset.len())?;
                check_dim("policy mean gain", action_dim * state_dim, gain.len())?;
            }
            GaussianMean::Custom(_) => {}
        }
        let kind = PolicyKind::GaussianAffine { mean, chol_cov };
        Self::build(action_dim, kind, None)
    }

    pub fn finite_support(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let action_dim = atoms
            .first()
            .map(|(a, _)| a.len())
            .ok_or_else(|| PolexError::config("finite-support policy needs at least one atom"))?;
        if action_dim == 0 {
            return Err(PolexError::config("action dimension must be positive"));
        }
        let mut total = 0.0;
        for (a, p) in &atoms {
            check_dim("atom", action_dim, a.len())?;
            if !(*p >= 0.0) {
                return Err(PolexError::config("atom probabilities must be nonnegative"));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(PolexError::config(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        Self::build(action_dim, PolicyKind::FiniteSupport { atoms }, None)
    }

    pub fn custom(
        action_dim: usize,
        noise: NoiseLaw,
        sampler: SamplerFn,
        quadrature: QuadratureSpec,
        state_independent: bool,
    ) -> Result<Self> {
        if action_dim == 0 {
            return Err(PolexError::config("action dimension must be positive"));
        }
        let kind = PolicyKind::Custom {
            sampler,
            noise,
            state_independent,
        };
        Self::build(action_dim, kind, Some(quadrature))
    }

    fn build(
        action_dim: usize,
        kind: PolicyKind,
        quadrature: Option<QuadratureSpec>,
    ) -> Result<Self> {
        let cumulative = match &kind {
            PolicyKind::FiniteSupport { atoms } => atoms
                .iter()
                .scan(0.0, |acc, (_, p)| {
                    *acc += p;
                    Some(*acc)
                })
                .collect(),
            _ => Vec::new(),
        };
        let mut policy = PolicySpec {
            action_dim,
            kind,
            quadrature: None,
            nodes: Arc::new(NoiseNodes::default()),
            cumulative,
            score: None,
        };
        policy.set_quadrature(quadrature)?;
        Ok(policy)
    }

    fn set_quadrature(&mut self, quadrature: Option<QuadratureSpec>) -> Result<()> {
        if let Some(q) = &quadrature {
            q.validate()?;
        }
        let law = self.noise_law();
        let nodes = match (&self.kind, quadrature) {
            (PolicyKind::FiniteSupport { .. }, _) => NoiseNodes::default(),
            (_, Some(QuadratureSpec::MonteCarlo { samples, seed })) => {
                NoiseNodes::monte_carlo(&law, samples, seed)
            }
            (PolicyKind::Custom { .. }, Some(QuadratureSpec::ClosedForm)) => {
                return Err(PolexError::config(
                    "closed-form aggregation is unavailable for custom sampling procedures",
                ))
            }
            (_, Some(QuadratureSpec::GaussHermite { order })) => match law {
                NoiseLaw::StandardNormal(d) => NoiseNodes::gauss_hermite(d, order)?,
                NoiseLaw::Uniform(_) => {
                    return Err(PolexError::config(
                        "Gauss-Hermite quadrature needs standard normal sampling noise",
                    ))
                }
            },
            // Gaussian closed form and the Gaussian default share a
            // Gauss-Hermite rule for expectations without closed form.
            _ => NoiseNodes::gauss_hermite(law.dim(), DEFAULT_GAUSS_HERMITE_ORDER)?,
        };
        self.quadrature = quadrature;
        self.nodes = Arc::new(nodes);
        Ok(())
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureSpec) -> Result<Self> {
        self.set_quadrature(Some(quadrature))?;
        Ok(self)
    }

    pub fn with_score(mut self, param_dim: usize, score: ScoreFn) -> Self {
        self.score = Some((param_dim, score));
        self
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    /// Explicitly requested quadrature, if any.
    pub fn quadrature(&self) -> Option<QuadratureSpec> {
        self.quadrature
    }

    pub fn score_dim(&self) -> Option<usize> {
        self.score.as_ref().map(|(d, _)| *d)
    }

    pub fn has_score(&self) -> bool {
        self.score.is_some()
    }

    pub fn noise_law(&self) -> NoiseLaw {
        match &self.kind {
            PolicyKind::GaussianAffine { .. } => NoiseLaw::StandardNormal(self.action_dim),
            PolicyKind::FiniteSupport { .. } => NoiseLaw::Uniform(1),
            PolicyKind::Custom { noise, .. } => noise.clone(),
        }
    }

    /// Whether the action law is the same for every `(t, x)`.
    pub fn is_state_independent(&self) -> bool {
        match &self.kind {
            PolicyKind::GaussianAffine { mean, .. } => matches!(mean, GaussianMean::Constant(_)),
            PolicyKind::FiniteSupport { .. } => true,
            PolicyKind::Custom {
                state_independent, ..
            } => *state_independent,
        }
    }

    /// Single atom of a degenerate (Dirac) policy, if this is one.
    pub fn dirac_atom(&self) -> Option<&[f64]> {
        match &self.kind {
            PolicyKind::FiniteSupport { atoms } => {
                let mut live = atoms.iter().filter(|(_, p)| *p > 0.0);
                match (live.next(), live.next()) {
                    (Some((a, _)), None) => Some(a.as_slice()),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Mean of a Gaussian policy at `(t, x)`.
    pub fn gaussian_mean(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.kind {
            PolicyKind::GaussianAffine { mean, .. } => {
                match mean {
                    GaussianMean::Constant(m) => out.copy_from_slice(m),
                    GaussianMean::Affine {
                        offset,
                        gain,
                        state_dim,
                    } => {
                        check_dim("state for policy mean", *state_dim, x.len())?;
                        mat_vec(gain, self.action_dim, *state_dim, x, out);
                        for (o, c) in out.iter_mut().zip(offset) {
                            *o += c;
                        }
                    }
                    GaussianMean::Custom(f) => f(t, x, out),
                }
                Ok(())
            }
            _ => Err(PolexError::Unsupported(
                "gaussian_mean on a non-Gaussian policy".into(),
            )),
        }
    }

    /// Apply the sampling procedure: `out = phi(t, x, noise)`.
    pub fn sample_action(&self, t: f64, x: &[f64], noise: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("action buffer", self.action_dim, out.len())?;
        check_dim("sampling noise", self.noise_law().dim(), noise.len())?;
        match &self.kind {
            PolicyKind::GaussianAffine { chol_cov, .. } => {
                self.gaussian_mean(t, x, out)?;
                let m = self.action_dim;
                for i in 0..m {
                    let row = &chol_cov[i * m..i * m + i + 1];
                    out[i] += row.iter().zip(noise).map(|(l, z)| l * z).sum::<f64>();
                }
            }
            PolicyKind::FiniteSupport { atoms } => {
                let u = noise[0];
                let idx = self
                    .cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(atoms.len() - 1);
                out.copy_from_slice(&atoms[idx].0);
            }
            PolicyKind::Custom { sampler, .. } => {
                sampler(t, x, noise, out);
            }
        }
        Ok(())
    }

    /// Visit `(action, weight)` pairs of the policy's quadrature at `(t, x)`.
    pub fn for_each_node<F>(&self, t: f64, x: &[f64], mut visit: F) -> Result<()>
    where
        F: FnMut(&[f64], f64) -> Result<()>,
    {
        match &self.kind {
            PolicyKind::FiniteSupport { atoms } => {
                for (a, p) in atoms {
                    if *p > 0.0 {
                        visit(a, *p)?;
                    }
                }
            }
            _ => {
                let mut action = vec![0.0; self.action_dim];
                for i in 0..self.nodes.len() {
                    self.sample_action(t, x, self.nodes.point(i), &mut action)?;
                    visit(&action, self.nodes.weights[i])?;
                }
            }
        }
        Ok(())
    }

    /// `int g(a) pi(da | t, x)` under the policy's quadrature.
    pub fn expect<F>(&self, t: f64, x: &[f64], mut g: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut acc = 0.0;
        self.for_each_node(t, x, |a, w| {
            let v = g(a);
            if !v.is_finite() {
                return Err(PolexError::Quadrature { t, x: x.to_vec() });
            }
            acc += w * v;
            Ok(())
        })?;
        Ok(acc)
    }

    /// Parameter gradient of the log-density at action `a`.
    pub fn score(&self, a: &[f64], t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (dim, f) = self.score.as_ref().ok_or_else(|| {
            PolexError::Unsupported("policy has no score function".into())
        })?;
        check_dim("score buffer", *dim, out.len())?;
        check_dim("action", self.action_dim, a.len())?;
        f(a, t, x, out);
        Ok(())
    }

    // Presets

    /// `N(0, 1)` on a scalar action.
    pub fn gauss_std() -> Self {
        Self::gaussian(GaussianMean::Constant(vec![0.0]), vec![1.0], 1)
            .expect("valid preset")
    }

    /// `N(offset + gain * x, std^2)` on a scalar action over a scalar state.
    pub fn gauss_mean_field(offset: f64, gain: f64, std: f64) -> Result<Self> {
        Self::gaussian(
            GaussianMean::Affine {
                offset: vec![offset],
                gain: vec![gain],
                state_dim: 1,
            },
            vec![std],
            1,
        )
    }

    /// `+1` or `-1` with probability one half each.
    pub fn two_point() -> Self {
        Self::finite_support(vec![(vec![-1.0], 0.5), (vec![1.0], 0.5)]).expect("valid preset")
    }

    pub fn dirac(action: Vec<f64>) -> Result<Self> {
        Self::finite_support(vec![(action, 1.0)])
    }

    /// Scalar `N(psi, variance)` parameterised by its mean, with the score
    /// `(a - psi) / variance`.
    pub fn gaussian_mean_parameter(psi: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(PolexError::config("variance must be positive"));
        }
        let policy = Self::gaussian(GaussianMean::Constant(vec![psi]), vec![variance.sqrt()], 1)?;
        let score: ScoreFn = Arc::new(move |a, _t, _x, out| out[0] = (a[0] - psi) / variance);
        Ok(policy.with_score(1, score))
    }

    /// Named policy presets usable from experiment configs.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gauss_std" => Ok(Self::gauss_std()),
            "gauss_mean_field" => Self::gauss_mean_field(0.0, -1.0, 0.5),
            "two_point" => Ok(Self::two_point()),
            "dirac" => Self::dirac(vec![0.0]),
            other => Err(PolexError::config(format!("unknown policy preset '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamTag};
    use crate::stats::RunningStats;

    #[test]
    fn gaussian_affine_sampling() {
        let p = PolicySpec::gauss_std();
        let mut a = [f64::NAN];
        p.sample_action(0.0, &[0.0], &[0.0], &mut a).unwrap();
        assert_eq!(a[0], 0.0);

        let mean: MeanFn = Arc::new(|_t, x, out| out[0] = x[0]);
        let p = PolicySpec::gaussian(GaussianMean::Custom(mean), vec![2.0], 1).unwrap();
        p.sample_action(0.0, &[3.0], &[1.0], &mut a).unwrap();
        assert_eq!(a[0], 5.0);
    }

    #[test]
    fn finite_support_inverse_cdf() {
        let p = PolicySpec::two_point();
        let mut a = [0.0];
        // Cumulative table [0.5, 1.0]: u in [0, 0.5) -> -1, u in [0.5, 1) -> +1.
        p.sample_action(0.0, &[0.0], &[0.7], &mut a).unwrap();
        assert_eq!(a[0], 1.0);
        p.sample_action(0.0, &[0.0], &[0.2], &mut a).unwrap();
        assert_eq!(a[0], -1.0);
        p.sample_action(0.0, &[0.0], &[0.5], &mut a).unwrap();
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn affine_mean_dimension_mismatch_is_a_config_error() {
        let p = PolicySpec::gauss_mean_field(0.0, -1.0, 1.0).unwrap();
        let mut a = [0.0];
        let err = p.sample_action(0.0, &[1.0, 2.0], &[0.0], &mut a).unwrap_err();
        assert!(matches!(err, PolexError::Dimension { .. }));
    }

    #[test]
    fn invalid_policies_are_rejected() {
        assert!(PolicySpec::finite_support(vec![(vec![0.0], 0.4), (vec![1.0], 0.5)]).is_err());
        assert!(PolicySpec::finite_support(vec![(vec![0.0], -0.1), (vec![1.0], 1.1)]).is_err());
        assert!(PolicySpec::gaussian(GaussianMean::Constant(vec![0.0]), vec![-1.0], 1).is_err());
        assert!(PolicySpec::gaussian(
            GaussianMean::Constant(vec![0.0, 0.0]),
            vec![1.0, 0.5, 0.0, 1.0],
            2
        )
        .is_err());
    }

    #[test]
    fn probabilities_within_tolerance_are_accepted() {
        let third = 1.0 / 3.0;
        let p = PolicySpec::finite_support(vec![
            (vec![0.0], third),
            (vec![1.0], third),
            (vec![2.0], third),
        ]);
        assert!(p.is_ok());
    }

    #[test]
    fn score_values() {
        let p = PolicySpec::gaussian_mean_parameter(1.0, 1.0).unwrap();
        let mut s = [0.0];
        p.score(&[2.0], 0.0, &[0.0], &mut s).unwrap();
        assert_eq!(s[0], 1.0);
        p.score(&[1.0], 0.0, &[0.0], &mut s).unwrap();
        assert_eq!(s[0], 0.0);
        let p = PolicySpec::gaussian_mean_parameter(1.0, 4.0).unwrap();
        p.score(&[3.0], 0.0, &[0.0], &mut s).unwrap();
        assert_eq!(s[0], 0.5);
    }

    #[test]
    fn missing_score_is_unsupported() {
        let p = PolicySpec::dirac(vec![0.0]).unwrap();
        let mut s = [0.0];
        assert!(matches!(
            p.score(&[0.0], 0.0, &[0.0], &mut s),
            Err(PolexError::Unsupported(_))
        ));
    }

    #[test]
    fn custom_closed_form_is_rejected() {
        let sampler: SamplerFn = Arc::new(|_t, _x, xi, out| out[0] = xi[0]);
        let res = PolicySpec::custom(
            1,
            NoiseLaw::StandardNormal(1),
            sampler.clone(),
            QuadratureSpec::ClosedForm,
            true,
        );
        assert!(res.is_err());
        let res = PolicySpec::custom(
            1,
            NoiseLaw::Uniform(1),
            sampler,
            QuadratureSpec::GaussHermite { order: 5 },
            true,
        );
        assert!(res.is_err());
    }

    #[test]
    fn empirical_gaussian_matches_law() {
        let mean: MeanFn = Arc::new(|t, x, out| {
            out[0] = 0.5 + x[0];
            out[1] = -t;
        });
        // Covariance L L^T = [[1, 0.5], [0.5, 1.25]].
        let p = PolicySpec::gaussian(GaussianMean::Custom(mean), vec![1.0, 0.0, 0.5, 1.0], 2)
            .unwrap();
        let mut rng = substream(11, StreamTag::Synthetic, 0, 0);
        let law = p.noise_law();
        let (t, x) = (0.25, [1.0]);
        let n = 100_000;
        let mut s0 = RunningStats::default();
        let mut s1 = RunningStats::default();
        let mut cross = RunningStats::default();
        let mut noise = [0.0; 2];
        let mut a = [0.0; 2];
        for _ in 0..n {
            law.sample(&mut rng, &mut noise);
            p.sample_action(t, &x, &noise, &mut a).unwrap();
            s0.push(a[0]);
            s1.push(a[1]);
            cross.push((a[0] - 1.5) * (a[1] + 0.25));
        }
        assert!((s0.mean() - 1.5).abs() < 4.0 * s0.std_error());
        assert!((s1.mean() + 0.25).abs() < 4.0 * s1.std_error());
        // Standard errors of the sample variances: sqrt(2 var^2 / n).
        let se_var = |v: f64| (2.0 * v * v / n as f64).sqrt();
        assert!((s0.variance() - 1.0).abs() < 4.0 * se_var(1.0));
        assert!((s1.variance() - 1.25).abs() < 4.0 * se_var(1.25));
        assert!((cross.mean() - 0.5).abs() < 4.0 * cross.std_error());
    }

    #[test]
    fn empirical_atom_frequencies() {
        let p = PolicySpec::finite_support(vec![
            (vec![-2.0], 0.2),
            (vec![0.0], 0.5),
            (vec![3.0], 0.3),
        ])
        .unwrap();
        let mut rng = substream(5, StreamTag::Synthetic, 1, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut u = [0.0];
        let mut a = [0.0];
        for _ in 0..n {
            p.noise_law().sample(&mut rng, &mut u);
            p.sample_action(0.0, &[0.0], &u, &mut a).unwrap();
            let k = match a[0] as i64 {
                -2 => 0,
                0 => 1,
                3 => 2,
                _ => unreachable!(),
            };
            counts[k] += 1;
        }
        for (k, prob) in [0.2, 0.5, 0.3].into_iter().enumerate() {
            let freq = counts[k] as f64 / n as f64;
            let se = (prob * (1.0 - prob) / n as f64).sqrt();
            assert!((freq - prob).abs() < 4.0 * se, "atom {k}: {freq}");
        }
    }

    #[test]
    fn expectation_reports_non_finite_integrand() {
        let p = PolicySpec::gauss_std();
        let err = p.expect(0.5, &[2.0], |_| f64::INFINITY).unwrap_err();
        match err {
            PolexError::Quadrature { t, x } => {
                assert_eq!(t, 0.5);
                assert_eq!(x, vec![2.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dirac_detection() {
        assert_eq!(PolicySpec::dirac(vec![0.0]).unwrap().dirac_atom(), Some(&[0.0][..]));
        assert!(PolicySpec::two_point().dirac_atom().is_none());
        assert!(PolicySpec::gauss_std().dirac_atom().is_none());
    }

    #[test]
    fn presets_resolve() {
        for name in ["gauss_std", "gauss_mean_field", "two_point", "dirac"] {
            assert!(PolicySpec::preset(name).is_ok(), "{name}");
        }
        assert!(PolicySpec::preset("nope").is_err());
    }
}
