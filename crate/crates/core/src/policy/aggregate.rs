use std::fmt;
use std::sync::Arc;

use crate::dynamics::DynamicsSpec;
use crate::error::{check_dim, PolexError, Result};

use super::{add_outer_square, psd_sqrt, PolicyKind, PolicySpec, QuadratureSpec};

/// `(t, x, out)` coefficient callback.
pub type CoefficientFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Source {
    Policy {
        policy: PolicySpec,
        dynamics: DynamicsSpec,
        closed_form: bool,
    },
    Explicit {
        drift: CoefficientFn,
        diffusion: CoefficientFn,
    },
}

#[derive(Debug)]
struct Frozen {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Drift and diffusion of the aggregated dynamics.
///
/// The drift is the policy average of `b`; the diffusion is the principal
/// square root of the policy average of `sigma sigma^T`. When neither the
/// policy nor the coefficients depend on `(t, x)` both are evaluated once.
#[derive(Clone)]
pub struct AggregatedCoefficients {
    state_dim: usize,
    source: Source,
    frozen: Option<Arc<Frozen>>,
}

impl fmt::Debug for AggregatedCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AggregatedCoefficients")
            .field("state_dim", &self.state_dim)
            .field("constant", &self.frozen)
            .finish()
    }
}

/// Build the aggregated coefficients of `policy` acting on `dynamics`.
pub fn aggregate_coefficients(
    policy: &PolicySpec,
    dynamics: &DynamicsSpec,
) -> Result<AggregatedCoefficients> {
    check_dim(
        "policy action dimension",
        dynamics.action_dim,
        policy.action_dim(),
    )?;
    let gaussian = matches!(policy.kind(), PolicyKind::GaussianAffine { .. });
    let closed_form = match policy.quadrature() {
        Some(QuadratureSpec::ClosedForm) => {
            if gaussian && !dynamics.affine_in_action {
                return Err(PolexError::config(
                    "closed-form Gaussian aggregation needs coefficients affine in the action",
                ));
            }
            gaussian
        }
        None => gaussian && dynamics.affine_in_action,
        Some(_) => false,
    };
    let mut agg = AggregatedCoefficients {
        state_dim: dynamics.state_dim,
        source: Source::Policy {
            policy: policy.clone(),
            dynamics: dynamics.clone(),
            closed_form,
        },
        frozen: None,
    };
    if policy.is_state_independent() && dynamics.per_interval_exact {
        agg.freeze(0.0, &dynamics.x0.clone())?;
    }
    Ok(agg)
}

impl AggregatedCoefficients {
    /// Coefficients given directly as callbacks; `diffusion` writes the
    /// `d x d` matrix used in front of `dW`.
    pub fn from_functions(
        state_dim: usize,
        drift: CoefficientFn,
        diffusion: CoefficientFn,
    ) -> Self {
        AggregatedCoefficients {
            state_dim,
            source: Source::Explicit { drift, diffusion },
            frozen: None,
        }
    }

    /// Time- and state-independent coefficients.
    pub fn constant(drift: Vec<f64>, diffusion: Vec<f64>) -> Result<Self> {
        let d = drift.len();
        check_dim("constant diffusion", d * d, diffusion.len())?;
        let mut second_moment = vec![0.0; d * d];
        add_outer_square(&diffusion, d, 1.0, &mut second_moment);
        let (df, sf) = (drift.clone(), diffusion.clone());
        Ok(AggregatedCoefficients {
            state_dim: d,
            source: Source::Explicit {
                drift: Arc::new(move |_, _, out| out.copy_from_slice(&df)),
                diffusion: Arc::new(move |_, _, out| out.copy_from_slice(&sf)),
            },
            frozen: Some(Arc::new(Frozen {
                drift,
                diffusion,
                second_moment,
            })),
        })
    }

    fn freeze(&mut self, t: f64, x: &[f64]) -> Result<()> {
        let d = self.state_dim;
        let mut drift = vec![0.0; d];
        let mut second_moment = vec![0.0; d * d];
        self.eval_drift(t, x, &mut drift)?;
        self.eval_second_moment(t, x, &mut second_moment)?;
        let diffusion = psd_sqrt(&second_moment, d)?;
        self.frozen = Some(Arc::new(Frozen {
            drift,
            diffusion,
            second_moment,
        }));
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn is_constant(&self) -> bool {
        self.frozen.is_some()
    }

    /// `int b(t, x, a) pi(da | t, x)`.
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.frozen {
            out.copy_from_slice(&f.drift);
            return Ok(());
        }
        self.eval_drift(t, x, out)
    }

    /// `psd_sqrt(int sigma sigma^T(t, x, a) pi(da | t, x))`.
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.frozen {
            out.copy_from_slice(&f.diffusion);
            return Ok(());
        }
        match &self.source {
            Source::Explicit { diffusion, .. } => {
                diffusion(t, x, out);
                check_finite(t, x, out)
            }
            Source::Policy { .. } => {
                let d = self.state_dim;
                let mut m = vec![0.0; d * d];
                self.eval_second_moment(t, x, &mut m)?;
                let root = psd_sqrt(&m, d)?;
                out.copy_from_slice(&root);
                Ok(())
            }
        }
    }

    /// `int sigma sigma^T(t, x, a) pi(da | t, x)`.
    pub fn second_moment(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.frozen {
            out.copy_from_slice(&f.second_moment);
            return Ok(());
        }
        self.eval_second_moment(t, x, out)
    }

    fn eval_drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.state_dim;
        match &self.source {
            Source::Explicit { drift, .. } => drift(t, x, out),
            Source::Policy {
                policy,
                dynamics,
                closed_form,
            } => {
                if *closed_form {
                    let mut mean = vec![0.0; policy.action_dim()];
                    policy.gaussian_mean(t, x, &mut mean)?;
                    dynamics.drift(t, x, &mean, out);
                } else {
                    out.fill(0.0);
                    let mut b = vec![0.0; d];
                    policy.for_each_node(t, x, |a, w| {
                        dynamics.drift(t, x, a, &mut b);
                        for (o, v) in out.iter_mut().zip(&b) {
                            *o += w * v;
                        }
                        Ok(())
                    })?;
                }
            }
        }
        check_finite(t, x, out)
    }

    fn eval_second_moment(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.state_dim;
        out.fill(0.0);
        match &self.source {
            Source::Explicit { diffusion, .. } => {
                let mut s = vec![0.0; d * d];
                diffusion(t, x, &mut s);
                add_outer_square(&s, d, 1.0, out);
            }
            Source::Policy {
                policy,
                dynamics,
                closed_form,
            } => {
                let mut sigma = vec![0.0; d * d];
                if *closed_form {
                    // sigma affine in a and a ~ N(mu, L L^T):
                    // E[sigma sigma^T] = sigma(mu) sigma(mu)^T + sum_l D_l D_l^T,
                    // D_l = sigma(mu + L e_l) - sigma(mu).
                    let m = policy.action_dim();
                    let chol = match policy.kind() {
                        PolicyKind::GaussianAffine { chol_cov, .. } => chol_cov,
                        _ => unreachable!("closed form is only selected for Gaussian policies"),
                    };
                    let mut mean = vec![0.0; m];
                    policy.gaussian_mean(t, x, &mut mean)?;
                    dynamics.vol(t, x, &mean, &mut sigma);
                    add_outer_square(&sigma, d, 1.0, out);
                    let mut shifted = vec![0.0; m];
                    let mut column = vec![0.0; d * d];
                    for l in 0..m {
                        for (i, s) in shifted.iter_mut().enumerate() {
                            *s = mean[i] + chol[i * m + l];
                        }
                        dynamics.vol(t, x, &shifted, &mut column);
                        for (c, s) in column.iter_mut().zip(&sigma) {
                            *c -= s;
                        }
                        add_outer_square(&column, d, 1.0, out);
                    }
                } else {
                    policy.for_each_node(t, x, |a, w| {
                        dynamics.vol(t, x, a, &mut sigma);
                        add_outer_square(&sigma, d, w, out);
                        Ok(())
                    })?;
                }
            }
        }
        check_finite(t, x, out)
    }
}

fn check_finite(t: f64, x: &[f64], values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PolexError::Quadrature { t, x: x.to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{GaussianMean, MeanFn};

    fn scalar(agg: &AggregatedCoefficients, t: f64, x: f64) -> (f64, f64) {
        let mut b = [0.0];
        let mut s = [0.0];
        agg.drift(t, &[x], &mut b).unwrap();
        agg.diffusion(t, &[x], &mut s).unwrap();
        (b[0], s[0])
    }

    #[test]
    fn drift_control_aggregates_to_brownian_motion() {
        let agg = aggregate_coefficients(&PolicySpec::gauss_std(), &DynamicsSpec::drift_control())
            .unwrap();
        assert!(agg.is_constant());
        assert_eq!(scalar(&agg, 0.3, 2.0), (0.0, 1.0));
    }

    #[test]
    fn volatility_control_aggregates_to_brownian_motion() {
        let agg =
            aggregate_coefficients(&PolicySpec::gauss_std(), &DynamicsSpec::volatility_control())
                .unwrap();
        let (b, s) = scalar(&agg, 0.0, 0.0);
        assert_eq!(b, 0.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirac_policy_reproduces_the_frozen_coefficients() {
        let dynamics = DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_t, x, a, out| out[0] = x[0] + a[0]))
            .with_vol(Arc::new(|t, x, a, out| out[0] = 1.0 + t + x[0] * a[0]));
        let policy = PolicySpec::dirac(vec![0.0]).unwrap();
        let agg = aggregate_coefficients(&policy, &dynamics).unwrap();
        assert!(!agg.is_constant());
        let (b, s) = scalar(&agg, 0.5, 1.7);
        assert_eq!(b, 1.7);
        assert_eq!(s, 1.5);

        let policy = PolicySpec::dirac(vec![2.0]).unwrap();
        let agg = aggregate_coefficients(&policy, &dynamics).unwrap();
        let mut m = [0.0];
        agg.second_moment(0.5, &[1.0], &mut m).unwrap();
        assert_eq!(m[0], 3.5 * 3.5);
        assert_eq!(scalar(&agg, 0.5, 1.0).0, 3.0);
    }

    #[test]
    fn quadrature_methods_agree_with_closed_form() {
        // b = a, sigma = 1 + a, pi = N(mu(x), 0.7^2) with mu(x) = 0.3 - 0.5 x.
        let dynamics = DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_t, _x, a, out| out[0] = a[0]))
            .with_vol(Arc::new(|_t, _x, a, out| out[0] = 1.0 + a[0]))
            .with_affine_in_action(true);
        let mean: MeanFn = Arc::new(|_t, x, out| out[0] = 0.3 - 0.5 * x[0]);
        let base = PolicySpec::gaussian(GaussianMean::Custom(mean), vec![0.7], 1).unwrap();
        let x = [0.8];
        let mu: f64 = 0.3 - 0.4;
        let var = 0.49;
        let exact_m2 = (1.0 + mu).powi(2) + var;

        let closed = aggregate_coefficients(&base, &dynamics).unwrap();
        let mut b = [0.0];
        let mut m2 = [0.0];
        closed.drift(0.0, &x, &mut b).unwrap();
        closed.second_moment(0.0, &x, &mut m2).unwrap();
        assert!((b[0] - mu).abs() < 1e-15);
        assert!((m2[0] - exact_m2).abs() < 1e-14);

        let gh = base
            .clone()
            .with_quadrature(QuadratureSpec::GaussHermite { order: 20 })
            .unwrap();
        let gh = aggregate_coefficients(&gh, &dynamics).unwrap();
        gh.drift(0.0, &x, &mut b).unwrap();
        gh.second_moment(0.0, &x, &mut m2).unwrap();
        assert!((b[0] - mu).abs() < 1e-12);
        assert!((m2[0] - exact_m2).abs() < 1e-12);

        let samples = 10_000;
        let mc = base
            .with_quadrature(QuadratureSpec::MonteCarlo { samples, seed: 3 })
            .unwrap();
        let mc = aggregate_coefficients(&mc, &dynamics).unwrap();
        mc.drift(0.0, &x, &mut b).unwrap();
        mc.second_moment(0.0, &x, &mut m2).unwrap();
        // Var(a) = 0.49; Var((1 + a)^2) = 4 (1 + mu)^2 var + 2 var^2.
        let se_drift = (var / samples as f64).sqrt();
        let se_m2 = ((4.0 * (1.0 + mu).powi(2) * var + 2.0 * var * var) / samples as f64).sqrt();
        assert!((b[0] - mu).abs() < 3.0 * se_drift);
        assert!((m2[0] - exact_m2).abs() < 3.0 * se_m2);
    }

    #[test]
    fn explicit_closed_form_requires_affine_coefficients() {
        let policy = PolicySpec::gauss_std()
            .with_quadrature(QuadratureSpec::ClosedForm)
            .unwrap();
        let dynamics = DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_t, _x, a, out| out[0] = a[0] * a[0]));
        assert!(aggregate_coefficients(&policy, &dynamics).is_err());
        // The default falls back to Gauss-Hermite: E[a^2] = 1.
        let agg = aggregate_coefficients(&PolicySpec::gauss_std(), &dynamics).unwrap();
        let mut b = [0.0];
        agg.drift(0.0, &[0.0], &mut b).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_carries_the_evaluation_point() {
        let dynamics = DynamicsSpec::new(1, 1, vec![0.0])
            .with_drift(Arc::new(|_t, x, a, out| out[0] = a[0] / x[0]));
        let agg = aggregate_coefficients(&PolicySpec::two_point(), &dynamics).unwrap();
        let mut b = [0.0];
        match agg.drift(0.25, &[0.0], &mut b) {
            Err(PolexError::Quadrature { t, x }) => {
                assert_eq!(t, 0.25);
                assert_eq!(x, vec![0.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_dimensional_diffusion_is_the_principal_root() {
        // sigma(a) = diag(1, 1) + a * [[0, 1], [1, 0]], a = +-1:
        // E[sigma sigma^T] = [[2, 0], [0, 2]] with the cross terms cancelling.
        let dynamics = DynamicsSpec::new(2, 1, vec![0.0, 0.0]).with_vol(Arc::new(
            |_t, _x, a, out| out.copy_from_slice(&[1.0, a[0], a[0], 1.0]),
        ));
        let agg = aggregate_coefficients(&PolicySpec::two_point(), &dynamics).unwrap();
        let mut s = [0.0; 4];
        agg.diffusion(0.0, &[0.0, 0.0], &mut s).unwrap();
        let r2 = 2f64.sqrt();
        for (v, e) in s.iter().zip([r2, 0.0, 0.0, r2]) {
            assert!((v - e).abs() < 1e-12);
        }
    }
}
