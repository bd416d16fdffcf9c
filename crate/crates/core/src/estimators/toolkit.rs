use std::fmt;
use std::sync::Arc;

use crate::dynamics::DynamicsSpec;
use crate::error::{check_dim, PolexError, Result};
use crate::policy::PolicySpec;

/// `V(t, x)` or `dV/dt (t, x)`.
pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Writes `grad_x V` (`d` entries) or `Hess_x V` (`d x d`, row-major).
pub type ArrayFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Test function multiplying the increments in the discrete sums.
#[derive(Clone)]
pub enum TestFn {
    /// `S(t, x)`.
    State(ScalarFn),
    /// `S(t, x, a)`, e.g. a policy score.
    StateAction(Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>),
}

impl TestFn {
    pub fn constant(c: f64) -> Self {
        TestFn::State(Arc::new(move |_, _| c))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], a: &[f64]) -> f64 {
        match self {
            TestFn::State(f) => f(t, x),
            TestFn::StateAction(f) => f(t, x, a),
        }
    }

    pub fn depends_on_action(&self) -> bool {
        matches!(self, TestFn::StateAction(_))
    }
}

/// Candidate value function with its derivatives and a test function.
#[derive(Clone)]
pub struct ValueToolkit {
    pub state_dim: usize,
    value: ScalarFn,
    time_derivative: ScalarFn,
    gradient: ArrayFn,
    hessian: ArrayFn,
    pub test: TestFn,
}

impl fmt::Debug for ValueToolkit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueToolkit")
            .field("state_dim", &self.state_dim)
            .field("action_dependent_test", &self.test.depends_on_action())
            .finish()
    }
}

impl ValueToolkit {
    pub fn new(
        state_dim: usize,
        value: ScalarFn,
        time_derivative: ScalarFn,
        gradient: ArrayFn,
        hessian: ArrayFn,
        test: TestFn,
    ) -> Self {
        ValueToolkit {
            state_dim,
            value,
            time_derivative,
            gradient,
            hessian,
            test,
        }
    }

    /// `V = c`.
    pub fn constant(state_dim: usize, c: f64, test: TestFn) -> Self {
        Self::new(
            state_dim,
            Arc::new(move |_, _| c),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, _, out| out.fill(0.0)),
            Arc::new(|_, _, out| out.fill(0.0)),
            test,
        )
    }

    /// Scalar `V(t, x) = c0 + c1 x + c2 x^2 + k (T - t)`.
    pub fn scalar_quadratic(c0: f64, c1: f64, c2: f64, k: f64, horizon: f64, test: TestFn) -> Self {
        Self::new(
            1,
            Arc::new(move |t, x| c0 + c1 * x[0] + c2 * x[0] * x[0] + k * (horizon - t)),
            Arc::new(move |_, _| -k),
            Arc::new(move |_, x, out| out[0] = c1 + 2.0 * c2 * x[0]),
            Arc::new(move |_, _, out| out[0] = 2.0 * c2),
            test,
        )
    }

    /// Test function `S(t, x, a) = score_j(a | t, x)` of `policy`.
    pub fn with_score(mut self, policy: &PolicySpec, component: usize) -> Result<Self> {
        let dim = policy.score_dim().ok_or_else(|| {
            PolexError::Unsupported("policy has no score function".into())
        })?;
        if component >= dim {
            return Err(PolexError::config(format!(
                "score component {component} out of range for dimension {dim}"
            )));
        }
        let policy = policy.clone();
        self.test = TestFn::StateAction(Arc::new(move |t, x, a| {
            let mut out = vec![0.0; dim];
            match policy.score(a, t, x, &mut out) {
                Ok(()) => out[component],
                Err(_) => f64::NAN,
            }
        }));
        Ok(self)
    }

    pub fn with_test(mut self, test: TestFn) -> Self {
        self.test = test;
        self
    }

    #[inline]
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    /// `g = dV/dt + b^T grad V + tr(sigma sigma^T Hess V) / 2 + r`, from the
    /// analytic derivatives.
    pub fn generator(&self, dynamics: &DynamicsSpec, t: f64, x: &[f64], a: &[f64]) -> f64 {
        let d = self.state_dim;
        let mut b = vec![0.0; d];
        let mut sigma = vec![0.0; d * d];
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        dynamics.drift(t, x, a, &mut b);
        dynamics.vol(t, x, a, &mut sigma);
        (self.gradient)(t, x, &mut grad);
        (self.hessian)(t, x, &mut hess);
        let drift_term: f64 = b.iter().zip(&grad).map(|(u, v)| u * v).sum();
        // tr(sigma sigma^T H) = sum_{i,j,k} sigma_ik sigma_jk H_ji
        let mut trace = 0.0;
        for i in 0..d {
            for j in 0..d {
                let cov: f64 = (0..d).map(|k| sigma[i * d + k] * sigma[j * d + k]).sum();
                trace += cov * hess[j * d + i];
            }
        }
        (self.time_derivative)(t, x) + drift_term + 0.5 * trace + dynamics.running_reward(t, x, a)
    }

    /// `|sigma^T grad V|^2`.
    pub fn quadratic_generator(&self, dynamics: &DynamicsSpec, t: f64, x: &[f64], a: &[f64]) -> f64 {
        let d = self.state_dim;
        let mut sigma = vec![0.0; d * d];
        let mut grad = vec![0.0; d];
        dynamics.vol(t, x, a, &mut sigma);
        (self.gradient)(t, x, &mut grad);
        (0..d)
            .map(|k| {
                let v: f64 = (0..d).map(|i| sigma[i * d + k] * grad[i]).sum();
                v * v
            })
            .sum()
    }

    /// Compare the derivative callbacks with central finite differences of
    /// `V` at the probe points.
    pub fn check_derivatives(&self, probes: &[(f64, Vec<f64>)]) -> Result<()> {
        const STEP: f64 = 1e-5;
        const TOLERANCE: f64 = 1e-4;
        let d = self.state_dim;
        let close = |analytic: f64, numeric: f64| {
            (analytic - numeric).abs() <= TOLERANCE * analytic.abs().max(numeric.abs()).max(1.0)
        };
        let mismatch = |what: &str, t: f64, x: &[f64], a: f64, n: f64| {
            PolexError::Domain(format!(
                "{what} at t={t}, x={x:?}: analytic {a}, finite difference {n}"
            ))
        };
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for (t, x) in probes {
            check_dim("probe state", d, x.len())?;
            let (t, x) = (*t, x.as_slice());
            let dt = ((self.value)(t + STEP, x) - (self.value)(t - STEP, x)) / (2.0 * STEP);
            let analytic = (self.time_derivative)(t, x);
            if !close(analytic, dt) {
                return Err(mismatch("time derivative", t, x, analytic, dt));
            }
            (self.gradient)(t, x, &mut grad);
            (self.hessian)(t, x, &mut hess);
            let mut shifted = x.to_vec();
            let mut g_plus = vec![0.0; d];
            let mut g_minus = vec![0.0; d];
            for i in 0..d {
                shifted[i] = x[i] + STEP;
                let up = (self.value)(t, &shifted);
                (self.gradient)(t, &shifted, &mut g_plus);
                shifted[i] = x[i] - STEP;
                let down = (self.value)(t, &shifted);
                (self.gradient)(t, &shifted, &mut g_minus);
                shifted[i] = x[i];
                let numeric = (up - down) / (2.0 * STEP);
                if !close(grad[i], numeric) {
                    return Err(mismatch("gradient", t, x, grad[i], numeric));
                }
                for j in 0..d {
                    let numeric = (g_plus[j] - g_minus[j]) / (2.0 * STEP);
                    if !close(hess[j * d + i], numeric) {
                        return Err(mismatch("hessian", t, x, hess[j * d + i], numeric));
                    }
                }
            }
        }
        Ok(())
    }
}
