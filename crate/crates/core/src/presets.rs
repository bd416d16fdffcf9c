//! Named benchmark problems used by the experiment runner.

use std::sync::Arc;

use crate::dynamics::DynamicsSpec;
use crate::error::{PolexError, Result};
use crate::estimators::{Setup, TestFn, TestFunctionSpec, ValueToolkit};
use crate::policy::PolicySpec;

/// Preset names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "fig1_drift",
    "fig2_vol",
    "counterexample",
    "lq_pg",
    "td_exact",
    "dirac",
    "mean_field",
];

/// A controlled system together with the probes its studies use.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub setup: Setup,
    pub test_function: TestFunctionSpec,
    /// Value function and state test function for the TD residual.
    pub td: Option<ValueToolkit>,
    /// Value function and score for the policy gradient.
    pub pg: Option<ValueToolkit>,
    /// Value function and test function for the quadratic variation.
    pub qv: Option<ValueToolkit>,
}

/// Builds the named preset on `[0, horizon]`, started at `x0` when given.
pub fn preset(name: &str, horizon: f64, x0: Option<Vec<f64>>) -> Result<Preset> {
    let quartic: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|x| x[0].powi(4));
    let identity: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|x| x[0]);
    let one = || TestFn::constant(1.0);
    let square_v = || ValueToolkit::scalar_quadratic(0.0, 0.0, 1.0, 0.0, horizon, one());
    let linear_v = || ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, 0.0, horizon, one());

    let (dynamics, policy, td, pg, qv) = match name {
        "fig1_drift" => (
            DynamicsSpec::drift_control().with_terminal_reward(quartic),
            PolicySpec::gauss_std(),
            Some(square_v()),
            None,
            Some(linear_v()),
        ),
        "fig2_vol" => (
            DynamicsSpec::volatility_control().with_terminal_reward(quartic),
            PolicySpec::gauss_std(),
            Some(square_v()),
            None,
            Some(linear_v()),
        ),
        "counterexample" => (
            DynamicsSpec::volatility_control().with_terminal_reward(quartic),
            PolicySpec::two_point(),
            None,
            None,
            Some(linear_v()),
        ),
        "lq_pg" => {
            let psi = 0.0;
            let policy = PolicySpec::gaussian_mean_parameter(psi, 1.0)?;
            // V(t, x) = x + psi (T - t) is the value of the policy.
            let v = ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, psi, horizon, one())
                .with_score(&policy, 0)?;
            (
                DynamicsSpec::drift_control().with_terminal_reward(identity),
                policy,
                None,
                Some(v),
                None,
            )
        }
        "td_exact" => {
            let v = ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, 0.0, horizon, one())
                .with_test(TestFn::State(Arc::new(|_, x| x[0])));
            (
                DynamicsSpec::drift_control().with_terminal_reward(identity),
                PolicySpec::gauss_std(),
                Some(v),
                None,
                Some(linear_v()),
            )
        }
        "dirac" => (
            DynamicsSpec::drift_control().with_terminal_reward(quartic),
            PolicySpec::dirac(vec![0.5])?,
            Some(square_v()),
            None,
            Some(linear_v()),
        ),
        "mean_field" => (
            DynamicsSpec::drift_control().with_terminal_reward(quartic),
            PolicySpec::gauss_mean_field(0.0, -1.0, 0.5)?,
            Some(square_v()),
            None,
            Some(linear_v()),
        ),
        other => {
            return Err(PolexError::config(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let dynamics = match x0 {
        Some(x0) => dynamics.with_x0(x0),
        None => dynamics,
    };
    Ok(Preset {
        name: name.to_string(),
        setup: Setup::new(dynamics, policy, horizon)?,
        test_function: TestFunctionSpec::Monomial { power: 4 },
        td,
        pg,
        qv,
    })
}
