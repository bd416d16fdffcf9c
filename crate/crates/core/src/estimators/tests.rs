use super::*;

fn fig1() -> Setup {
    Setup::new(DynamicsSpec::drift_control(), PolicySpec::gauss_std(), 1.0).unwrap()
}

fn fig2() -> Setup {
    Setup::new(DynamicsSpec::volatility_control(), PolicySpec::gauss_std(), 1.0).unwrap()
}

fn with_dynamics(dynamics: DynamicsSpec) -> Setup {
    Setup::new(dynamics, PolicySpec::gauss_std(), 1.0).unwrap()
}

fn assert_within(est: &EstimateResult, target: f64, k: f64) {
    assert!(
        (est.mean - target).abs() <= k * est.std_error,
        "mean {} vs {target} (se {})",
        est.mean,
        est.std_error
    );
}

fn x4() -> TestFunctionSpec {
    TestFunctionSpec::Monomial { power: 4 }
}

#[test]
fn parse_test_functions() {
    assert_eq!(TestFunctionSpec::parse("x^4").unwrap().label(), "x^4");
    assert_eq!(TestFunctionSpec::parse("x").unwrap().eval(&[3.0]), 3.0);
    assert_eq!(TestFunctionSpec::parse("tanh").unwrap().eval(&[0.5]), 0.5f64.tanh());
    assert!(TestFunctionSpec::parse("sin").is_err());
    assert!(weak_error(&fig1(), &TestFunctionSpec::Monomial { power: 9 }, 2, 10, 0).is_err());
}

#[test]
fn weak_error_matches_gaussian_moments() {
    for n in [2usize, 8] {
        let nf = n as f64;
        let est = weak_error(&fig1(), &x4(), n, 20_000, 11).unwrap();
        assert_within(&est, 6.0 / nf + 3.0 / (nf * nf), 4.0);
        let est = weak_error(&fig2(), &x4(), n, 20_000, 12).unwrap();
        assert_within(&est, 6.0 / nf, 4.0);
    }
}

#[test]
fn strong_error_levels() {
    let est = strong_error(&fig1(), 4, 20_000, 3, StrongNorm::Terminal, 2).unwrap();
    assert_within(&est, 0.5, 4.0);
    for n in [2, 16] {
        let est = strong_error(&fig2(), n, 20_000, 3, StrongNorm::Terminal, 2).unwrap();
        assert_within(&est, 2f64.sqrt(), 4.0);
    }
    // The supremum over lattice points dominates the terminal difference.
    let sup = strong_error(&fig1(), 4, 2_000, 3, StrongNorm::SupLattice, 2).unwrap();
    let end = strong_error(&fig1(), 4, 2_000, 3, StrongNorm::Terminal, 2).unwrap();
    assert!(sup.mean >= end.mean);
    assert!(strong_error(&fig1(), 4, 100, 3, StrongNorm::Terminal, 3).is_err());
}

#[test]
fn dirac_policy_has_no_error() {
    let setup = Setup::new(
        DynamicsSpec::drift_control(),
        PolicySpec::dirac(vec![0.3]).unwrap(),
        1.0,
    )
    .unwrap();
    let est = weak_error(&setup, &x4(), 4, 500, 1).unwrap();
    assert_eq!(est.mean, 0.0);
    let est = strong_error(&setup, 4, 500, 1, StrongNorm::SupLattice, 4).unwrap();
    assert_eq!(est.mean, 0.0);
    let q = conditional_weak_error_quantile(&setup, &TestFunctionSpec::tanh(), 4, 50, 40, 0.05, 2)
        .unwrap();
    assert_eq!(q, 0.0);
}

#[test]
fn sweep_points_match_single_grid_estimators() {
    let setup = fig1();
    let sweep = convergence_sweep(&setup, &x4(), &[4], 1000, 5, StrongNorm::Terminal, 2).unwrap();
    let weak = weak_error(&setup, &x4(), 4, 1000, 5).unwrap();
    let strong = strong_error(&setup, 4, 1000, 5, StrongNorm::Terminal, 2).unwrap();
    assert_eq!(sweep[0].weak, weak);
    assert_eq!(sweep[0].strong, strong);
    let sweep = convergence_sweep(&setup, &x4(), &[2, 4, 8], 1000, 5, StrongNorm::Terminal, 2).unwrap();
    assert_eq!(sweep.iter().map(|p| p.n).collect::<Vec<_>>(), vec![2, 4, 8]);
    assert!(sweep.iter().all(|p| p.weak.num_paths == 1000));
}

#[test]
fn conditional_weak_error_of_the_identity() {
    // E^W X^G_T - E X~_T equals the mean of the frozen actions times T.
    let setup = fig1();
    let n = 16;
    let k_outer = 400;
    let errors =
        conditional_weak_errors(&setup, &TestFunctionSpec::Monomial { power: 1 }, n, 3, k_outer, 21)
            .unwrap();
    for (j, e) in errors.iter().enumerate() {
        let noise = frozen_noise(&setup, 21, j as u64, n).unwrap();
        let oracle = noise.draws().iter().sum::<f64>().abs() / n as f64;
        assert!((e - oracle).abs() < 1e-12);
    }
    let q = conditional_weak_error_quantile(
        &setup,
        &TestFunctionSpec::Monomial { power: 1 },
        n,
        3,
        k_outer,
        0.05,
        21,
    )
    .unwrap();
    let exact = 1.959_963_985 / (n as f64).sqrt();
    assert!((q - exact).abs() < 0.15 * exact, "{q} vs {exact}");
    assert!(matches!(
        conditional_weak_error_quantile(&setup, &x4(), n, 3, 10, 0.05, 1),
        Err(PolexError::Resolution(_))
    ));
}

#[test]
fn shared_and_naive_estimators() {
    let setup = fig1();
    let f = TestFunctionSpec::tanh();
    let shared = shared_noise_estimate(&setup, &f, 20, 400, 3).unwrap();
    let naive = naive_estimate(&setup, &f, 20, 400, 3).unwrap();
    assert_eq!(shared.complexity.noise_draws, 420);
    assert_eq!(naive.complexity.noise_draws, 400 * 21);
    let diff = shared.estimate.mean - naive.estimate.mean;
    let se = shared.estimate.std_error.hypot(naive.estimate.std_error);
    assert!(diff.abs() < 4.0 * se + 0.1, "{diff}");
}

#[test]
fn values_with_trivial_rewards() {
    let unit = with_dynamics(
        DynamicsSpec::drift_control().with_running_reward(Arc::new(|_, _, _| 1.0)),
    );
    assert!((value_sampled(&unit, 7, 10, 0).unwrap().mean - 1.0).abs() < 1e-12);
    assert!((value_aggregated(&unit, 7, 10, 0).unwrap().mean - 1.0).abs() < 1e-12);
    let cond = conditional_value(&unit, 5, 10, 99, 0).unwrap();
    assert!((cond.mean - 1.0).abs() < 1e-12);

    let squared = with_dynamics(
        DynamicsSpec::new(1, 1, vec![0.0])
            .with_vol(Arc::new(|_, _, _, out| out[0] = 1.0))
            .with_running_reward(Arc::new(|_, _, a| a[0] * a[0])),
    );
    assert_within(&value_sampled(&squared, 8, 4000, 1).unwrap(), 1.0, 4.0);
    assert!((value_aggregated(&squared, 8, 10, 1).unwrap().mean - 1.0).abs() < 1e-9);
}

#[test]
fn terminal_rewards() {
    let linear = with_dynamics(
        DynamicsSpec::drift_control().with_terminal_reward(Arc::new(|x| x[0])),
    );
    assert_within(&value_sampled(&linear, 4, 10_000, 2).unwrap(), 0.0, 4.0);
    // The conditional value is the frozen-action drift exactly in mean.
    let n = 8;
    let cond = conditional_value(&linear, n, 20_000, 5, 2).unwrap();
    let law = linear.policy.noise_law();
    let mut source = KeyedNoise::shared(law.clone(), 5, n);
    let noise = FixedNoise::collect(&mut source, 1, n).unwrap();
    let drift = noise.draws().iter().sum::<f64>() / n as f64;
    assert_within(&cond, drift, 4.0);

    let quartic = with_dynamics(
        DynamicsSpec::drift_control().with_terminal_reward(Arc::new(|x| x[0].powi(4))),
    );
    assert_within(&value_aggregated(&quartic, 4, 20_000, 3).unwrap(), 3.0, 4.0);
    assert_within(&value_gap(&quartic, 4, 20_000, 3).unwrap(), 1.5 + 3.0 / 16.0, 4.0);
}

#[test]
fn td_residual_oracles() {
    let setup = fig1();
    let constant = ValueToolkit::constant(1, 2.5, TestFn::constant(1.0));
    assert_eq!(td_residual(&setup, &constant, 4, 100, 0).unwrap().mean, 0.0);

    let squared = ValueToolkit::scalar_quadratic(0.0, 0.0, 1.0, 0.0, 1.0, TestFn::constant(1.0));
    for n in [2usize, 8] {
        let est = td_residual(&setup, &squared, n, 20_000, 4).unwrap();
        assert_within(&est, 1.0 + 1.0 / n as f64, 4.0);
    }
    let limit = orthogonality_limit(&setup, &squared, 8, 200, 4).unwrap();
    assert!((limit.mean - 1.0).abs() < 1e-9, "{}", limit.mean);

    let linear = ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, 0.0, 1.0, TestFn::State(Arc::new(|_, x| x[0])));
    let setup = with_dynamics(DynamicsSpec::drift_control().with_terminal_reward(Arc::new(|x| x[0])));
    assert_within(&td_residual(&setup, &linear, 8, 20_000, 5).unwrap(), 0.0, 4.0);

    let scored = linear
        .with_score(&PolicySpec::gaussian_mean_parameter(0.0, 1.0).unwrap(), 0)
        .unwrap();
    assert!(td_residual(&setup, &scored, 4, 10, 0).is_err());
}

#[test]
fn policy_gradient_on_linear_quadratic_probe() {
    let policy = PolicySpec::gaussian_mean_parameter(0.0, 1.0).unwrap();
    let dynamics = DynamicsSpec::drift_control().with_terminal_reward(Arc::new(|x| x[0]));
    let setup = Setup::new(dynamics, policy.clone(), 1.0).unwrap();
    let toolkit = ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, 0.0, 1.0, TestFn::constant(0.0))
        .with_score(&policy, 0)
        .unwrap();
    let est = policy_gradient_estimate(&setup, &toolkit, 8, 20_000, 6).unwrap();
    assert_within(&est, 1.0, 4.0);
    let limit = orthogonality_limit(&setup, &toolkit, 8, 100, 6).unwrap();
    assert!((limit.mean - 1.0).abs() < 1e-9, "{}", limit.mean);

    let zero = toolkit.with_test(TestFn::constant(0.0));
    assert_eq!(policy_gradient_estimate(&setup, &zero, 8, 100, 6).unwrap().mean, 0.0);
}

#[test]
fn quadratic_variation_oracles() {
    let v = ValueToolkit::scalar_quadratic(0.0, 1.0, 0.0, 0.0, 1.0, TestFn::constant(1.0));
    for n in [2usize, 8] {
        let est = quadratic_variation_estimate(&fig1(), &v, n, 20_000, 7).unwrap();
        assert_within(&est, 1.0 + 1.0 / n as f64, 4.0);
        let est = quadratic_variation_estimate(&fig2(), &v, n, 20_000, 7).unwrap();
        assert_within(&est, 1.0, 4.0);
    }
    for setup in [fig1(), fig2()] {
        let limit = quadratic_variation_limit(&setup, &v, 4, 50, 7).unwrap();
        assert!((limit.mean - 1.0).abs() < 1e-9);
    }
    let constant = ValueToolkit::constant(1, 1.0, TestFn::constant(1.0));
    assert_eq!(quadratic_variation_estimate(&fig2(), &constant, 4, 100, 0).unwrap().mean, 0.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                convergence_sweep(&fig1(), &x4(), &[2, 4, 8], 3000, 17, StrongNorm::Terminal, 2)
                    .unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.weak.mean.to_bits(), q.weak.mean.to_bits());
        assert_eq!(p.weak.std_error.to_bits(), q.weak.std_error.to_bits());
        assert_eq!(p.strong.mean.to_bits(), q.strong.mean.to_bits());
    }
}

#[test]
fn euler_setups_refine_the_lattice() {
    let mean_field = Setup::new(
        DynamicsSpec::drift_control(),
        PolicySpec::gauss_mean_field(0.0, -1.0, 0.5).unwrap(),
        1.0,
    )
    .unwrap();
    assert_eq!(mean_field.lattice_factor, DEFAULT_LATTICE_FACTOR);
    assert_eq!(fig1().lattice_factor, 1);
    assert_eq!(mean_field.lattice_cells(&[2, 4, 8]).unwrap(), 128);
    assert!(fig1().lattice_cells(&[1 << 21]).is_err());
}

#[test]
fn moment_and_reference_helpers() {
    // E X_T^4 = 3 (1 + 1/n)^2 dominates the earlier grid points.
    let est = grid_moment_sup(&fig1(), 4, 20_000, 8, 4).unwrap();
    assert_within(&est, 3.0 * 1.25f64.powi(2), 4.0);
    let est = aggregated_terminal_mean(&fig1(), &x4(), 4, 20_000, 8).unwrap();
    assert_within(&est, 3.0, 4.0);
}
