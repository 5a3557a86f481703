use proptest::prelude::*;
use serverpop::estimators::{aggregate, ks_exponential, SteadyStateAccumulator};
use serverpop::experiment::{replicate, Quantity};
use serverpop::limit::{
    run, simulate, simulate_near_hw, simulate_nds, simulate_reference_rbm, JumpScheme, LimitState, ModelParams,
    Regime, SimConfig, Trajectory,
};
use serverpop::skorokhod::{skorokhod_map, SampledPath};

fn assert_causal(traj: &Trajectory) {
    for j in traj.jumps.iter().filter(|j| j.delta > 0) {
        assert!(j.x == 0.0 && j.dl > 0.0, "upward jump at step {} with x = {}, dl = {}", j.step, j.x, j.dl);
    }
}

#[test]
fn reflected_path_is_the_skorokhod_image_of_its_free_part() {
    // x = Gamma_1(x - L) and L = Gamma_2(x - L) on the grid
    for (regime, beta) in [(Regime::Nds, 0.0), (Regime::NearHw, 1.5), (Regime::Nds, 2.0)] {
        let p = ModelParams::single_stage(-1.0, 2.0, 1.5, beta, 0.5);
        let cfg = SimConfig::new(regime, 1e-3, 50_000).with_seed(3);
        let traj = simulate(&p, &LimitState::single(0.5, 0.0), &cfg).unwrap();
        let free: Vec<f64> = traj.x.iter().zip(&traj.l).map(|(x, l)| x - l).collect();
        let out = skorokhod_map(&SampledPath::new(traj.times.clone(), free).unwrap());
        let scale = 1.0 + traj.l.last().unwrap();
        for k in 0..traj.len() {
            assert!((out.z.values()[k] - traj.x[k]).abs() < 1e-9 * scale, "{regime:?} step {k}");
            assert!((out.y.values()[k] - traj.l[k]).abs() < 1e-9 * scale, "{regime:?} step {k}");
        }
    }
}

#[test]
fn near_hw_without_vacations_is_reflected_brownian_motion() {
    let p = ModelParams::single_stage(-2.0, 1.0, 2.0, 0.0, 1.0);
    let cfg = SimConfig::new(Regime::NearHw, 1e-3, 20_000).with_seed(8);
    let a = simulate_near_hw(&p, &LimitState::single(0.0, 0.0), &cfg).unwrap();
    let b = simulate_reference_rbm(&p, &LimitState::single(0.0, 0.0), &cfg).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.l, b.l);
}

#[test]
fn multi_stage_mass_changes_only_through_entries_and_returns() {
    let p = ModelParams::multi_stage(
        -1.0,
        1.0,
        1.2,
        vec![0.6, 0.4, 0.0],
        vec![0.2, 0.5, 1.0],
        vec![vec![-0.7, 0.5, 0.2], vec![0.0, -0.3, 0.3], vec![0.1, 0.0, -0.1]],
    )
    .unwrap();
    let cfg = SimConfig::new(Regime::NearHw, 1e-3, 30_000).with_stride(1);
    let t = simulate(&p, &LimitState::multi(0.2, vec![1.0, 0.5, 0.25]), &cfg).unwrap();
    assert_eq!(t.clamp_events, 0);
    for k in 1..t.len() {
        let total = |k: usize| t.u.iter().map(|u| u[k]).sum::<f64>();
        let returns: f64 = (0..3).map(|i| p.gamma[i] * t.u[i][k - 1]).sum::<f64>() * cfg.delta;
        let entries = p.beta.iter().sum::<f64>() / p.mu * t.dl[k];
        let expect = total(k - 1) - returns + entries;
        assert!((total(k) - expect).abs() < 1e-12, "step {k}");
        if t.dl[k] == 0.0 {
            assert!(total(k) <= total(k - 1) + 1e-15);
        }
    }
}

#[test]
fn multi_stage_nds_stays_integer_and_causal() {
    let p = ModelParams::multi_stage(
        -2.0,
        1.0,
        2.0,
        vec![1.0, 0.5],
        vec![0.5, 2.0],
        vec![vec![-1.0, 1.0], vec![0.5, -0.5]],
    )
    .unwrap();
    for scheme in [JumpScheme::Threshold, JumpScheme::Bernoulli] {
        let cfg = SimConfig::new(Regime::Nds, 1e-3, 100_000).with_scheme(scheme).with_stride(1);
        let t = simulate_nds(&p, &LimitState::multi(0.0, vec![1.0, 0.0]), &cfg).unwrap();
        assert!(t.u.iter().flatten().all(|&u| u >= 0.0 && u.fract() == 0.0));
        assert!(t.jumps.iter().any(|j| j.to_stage.is_some()));
        assert!(t.jumps.iter().any(|j| j.delta > 0));
        assert_causal(&t);
    }
}

#[test]
fn schemes_agree_on_the_mean_vacation_level() {
    let p = ModelParams::single_stage(-3.0, 2.0, 1.0, 2.0, 0.5);
    let mean_v = |scheme| {
        let cfg = SimConfig::new(Regime::Nds, 1e-3, 2_000_000).with_scheme(scheme).with_seed(21);
        let mut acc = SteadyStateAccumulator::new(&cfg);
        run(&p, &LimitState::single(0.0, 0.0), &cfg, 0, &mut acc).unwrap();
        acc.stats().mean_v
    };
    let (a, b) = (mean_v(JumpScheme::Threshold), mean_v(JumpScheme::Bernoulli));
    // closed-form balance value 3 / (2 (1 + 0.25)) = 1.2
    assert!((a - 1.2).abs() < 0.1, "threshold {a}");
    assert!((b - 1.2).abs() < 0.1, "bernoulli {b}");
}

#[test]
fn reference_rbm_marginal_is_exponential() {
    // b = -1, sigma = 1: Exp(mean 0.5); coarse check at a moderate step
    let p = ModelParams::single_stage(-1.0, 1.0, 1.0, 0.0, 1.0);
    let cfg = SimConfig::new(Regime::Nds, 1e-4, 20_000_000).reference();
    let mut acc = SteadyStateAccumulator::new(&cfg).with_samples(40_000);
    run(&p, &LimitState::single(0.5, 0.0), &cfg, 0, &mut acc).unwrap();
    let ks = ks_exponential(acc.samples(), 0.5).unwrap();
    assert!(acc.samples().len() >= 399);
    assert!(ks.p_value > 0.001, "{ks:?}");
}

#[test]
fn halving_the_step_moves_estimates_less_than_the_noise() {
    let cases = [
        (ModelParams::single_stage(-2.0, 1.0, 3.0, 2.0, 0.1), Regime::Hw, 1e-3, 2_000_000, Quantity::Pow),
        (ModelParams::single_stage(-6.0, 2.0, 3.0, 5.0, 3.0), Regime::Nds, 1e-4, 2_000_000, Quantity::Sd),
    ];
    for (model, regime, delta, steps, q) in cases {
        let est = |d: f64, n: u64| {
            let sim = SimConfig::new(regime, d, n).reference().with_replications(8).with_seed(17);
            aggregate(&replicate(&model, &sim, q).unwrap(), None).unwrap()
        };
        let (a, b) = (est(delta, steps), est(delta / 2.0, steps * 2));
        let noise = a.ci_halfwidth.hypot(b.ci_halfwidth);
        assert!((a.estimate - b.estimate).abs() < noise, "{regime:?}: {} vs {} (ci {noise})", a.estimate, b.estimate);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nds_upward_jumps_only_at_the_boundary(
        b in -4.0..-0.5f64,
        mu in 0.5..3.0f64,
        sigma in 0.5..3.0f64,
        beta in 0.1..5.0f64,
        gamma in 0.1..5.0f64,
        v0 in 0u8..4,
        bernoulli in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let p = ModelParams::single_stage(b, mu, sigma, beta, gamma);
        let scheme = if bernoulli { JumpScheme::Bernoulli } else { JumpScheme::Threshold };
        let cfg = SimConfig::new(Regime::Nds, 1e-3, 20_000).with_seed(seed).with_scheme(scheme);
        let t = simulate_nds(&p, &LimitState::single(0.0, f64::from(v0)), &cfg).unwrap();
        for j in t.jumps.iter().filter(|j| j.delta > 0) {
            prop_assert!(j.x == 0.0 && j.dl > 0.0);
        }
        prop_assert!(t.u[0].iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
        prop_assert!(t.x.iter().all(|&x| x >= 0.0));
        prop_assert!(t.l.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn hw_vacation_mass_stays_nonnegative(
        b in -4.0..-0.5f64,
        sigma in 0.0..3.0f64,
        beta in 0.0..4.0f64,
        gamma in 0.05..3.0f64,
        seed in any::<u64>(),
    ) {
        let p = ModelParams::single_stage(b, 1.0, sigma, beta, gamma);
        let cfg = SimConfig::new(Regime::Hw, 1e-3, 10_000).with_seed(seed);
        let t = simulate(&p, &LimitState::single(0.0, 0.0), &cfg).unwrap();
        prop_assert!(t.u[0].iter().all(|&v| v >= 0.0));
        prop_assert!(t.l.iter().all(|&l| l == 0.0));
    }
}
