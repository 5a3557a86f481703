use proptest::prelude::*;
use serverpop::estimators::{
    aggregate, batch_means, estimate_pow_limit, estimate_sd, ks_exponential, time_average, Functional, Rule,
    SteadyStateAccumulator,
};
use serverpop::limit::{run, simulate, LimitState, ModelParams, Regime, SimConfig};
use serverpop::stochastic::RngStream;

#[test]
fn streaming_and_recorded_estimates_agree() {
    let p = ModelParams::single_stage(-1.0, 1.0, 2.0, 1.0, 0.5);
    for regime in [Regime::Hw, Regime::Nds] {
        let cfg = SimConfig::new(regime, 1e-3, 200_000).with_stride(1).with_seed(4);
        let init = LimitState::single(0.0, 0.0);
        let traj = simulate(&p, &init, &cfg).unwrap();
        let mut acc = SteadyStateAccumulator::new(&cfg);
        run(&p, &init, &cfg, 0, &mut acc).unwrap();
        let s = acc.stats();
        assert!((s.pow - estimate_pow_limit(&traj, cfg.burn_in).unwrap()).abs() < 1e-9, "{regime:?}");
        assert!((s.sd() - estimate_sd(&traj, cfg.burn_in).unwrap()).abs() < 1e-9, "{regime:?}");
        let v = time_average(&traj, Functional::V, cfg.burn_in, Rule::LeftEndpoint).unwrap();
        assert!((s.mean_v - v).abs() < 1e-9, "{regime:?}");
    }
}

#[test]
fn pow_is_insensitive_to_the_burn_in_fraction() {
    let p = ModelParams::single_stage(-1.0, 1.0, 1.0, 1.0, 0.5);
    let cfg = SimConfig::new(Regime::Hw, 1e-3, 4_000_000).with_stride(10).with_seed(9);
    let traj = simulate(&p, &LimitState::single(0.0, 0.0), &cfg).unwrap();
    let a = estimate_pow_limit(&traj, 0.2).unwrap();
    let b = estimate_pow_limit(&traj, 0.4).unwrap();
    assert!((a - b).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn trapezoid_and_left_endpoint_agree_on_fine_grids() {
    let p = ModelParams::single_stage(-1.0, 1.0, 1.0, 0.0, 1.0);
    let cfg = SimConfig::new(Regime::Nds, 1e-4, 1_000_000).with_stride(1).with_seed(2);
    let traj = simulate(&p, &LimitState::single(0.0, 0.0), &cfg).unwrap();
    let l = time_average(&traj, Functional::X, 0.2, Rule::LeftEndpoint).unwrap();
    let t = time_average(&traj, Functional::X, 0.2, Rule::Trapezoid).unwrap();
    assert!((l - t).abs() < 1e-3);
}

#[test]
fn ks_accepts_the_right_law_and_rejects_the_wrong_one() {
    let mut s = RngStream::new(1, 1);
    let xs: Vec<f64> = (0..5_000).map(|_| 2.0 * s.exp1()).collect();
    assert!(ks_exponential(&xs, 2.0).unwrap().p_value > 0.01);
    assert!(ks_exponential(&xs, 2.4).unwrap().p_value < 1e-4);
}

#[test]
fn batch_means_recovers_iid_standard_error() {
    let mut s = RngStream::new(2, 2);
    let xs: Vec<f64> = (0..100_000).map(|_| s.standard_normal()).collect();
    let (m, se) = batch_means(&xs, 50).unwrap();
    let exact = 1.0 / (xs.len() as f64).sqrt();
    assert!(m.abs() < 4.0 * exact);
    assert!((se / exact - 1.0).abs() < 0.4, "{se} vs {exact}");
}

proptest! {
    #[test]
    fn aggregate_ignores_replication_order(
        values in prop::collection::vec(-10.0..10.0f64, 1..20),
        theo in -5.0..5.0f64,
        rot in 0usize..20,
    ) {
        let a = aggregate(&values, Some(theo)).unwrap();
        let mut shuffled = values.clone();
        let k = rot % values.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let b = aggregate(&shuffled, Some(theo)).unwrap();
        prop_assert_eq!(a.estimate, b.estimate);
        prop_assert_eq!(a.ci_halfwidth, b.ci_halfwidth);
        prop_assert_eq!(a.max_abs_dev, b.max_abs_dev);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a.estimate >= lo - 1e-12 && a.estimate <= hi + 1e-12);
        prop_assert!(a.ci_halfwidth >= 0.0);
        prop_assert!(a.max_abs_dev.unwrap() + 1e-12 >= (a.estimate - theo).abs());
    }

    #[test]
    fn limit_estimates_lie_in_range(
        b in -3.0..-0.3f64,
        sigma in 0.5..2.0f64,
        beta in 0.0..3.0f64,
        gamma in 0.2..3.0f64,
        nds in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let p = ModelParams::single_stage(b, 1.0, sigma, beta, gamma);
        let regime = if nds { Regime::Nds } else { Regime::Hw };
        let cfg = SimConfig::new(regime, 1e-3, 20_000).with_seed(seed);
        let mut acc = SteadyStateAccumulator::new(&cfg);
        run(&p, &LimitState::single(0.0, 0.0), &cfg, 0, &mut acc).unwrap();
        let s = acc.stats();
        prop_assert!((0.0..=1.0).contains(&s.pow));
        prop_assert!(s.mean_v >= 0.0 && s.mean_neg_y >= 0.0 && s.l_rate >= 0.0);
        if nds {
            prop_assert!(s.sd() >= 1.0);
        }
    }
}
