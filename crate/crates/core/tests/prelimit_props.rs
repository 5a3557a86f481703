use proptest::prelude::*;
use serverpop::prelimit::{
    run_prelimit, run_prelimit_replications, EventKind, PrelimitConfig, PrelimitParams, SystemState,
};
use serverpop::stochastic::InterarrivalLaw;

fn mmn(servers: u64, lambda: f64, beta: f64, gamma: f64) -> PrelimitParams {
    PrelimitParams::single_stage(servers, 1.0, lambda, 1.0, InterarrivalLaw::Exponential, beta, gamma).unwrap()
}

/// Erlang-C waiting probability from the closed form.
fn erlang_c(servers: u64, a: f64) -> f64 {
    let n = servers as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..servers {
        term *= a / k as f64;
        sum += term;
    }
    let top = term * a / n * n / (n - a);
    top / (sum + top)
}

/// P(all servers busy) from the truncated birth-death chain.
fn birth_death_wait(servers: u64, lambda: f64, mu: f64) -> f64 {
    let cap = 2000;
    let mut pi = vec![1.0f64];
    for k in 1..=cap {
        let down = mu * (k.min(servers) as f64);
        pi.push(pi[k as usize - 1] * lambda / down);
    }
    let total: f64 = pi.iter().sum();
    pi[servers as usize..].iter().sum::<f64>() / total
}

/// Stationary P(no idle server) of the single-stage vacation chain on
/// (jobs in system, servers on vacation), by uniformized power iteration.
fn vacation_chain_wait(servers: u64, lambda: f64, mu: f64, beta: f64, gamma: f64) -> f64 {
    let n = servers as usize;
    let cap = 120;
    let idx = |k: usize, v: usize| k * (n + 1) + v;
    let busy = |k: usize, v: usize| k.min(n - v);
    let idle = |k: usize, v: usize| (n - v).saturating_sub(k);
    let unif = lambda + (mu + beta + gamma) * n as f64;
    let mut p = vec![0.0; (cap + 1) * (n + 1)];
    p[0] = 1.0;
    for _ in 0..200_000 {
        let mut next = vec![0.0; p.len()];
        for k in 0..=cap {
            for v in 0..=n {
                let m = p[idx(k, v)];
                if m == 0.0 {
                    continue;
                }
                let mut out = 0.0;
                let mut send = |to: usize, rate: f64| {
                    next[to] += m * rate / unif;
                    out += rate;
                };
                if k < cap {
                    send(idx(k + 1, v), lambda);
                }
                if busy(k, v) > 0 {
                    send(idx(k - 1, v), mu * busy(k, v) as f64);
                }
                if idle(k, v) > 0 {
                    send(idx(k, v + 1), beta * idle(k, v) as f64);
                }
                if v > 0 {
                    send(idx(k, v - 1), gamma * v as f64);
                }
                next[idx(k, v)] += m * (1.0 - out / unif);
            }
        }
        let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if diff < 1e-14 {
            break;
        }
    }
    let mut wait = 0.0;
    for k in 0..=cap {
        for v in 0..=n {
            if idle(k, v) == 0 {
                wait += p[idx(k, v)];
            }
        }
    }
    wait
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let m = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (r - 1.0);
    (m, (var / r).sqrt())
}

#[test]
fn erlang_c_oracles_agree() {
    assert!((erlang_c(2, 1.5) - 0.642_857_142_857).abs() < 1e-9);
    for (n, a) in [(1, 0.5), (2, 1.5), (3, 2.0), (5, 4.0)] {
        assert!((erlang_c(n, a) - birth_death_wait(n, a, 1.0)).abs() < 1e-9, "N = {n}");
        // no vacations: the two-dimensional chain collapses to the birth-death one
        assert!((vacation_chain_wait(n, a, 1.0, 0.0, 1.0) - erlang_c(n, a)).abs() < 1e-6, "N = {n}");
    }
}

#[test]
fn without_vacations_the_wait_probability_is_erlang_c() {
    for (servers, lambda) in [(1u64, 0.6), (2, 1.5), (3, 2.0), (5, 4.0)] {
        let p = mmn(servers, lambda, 0.0, 1.0);
        let cfg = PrelimitConfig::new(40_000.0).with_replications(8).with_seed(5);
        let runs = run_prelimit_replications(&p, &SystemState::empty(&p), &cfg).unwrap();
        let pows: Vec<f64> = runs.iter().map(|r| r.stats.pow()).collect();
        let (m, se) = mean_and_se(&pows);
        let exact = erlang_c(servers, lambda);
        assert!((m - exact).abs() < 3.0 * se.max(1e-3), "N = {servers}: {m} vs {exact} (se {se})");
    }
}

#[test]
fn with_vacations_the_wait_probability_matches_the_markov_chain() {
    let (servers, lambda, beta, gamma) = (3u64, 1.2, 0.5, 2.0);
    let exact = vacation_chain_wait(servers, lambda, 1.0, beta, gamma);
    let p = mmn(servers, lambda, beta, gamma);
    let cfg = PrelimitConfig::new(40_000.0).with_replications(8).with_seed(6);
    let runs = run_prelimit_replications(&p, &SystemState::empty(&p), &cfg).unwrap();
    let pows: Vec<f64> = runs.iter().map(|r| r.stats.pow()).collect();
    let (m, se) = mean_and_se(&pows);
    assert!(exact > erlang_c(servers, lambda));
    assert!((m - exact).abs() < 3.0 * se.max(1e-3), "{m} vs {exact} (se {se})");
}

#[test]
fn scaled_snapshots_satisfy_the_state_identities() {
    for alpha in [0.25, 0.5, 1.0] {
        let base = PrelimitParams::single_stage(400, alpha, 1.0, 1.0, InterarrivalLaw::Exponential, 2.0, 1.0).unwrap();
        let p = PrelimitParams { lambda: 0.95 * base.servers as f64, ..base };
        let cfg = PrelimitConfig::new(200.0).with_snapshots(0.5);
        let run = run_prelimit(&p, &SystemState::empty(&p), &cfg, 0).unwrap();
        assert_eq!(run.snapshots.len(), 401);
        for s in &run.snapshots {
            assert!(s.identity_residual() < 1e-9, "alpha = {alpha}, t = {}", s.t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn event_log_conserves_jobs_and_servers(
        servers in 1u64..8,
        load in 0.3..1.5f64,
        beta in 0.0..3.0f64,
        gamma in 0.1..3.0f64,
        q0 in 0u64..5,
        seed in any::<u64>(),
    ) {
        let p = mmn(servers, load * servers as f64, beta, gamma);
        let init = SystemState { q: q0, i: 0, u: vec![0] };
        let cfg = PrelimitConfig::new(50.0).with_seed(seed).with_event_log();
        let run = run_prelimit(&p, &init, &cfg, 0).unwrap();
        let n = servers;
        let busy0 = init.busy(n);
        let mut last_t = 0.0;
        for e in &run.events {
            let (s, c) = (&e.state, &e.counters);
            prop_assert!(e.t >= last_t);
            last_t = e.t;
            prop_assert!(s.q == 0 || s.i == 0);
            prop_assert!(s.i + s.v() <= n);
            prop_assert_eq!(s.q + c.routed, init.q + c.arrivals);
            prop_assert_eq!(s.busy(n) + c.departures, busy0 + c.routed);
            prop_assert_eq!(s.v() + c.vacation_ends, init.v() + c.vacation_begins);
            prop_assert_eq!(s.in_system(n) + c.departures, init.in_system(n) + c.arrivals);
            if let EventKind::VacationBegin(_) = e.kind {
                prop_assert!(beta > 0.0);
            }
        }
        prop_assert_eq!(&run.final_state, run.events.last().map_or(&init, |e| &e.state));
    }

    #[test]
    fn runs_replay_exactly(seed in any::<u64>(), rep in 0u64..4) {
        let p = mmn(4, 3.5, 1.0, 1.0);
        let cfg = PrelimitConfig::new(30.0).with_seed(seed).with_event_log();
        let a = run_prelimit(&p, &SystemState::empty(&p), &cfg, rep).unwrap();
        let b = run_prelimit(&p, &SystemState::empty(&p), &cfg, rep).unwrap();
        prop_assert_eq!(a.events, b.events);
    }
}
