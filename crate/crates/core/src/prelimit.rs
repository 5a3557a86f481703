//! Event-driven simulation of the n-th queueing system.
//!
//! Servers are not tracked individually. Service and vacation times are
//! exponential, so the aggregate state `(q, i, u)` is a Markov chain driven by
//! time-changed unit Poisson processes: departures `S(mu_ind * int B)`,
//! vacation beginnings `S_0i(beta_i * int I)`, endings `S_i0(gamma_i * int U_i)`
//! and stage moves `S_ij(r_ij * int U_i)`. Arrivals come from one renewal
//! timer.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{aggregate, EstimateReport};
use crate::limit::ModelParams;
use crate::stochastic::{driver, next_interarrival, InterarrivalLaw, PoissonClock, RngStream};

/// Parameters of the n-th system.
#[derive(Debug, Clone, PartialEq)]
pub struct PrelimitParams {
    pub n: u64,
    pub alpha: f64,
    /// Arrival rate `lambda^n`; 0 means no arrivals.
    pub lambda: f64,
    /// `N^n = ceil(n^alpha)`.
    pub servers: u64,
    pub mu_ind: f64,
    pub ia_law: InterarrivalLaw,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major `m x m` stage transition rates, rows summing to zero.
    pub transitions: Vec<f64>,
}

impl PrelimitParams {
    /// Single-stage system with `N = ceil(n^alpha)` servers.
    pub fn single_stage(
        n: u64,
        alpha: f64,
        lambda: f64,
        mu_ind: f64,
        ia_law: InterarrivalLaw,
        beta: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = Self {
            n,
            alpha,
            lambda,
            servers: server_count(n, alpha)?,
            mu_ind,
            ia_law,
            beta: vec![beta],
            gamma: vec![gamma],
            transitions: vec![0.0],
        };
        p.validate()?;
        Ok(p)
    }

    /// The n-th system whose diffusion limit has coefficients `model`:
    /// `lambda = n mu + sqrt(n) b`, `mu_ind N = n mu`, interarrival SCV
    /// `sigma^2 / mu - 1`, and the same vacation rates.
    pub fn from_limit(model: &ModelParams, n: u64, alpha: f64) -> Result<Self> {
        model.validate()?;
        let servers = server_count(n, alpha)?;
        let nf = n as f64;
        let lambda = nf * model.mu + nf.sqrt() * model.b;
        if !(lambda > 0.0) {
            return Err(Error::input(format!("n = {n} too small: arrival rate {lambda} is not positive")));
        }
        let c2 = model.sigma * model.sigma / model.mu - 1.0;
        let ia_law = InterarrivalLaw::with_scv(c2)?;
        let p = Self {
            n,
            alpha,
            lambda,
            servers,
            mu_ind: nf * model.mu / servers as f64,
            ia_law,
            beta: model.beta.clone(),
            gamma: model.gamma.clone(),
            transitions: model.transitions.clone(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Overrides the server count, for small fixed systems such as M/M/2.
    pub fn with_servers(mut self, servers: u64) -> Result<Self> {
        self.servers = servers;
        self.validate()?;
        Ok(self)
    }

    pub fn stages(&self) -> usize {
        self.beta.len()
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.transitions[i * self.stages() + j]
    }

    /// Total service capacity `mu_ind * N`.
    pub fn capacity(&self) -> f64 {
        self.mu_ind * self.servers as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::input("scale parameter n must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::input(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.servers == 0 {
            return Err(Error::input("the server pool is empty"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::input(format!("arrival rate must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu_ind > 0.0) || !self.mu_ind.is_finite() {
            return Err(Error::input(format!("service rate must be positive, got {}", self.mu_ind)));
        }
        self.ia_law.validate()?;
        let m = self.stages();
        if m == 0 || self.gamma.len() != m || self.transitions.len() != m * m {
            return Err(Error::input("beta, gamma and R must all have the same m >= 1 stages"));
        }
        for i in 0..m {
            if !(self.beta[i] >= 0.0) || !self.beta[i].is_finite() {
                return Err(Error::input(format!("beta[{i}] must be >= 0, got {}", self.beta[i])));
            }
            if !(self.gamma[i] >= 0.0) || !self.gamma[i].is_finite() {
                return Err(Error::input(format!("gamma[{i}] must be >= 0, got {}", self.gamma[i])));
            }
            let mut row = 0.0;
            for j in 0..m {
                let r = self.rate(i, j);
                if !r.is_finite() || (i != j && r < 0.0) {
                    return Err(Error::input(format!("R[{i}][{j}] = {r} is not a valid rate")));
                }
                row += r;
            }
            if row.abs() > 1e-12 {
                return Err(Error::input(format!("row {i} of R sums to {row}, expected 0")));
            }
        }
        Ok(())
    }

    fn check_load(&self) {
        let cap = self.capacity();
        if self.lambda >= cap {
            log::warn!("arrival rate {} is not below capacity {cap}; the system is not stable", self.lambda);
        } else if self.lambda > 0.0 && (cap - self.lambda) > 10.0 * (self.n as f64).sqrt() * (cap / self.n as f64) {
            log::warn!("capacity {cap} exceeds arrival rate {} by many sqrt(n); load is far from critical", self.lambda);
        }
    }
}

fn server_count(n: u64, alpha: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::input("scale parameter n must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let exact = (n as f64).powf(alpha);
    // guard against n^alpha landing a hair above an integer
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 * rounded.max(1.0) { rounded } else { exact.ceil() };
    Ok((count as u64).max(1))
}

/// Queue length, idle servers and vacationing servers per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub q: u64,
    pub i: u64,
    pub u: Vec<u64>,
}

impl SystemState {
    /// Empty queue, all servers idle.
    pub fn empty(p: &PrelimitParams) -> Self {
        Self { q: 0, i: p.servers, u: vec![0; p.stages()] }
    }

    pub fn v(&self) -> u64 {
        self.u.iter().sum()
    }

    pub fn busy(&self, servers: u64) -> u64 {
        servers - self.i - self.v()
    }

    /// Customers in system, `Q + B`.
    pub fn in_system(&self, servers: u64) -> u64 {
        self.q + self.busy(servers)
    }

    pub fn validate(&self, p: &PrelimitParams) -> Result<()> {
        if self.u.len() != p.stages() {
            return Err(Error::input(format!("state has {} stages, model has {}", self.u.len(), p.stages())));
        }
        if self.q > 0 && self.i > 0 {
            return Err(Error::input(format!(
                "work conservation violated: q = {} customers wait while i = {} servers idle",
                self.q, self.i
            )));
        }
        if self.i + self.v() > p.servers {
            return Err(Error::input(format!(
                "i + v = {} exceeds the {} servers",
                self.i + self.v(),
                p.servers
            )));
        }
        Ok(())
    }
}

/// Diffusion-scaled view of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSnapshot {
    pub t: f64,
    pub q: u64,
    pub i: u64,
    pub v: u64,
    /// `(X - N) / sqrt(n)`.
    pub x_hat: f64,
    /// `V / n^(alpha - 1/2)`.
    pub v_tilde: f64,
    pub u_tilde: Vec<f64>,
    /// `Q / sqrt(n)`.
    pub q_hat: f64,
    /// `I / n^(alpha - 1/2)`.
    pub i_tilde: f64,
    n: f64,
    alpha: f64,
}

impl ScaledSnapshot {
    pub fn new(t: f64, s: &SystemState, p: &PrelimitParams) -> Self {
        let n = p.n as f64;
        let root = n.sqrt();
        let vscale = n.powf(p.alpha - 0.5);
        let v = s.v();
        // X - N = q - i - v
        let centred = s.q as f64 - s.i as f64 - v as f64;
        Self {
            t,
            q: s.q,
            i: s.i,
            v,
            x_hat: centred / root,
            v_tilde: v as f64 / vscale,
            u_tilde: s.u.iter().map(|&u| u as f64 / vscale).collect(),
            q_hat: s.q as f64 / root,
            i_tilde: s.i as f64 / vscale,
            n,
            alpha: p.alpha,
        }
    }

    /// Largest violation of `(x_hat + n^(alpha-1) v_tilde)^+ = q_hat` and
    /// `(n^(1-alpha) x_hat + v_tilde)^- = i_tilde`, relative to the scale of
    /// the terms.
    pub fn identity_residual(&self) -> f64 {
        let a = self.x_hat + self.n.powf(self.alpha - 1.0) * self.v_tilde;
        let r1 = (a.max(0.0) - self.q_hat).abs() / (1.0 + self.q_hat.abs() + self.x_hat.abs());
        let c = self.n.powf(1.0 - self.alpha) * self.x_hat + self.v_tilde;
        let r2 = ((-c).max(0.0) - self.i_tilde).abs() / (1.0 + self.i_tilde.abs() + c.abs());
        r1.max(r2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Departure,
    Arrival,
    /// A server in stage `0` returns to the idle pool.
    VacationEnd(usize),
    /// An idle server starts a vacation in the given stage.
    VacationBegin(usize),
    StageMove { from: usize, to: usize },
}

/// Cumulative counts `A`, `D`, `J` and vacation moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub arrivals: u64,
    pub departures: u64,
    /// Jobs routed to the server pool, `J`.
    pub routed: u64,
    pub vacation_begins: u64,
    pub vacation_ends: u64,
    pub stage_moves: u64,
}

/// One processed event and the state right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
    pub state: SystemState,
    pub counters: Counters,
}

/// Run settings for the event simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrelimitConfig {
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub replications: u32,
    /// Snapshot spacing; `None` disables snapshots.
    pub sample_dt: Option<f64>,
    pub record_events: bool,
}

impl PrelimitConfig {
    pub fn new(horizon: f64) -> Self {
        Self { horizon, burn_in: 0.2, seed: 0, replications: 1, sample_dt: None, record_events: false }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: u32) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_snapshots(mut self, dt: f64) -> Self {
        self.sample_dt = Some(dt);
        self
    }

    pub fn with_event_log(mut self) -> Self {
        self.record_events = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::input(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::input(format!("burn-in fraction must be in [0, 1), got {}", self.burn_in)));
        }
        if self.replications == 0 {
            return Err(Error::input("at least one replication is required"));
        }
        if let Some(dt) = self.sample_dt {
            if !(dt > 0.0) {
                return Err(Error::input(format!("snapshot spacing must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Post-burn-in statistics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrelimitStats {
    pub arrivals: u64,
    /// Arrivals that found no idle server.
    pub waited: u64,
    pub window: f64,
    pub int_q: f64,
    pub int_i: f64,
    pub int_v: f64,
}

impl PrelimitStats {
    /// Fraction of arrivals that had to wait; 0 when nobody arrived.
    pub fn pow(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.waited as f64 / self.arrivals as f64
        }
    }

    pub fn mean_v(&self) -> f64 {
        self.int_v / self.window
    }

    pub fn mean_q(&self) -> f64 {
        self.int_q / self.window
    }

    pub fn mean_i(&self) -> f64 {
        self.int_i / self.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrelimitRun {
    pub initial: SystemState,
    pub final_state: SystemState,
    pub counters: Counters,
    pub stats: PrelimitStats,
    pub snapshots: Vec<ScaledSnapshot>,
    pub events: Vec<EventRecord>,
    /// Time of the first vacation beginning, if any.
    pub first_vacation: Option<f64>,
}

#[derive(Debug, Clone)]
struct Clock {
    kind: EventKind,
    coef: f64,
    clock: PoissonClock,
}

struct Sim<'a> {
    p: &'a PrelimitParams,
    t: f64,
    state: SystemState,
    counters: Counters,
    // departures, then vacation ends, vacation begins and stage moves:
    // index order is the tie-break priority after arrivals
    clocks: Vec<Clock>,
    arrivals: RngStream,
    next_arrival: f64,
    rates: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn new(p: &'a PrelimitParams, init: SystemState, seed: u64, replication: u64) -> Result<Self> {
        let m = p.stages();
        let single = m == 1;
        let stream = |d| PoissonClock::new(RngStream::for_driver(seed, replication, d));
        let mut clocks = vec![Clock { kind: EventKind::Departure, coef: p.mu_ind, clock: stream(driver::SERVICE) }];
        for k in 0..m {
            let d = if single { driver::VACATION_END } else { driver::pair(k + 1, 0) };
            clocks.push(Clock { kind: EventKind::VacationEnd(k), coef: p.gamma[k], clock: stream(d) });
        }
        for k in 0..m {
            let d = if single { driver::VACATION_BEGIN } else { driver::pair(0, k + 1) };
            clocks.push(Clock { kind: EventKind::VacationBegin(k), coef: p.beta[k], clock: stream(d) });
        }
        for from in 0..m {
            for to in 0..m {
                if from != to && p.rate(from, to) > 0.0 {
                    clocks.push(Clock {
                        kind: EventKind::StageMove { from, to },
                        coef: p.rate(from, to),
                        clock: stream(driver::pair(from + 1, to + 1)),
                    });
                }
            }
        }
        let mut arrivals = RngStream::for_driver(seed, replication, driver::ARRIVALS);
        let next_arrival =
            if p.lambda > 0.0 { next_interarrival(&p.ia_law, p.lambda, &mut arrivals)? } else { f64::INFINITY };
        let n = clocks.len();
        Ok(Self { p, t: 0.0, state: init, counters: Counters::default(), clocks, arrivals, next_arrival, rates: vec![0.0; n] })
    }

    #[inline]
    fn population(&self, kind: EventKind) -> u64 {
        match kind {
            EventKind::Departure => self.state.busy(self.p.servers),
            EventKind::VacationEnd(k) | EventKind::StageMove { from: k, .. } => self.state.u[k],
            EventKind::VacationBegin(_) => self.state.i,
            EventKind::Arrival => 0,
        }
    }

    /// Time and kind of the next event, if it happens before `until`.
    /// `None` as kind means an arrival.
    fn peek(&mut self, until: f64) -> Option<(f64, Option<usize>)> {
        for k in 0..self.clocks.len() {
            self.rates[k] = self.clocks[k].coef * self.population(self.clocks[k].kind) as f64;
        }
        let wait = |k: usize| {
            if self.rates[k] > 0.0 {
                self.clocks[k].clock.remaining() / self.rates[k]
            } else {
                f64::INFINITY
            }
        };
        // departure > arrival > vacation end > vacation begin > stage move
        let mut best_dt = wait(0);
        let mut best = Some(0);
        let dt = self.next_arrival - self.t;
        if dt < best_dt {
            best_dt = dt;
            best = None;
        }
        for k in 1..self.clocks.len() {
            let dt = wait(k);
            if dt < best_dt {
                best_dt = dt;
                best = Some(k);
            }
        }
        let t_next = self.t + best_dt;
        if !(t_next <= until) {
            return None;
        }
        Some((t_next, best))
    }

    /// Lets time run to `t_next` without an event.
    fn accrue_to(&mut self, t_next: f64, skip: Option<usize>) {
        let dt = t_next - self.t;
        for (k, c) in self.clocks.iter_mut().enumerate() {
            if Some(k) != skip && self.rates[k] > 0.0 {
                c.clock.accrue(self.rates[k] * dt);
            }
        }
        self.t = t_next;
    }

    /// Processes the event chosen by `peek`; returns its kind.
    fn fire(&mut self, t_next: f64, which: Option<usize>) -> Result<EventKind> {
        self.accrue_to(t_next, which);
        let s = &mut self.state;
        let c = &mut self.counters;
        let kind = match which {
            None => {
                self.next_arrival = self.t + next_interarrival(&self.p.ia_law, self.p.lambda, &mut self.arrivals)?;
                c.arrivals += 1;
                if s.i > 0 {
                    s.i -= 1;
                    c.routed += 1;
                } else {
                    s.q += 1;
                }
                EventKind::Arrival
            }
            Some(k) => {
                self.clocks[k].clock.fire();
                let kind = self.clocks[k].kind;
                match kind {
                    EventKind::Departure => {
                        c.departures += 1;
                        if s.q > 0 {
                            s.q -= 1;
                            c.routed += 1;
                        } else {
                            s.i += 1;
                        }
                    }
                    EventKind::VacationEnd(st) => {
                        c.vacation_ends += 1;
                        s.u[st] -= 1;
                        if s.q > 0 {
                            s.q -= 1;
                            c.routed += 1;
                        } else {
                            s.i += 1;
                        }
                    }
                    EventKind::VacationBegin(st) => {
                        c.vacation_begins += 1;
                        s.i -= 1;
                        s.u[st] += 1;
                    }
                    EventKind::StageMove { from, to } => {
                        c.stage_moves += 1;
                        s.u[from] -= 1;
                        s.u[to] += 1;
                    }
                    EventKind::Arrival => unreachable!("arrivals have no clock"),
                }
                kind
            }
        };
        Ok(kind)
    }
}

/// Simulates replication `replication` of the n-th system up to the horizon.
pub fn run_prelimit(
    p: &PrelimitParams,
    init: &SystemState,
    cfg: &PrelimitConfig,
    replication: u64,
) -> Result<PrelimitRun> {
    p.validate()?;
    cfg.validate()?;
    init.validate(p)?;
    let mut sim = Sim::new(p, init.clone(), cfg.seed, replication)?;
    let burn = cfg.burn_in * cfg.horizon;
    let mut stats = PrelimitStats { window: cfg.horizon - burn, ..Default::default() };
    let mut snapshots = Vec::new();
    let mut next_snap = 0.0;
    let mut events = Vec::new();
    let mut first_vacation = None;

    let integrate = |stats: &mut PrelimitStats, s: &SystemState, from: f64, to: f64| {
        let a = from.max(burn);
        if to > a {
            let dt = to - a;
            stats.int_q += s.q as f64 * dt;
            stats.int_i += s.i as f64 * dt;
            stats.int_v += s.v() as f64 * dt;
        }
    };

    loop {
        let next = sim.peek(cfg.horizon);
        let t_next = next.map_or(cfg.horizon, |(t, _)| t);
        if let Some(dt) = cfg.sample_dt {
            while next_snap <= t_next && next_snap <= cfg.horizon {
                snapshots.push(ScaledSnapshot::new(next_snap, &sim.state, p));
                next_snap += dt;
            }
        }
        integrate(&mut stats, &sim.state, sim.t, t_next);
        let Some((t_next, which)) = next else {
            sim.accrue_to(cfg.horizon, None);
            break;
        };
        if which.is_none() && t_next >= burn {
            stats.arrivals += 1;
            if sim.state.i == 0 {
                stats.waited += 1;
            }
        }
        let kind = sim.fire(t_next, which)?;
        if first_vacation.is_none() && matches!(kind, EventKind::VacationBegin(_)) {
            first_vacation = Some(sim.t);
        }
        if cfg.record_events {
            events.push(EventRecord { t: sim.t, kind, state: sim.state.clone(), counters: sim.counters });
        }
    }
    Ok(PrelimitRun {
        initial: init.clone(),
        final_state: sim.state,
        counters: sim.counters,
        stats,
        snapshots,
        events,
        first_vacation,
    })
}

/// Runs `cfg.replications` replications in parallel.
pub fn run_prelimit_replications(
    p: &PrelimitParams,
    init: &SystemState,
    cfg: &PrelimitConfig,
) -> Result<Vec<PrelimitRun>> {
    (0..u64::from(cfg.replications)).into_par_iter().map(|r| run_prelimit(p, init, cfg, r)).collect()
}

/// Fraction of post-burn-in arrivals that wait, per replication, starting
/// from the empty system.
pub fn estimate_pow_prelimit(p: &PrelimitParams, cfg: &PrelimitConfig) -> Result<EstimateReport> {
    p.validate()?;
    p.check_load();
    let lean = PrelimitConfig { sample_dt: None, record_events: false, ..cfg.clone() };
    let runs = run_prelimit_replications(p, &SystemState::empty(p), &lean)?;
    let values: Vec<f64> = runs.iter().map(|r| r.stats.pow()).collect();
    Ok(aggregate(&values, None)?.with_seeds(vec![cfg.seed]))
}

/// Estimated probability that the vacation population leaves 0 by time `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingEstimate {
    pub n: u64,
    /// Mean of `1 - exp(-sum_k beta_k int_0^T I)` over replications.
    pub probability: f64,
    pub std_error: f64,
    /// Normal-approximation 95% half-width.
    pub ci_halfwidth: f64,
    /// Replications in which a vacation actually began.
    pub hits: u64,
    pub replications: u32,
}

impl DecouplingEstimate {
    pub fn hit_fraction(&self) -> f64 {
        self.hits as f64 / f64::from(self.replications)
    }
}

/// Estimates `P(V^n hits 1 by horizon | V^n(0) = 0)` from the empty,
/// all-idle start.
///
/// Until the first vacation the system evolves as if `beta = 0`, and the
/// first vacation begins once `beta_k int_0^t I` reaches the first point of
/// `S_0k`. Each replication therefore simulates the vacation-free system,
/// records whether any `S_0k` would have fired, and contributes the
/// conditional probability `1 - exp(-sum_k beta_k int_0^T I)`, which has the
/// same mean and a smaller variance than the hit indicator.
pub fn decoupling_check(p: &PrelimitParams, horizon: f64, replications: u32, seed: u64) -> Result<DecouplingEstimate> {
    p.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::input(format!("horizon must be positive, got {horizon}")));
    }
    if replications == 0 {
        return Err(Error::input("at least one replication is required"));
    }
    if p.alpha >= 0.5 {
        log::warn!("alpha = {} is not below 1/2; running as a control", p.alpha);
    }
    let frozen = PrelimitParams { beta: vec![0.0; p.stages()], ..p.clone() };
    let init = SystemState::empty(p);
    let single = p.stages() == 1;
    let results: Vec<(f64, bool)> = (0..u64::from(replications))
        .into_par_iter()
        .map(|r| -> Result<(f64, bool)> {
            let mut sim = Sim::new(&frozen, init.clone(), seed, r)?;
            let mut idle_time = 0.0;
            while let Some((t, which)) = sim.peek(horizon) {
                idle_time += sim.state.i as f64 * (t - sim.t);
                sim.fire(t, which)?;
            }
            idle_time += sim.state.i as f64 * (horizon - sim.t);
            let mut hit = false;
            for k in 0..p.stages() {
                let d = if single { driver::VACATION_BEGIN } else { driver::pair(0, k + 1) };
                let first = PoissonClock::new(RngStream::for_driver(seed, r, d)).next_threshold();
                hit |= p.beta[k] > 0.0 && p.beta[k] * idle_time >= first;
            }
            let rate: f64 = p.beta.iter().sum();
            Ok((-(-rate * idle_time).exp_m1(), hit))
        })
        .collect::<Result<_>>()?;
    let r = f64::from(replications);
    let prob = results.iter().map(|(q, _)| q).sum::<f64>() / r;
    let var = if replications > 1 {
        results.iter().map(|(q, _)| (q - prob) * (q - prob)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    let se = (var / r).sqrt();
    Ok(DecouplingEstimate {
        n: p.n,
        probability: prob,
        std_error: se,
        ci_halfwidth: 1.96 * se,
        hits: results.iter().filter(|(_, h)| *h).count() as u64,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm(servers: u64, lambda: f64, mu: f64, beta: f64, gamma: f64) -> PrelimitParams {
        PrelimitParams::single_stage(servers, 1.0, lambda, mu, InterarrivalLaw::Exponential, beta, gamma).unwrap()
    }

    #[test]
    fn server_count_rounds_up() {
        assert_eq!(server_count(100, 0.25).unwrap(), 4);
        assert_eq!(server_count(10_000, 0.25).unwrap(), 10);
        assert_eq!(server_count(1_000, 1.0 / 3.0).unwrap(), 10);
        assert_eq!(server_count(1600, 0.5).unwrap(), 40);
        assert!(server_count(0, 0.5).is_err());
        assert!(server_count(10, 1.5).is_err());
    }

    #[test]
    fn from_limit_matches_scaling() {
        let m = ModelParams::single_stage(-2.0, 1.0, 3.0, 2.0, 0.1);
        let p = PrelimitParams::from_limit(&m, 400, 1.0).unwrap();
        assert_eq!(p.servers, 400);
        assert!((p.lambda - 360.0).abs() < 1e-12);
        assert!((p.mu_ind - 1.0).abs() < 1e-12);
        assert!((p.ia_law.scv() - 8.0).abs() < 1e-12);

        let q = PrelimitParams::from_limit(&m, 400, 0.5).unwrap();
        assert_eq!(q.servers, 20);
        assert!((q.capacity() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_work_conservation_violation() {
        let p = mm(2, 1.5, 1.0, 0.0, 1.0);
        let bad = SystemState { q: 1, i: 1, u: vec![0] };
        assert!(run_prelimit(&p, &bad, &PrelimitConfig::new(1.0), 0).is_err());
        let crowded = SystemState { q: 0, i: 2, u: vec![1] };
        assert!(run_prelimit(&p, &crowded, &PrelimitConfig::new(1.0), 0).is_err());
    }

    #[test]
    fn idle_servers_cycle_through_vacations_without_arrivals() {
        let p = mm(5, 0.0, 1.0, 1.0, 1.0);
        let cfg = PrelimitConfig::new(50.0).with_event_log();
        let run = run_prelimit(&p, &SystemState::empty(&p), &cfg, 0).unwrap();
        assert_eq!(run.counters.arrivals, 0);
        assert!(run.counters.vacation_begins > 10 && run.counters.vacation_ends > 10);
        assert!(run.events.iter().all(|e| e.state.q == 0 && e.state.i + e.state.v() == 5));
    }

    #[test]
    fn snapshots_are_evenly_spaced_and_consistent() {
        let m = ModelParams::single_stage(-1.0, 1.0, 2f64.sqrt(), 1.0, 1.0);
        let p = PrelimitParams::from_limit(&m, 100, 0.75).unwrap();
        let cfg = PrelimitConfig::new(10.0).with_snapshots(0.5);
        let run = run_prelimit(&p, &SystemState::empty(&p), &cfg, 3).unwrap();
        assert_eq!(run.snapshots.len(), 21);
        for (k, s) in run.snapshots.iter().enumerate() {
            assert!((s.t - 0.5 * k as f64).abs() < 1e-9);
            assert!(s.identity_residual() < 1e-12);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let p = mm(3, 2.5, 1.0, 0.5, 0.7);
        let cfg = PrelimitConfig::new(100.0).with_seed(9).with_event_log();
        let a = run_prelimit(&p, &SystemState::empty(&p), &cfg, 1).unwrap();
        let b = run_prelimit(&p, &SystemState::empty(&p), &cfg, 1).unwrap();
        assert_eq!(a, b);
        let c = run_prelimit(&p, &SystemState::empty(&p), &cfg, 2).unwrap();
        assert_ne!(a.counters, c.counters);
    }

    #[test]
    fn no_vacations_without_beta() {
        let m = ModelParams::single_stage(-1.0, 1.0, 2f64.sqrt(), 0.0, 1.0);
        let p = PrelimitParams::from_limit(&m, 100, 0.25).unwrap();
        let d = decoupling_check(&p, 1.0, 200, 0).unwrap();
        assert_eq!(d.probability, 0.0);
        assert_eq!(d.hits, 0);
    }

    #[test]
    fn decoupling_hits_agree_with_full_simulation() {
        let m = ModelParams::single_stage(-1.0, 1.0, 2f64.sqrt(), 0.5, 1.0);
        let p = PrelimitParams::from_limit(&m, 100, 0.25).unwrap();
        let d = decoupling_check(&p, 1.0, 300, 4).unwrap();
        let cfg = PrelimitConfig::new(1.0).with_seed(4);
        let direct = (0..300)
            .filter(|&r| run_prelimit(&p, &SystemState::empty(&p), &cfg, r).unwrap().first_vacation.is_some())
            .count() as u64;
        assert_eq!(d.hits, direct);
        assert!(d.hits > 0);
    }
}
