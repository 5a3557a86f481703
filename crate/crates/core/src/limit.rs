//! Euler-Maruyama simulation of the heavy-traffic limits.
//!
//! Three regimes, each with single-stage (`m = 1`) or phase-type (`m > 1`)
//! vacations:
//!
//! * HW: `dX = [b + mu max(-X, V)] dt + sigma dW`,
//!   `dU = [beta (X + V)^- + (R^T - G) U] dt`.
//! * near-HW: `dX = [b + mu V] dt + sigma dW + dL`, `X >= 0`,
//!   `dU = (R^T - G) U dt + beta mu^-1 dL`.
//! * NDS: same `X` equation; `U` is integer valued, stage `i` gains servers
//!   from `S_0i(beta_i mu^-1 L(t))` and loses them through the clocks
//!   `S_i0(gamma_i int U_i)` and `S_ij(r_ij int U_i)`.
//!
//! `V = U . 1`. The reflection is the explicit Euler predictor followed by a
//! projection onto `[0, inf)`; the projected amount is the regulator increment
//! `dL`. Within a step `dL` is computed first and then drives `U`.
//!
//! Runs stream their states to a [`StepObserver`], so steady-state statistics
//! over `10^8` steps never materialise the path.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stochastic::{clip_probability, driver, PoissonClock, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `alpha = 1`.
    Hw,
    /// `1/2 < alpha < 1`.
    NearHw,
    /// `alpha = 1/2`.
    Nds,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Hw => "hw",
            Regime::NearHw => "near-hw",
            Regime::Nds => "nds",
        }
    }

    /// Whether `X` is reflected at zero.
    pub fn is_reflected(&self) -> bool {
        !matches!(self, Regime::Hw)
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hw" => Ok(Regime::Hw),
            "near-hw" | "nearhw" | "near_hw" => Ok(Regime::NearHw),
            "nds" => Ok(Regime::Nds),
            other => Err(Error::input(format!("unknown regime '{other}' (hw, near-hw, nds)"))),
        }
    }
}

/// How the NDS birth-death jumps are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum JumpScheme {
    /// Time-changed unit Poisson processes with Exp(1) thresholds; several
    /// jumps per step are possible.
    #[default]
    Threshold,
    /// At most one jump per clock and step, with probability `rate * delta`
    /// clipped at 1.
    Bernoulli,
}

impl JumpScheme {
    pub fn name(&self) -> &'static str {
        match self {
            JumpScheme::Threshold => "threshold",
            JumpScheme::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for JumpScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "threshold" => Ok(JumpScheme::Threshold),
            "bernoulli" => Ok(JumpScheme::Bernoulli),
            other => Err(Error::input(format!("unknown scheme '{other}' (threshold, bernoulli)"))),
        }
    }
}

/// Coefficients of the limit systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Drift `b = lambda_hat - mu_hat`.
    pub b: f64,
    /// Service capacity rate `mu`.
    pub mu: f64,
    /// Diffusion coefficient, `sigma^2 = mu (C_IA^2 + 1)`.
    pub sigma: f64,
    /// Vacation-begin rate per stage.
    pub beta: Vec<f64>,
    /// Vacation-end rate per stage.
    pub gamma: Vec<f64>,
    /// Row-major `m x m` stage transition-rate matrix `R`; `r_ij` is the rate
    /// from stage `i` to stage `j` and rows sum to zero.
    pub transitions: Vec<f64>,
}

impl ModelParams {
    pub fn single_stage(b: f64, mu: f64, sigma: f64, beta: f64, gamma: f64) -> Self {
        Self { b, mu, sigma, beta: vec![beta], gamma: vec![gamma], transitions: vec![0.0] }
    }

    pub fn multi_stage(
        b: f64,
        mu: f64,
        sigma: f64,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        transitions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = beta.len();
        if transitions.len() != m || transitions.iter().any(|row| row.len() != m) {
            return Err(Error::input(format!("transition matrix must be {m} x {m}")));
        }
        let p = Self { b, mu, sigma, beta, gamma, transitions: transitions.concat() };
        p.validate()?;
        Ok(p)
    }

    /// `sigma = sqrt(mu (c2 + 1))` for interarrival SCV `c2`.
    pub fn sigma_from_scv(mu: f64, c2: f64) -> f64 {
        (mu * (c2 + 1.0)).sqrt()
    }

    pub fn stages(&self) -> usize {
        self.beta.len()
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.transitions[i * self.stages() + j]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.stages();
        if m == 0 {
            return Err(Error::input("at least one vacation stage is required"));
        }
        if self.gamma.len() != m || self.transitions.len() != m * m {
            return Err(Error::input("beta, gamma and R must all have m stages"));
        }
        if !self.b.is_finite() {
            return Err(Error::input(format!("drift b must be finite, got {}", self.b)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::input(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::input(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        for (i, (&beta, &gamma)) in self.beta.iter().zip(&self.gamma).enumerate() {
            if !(beta >= 0.0) || !beta.is_finite() {
                return Err(Error::input(format!("beta[{i}] must be >= 0, got {beta}")));
            }
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::input(format!("gamma[{i}] must be > 0, got {gamma}")));
            }
        }
        for i in 0..m {
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
}

/// State of the limit system.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub x: f64,
    /// Vacation mass per stage; `V` is the sum.
    pub u: Vec<f64>,
    /// Accumulated boundary term.
    pub l: f64,
}

impl LimitState {
    pub fn single(x: f64, v: f64) -> Self {
        Self { x, u: vec![v], l: 0.0 }
    }

    pub fn multi(x: f64, u: Vec<f64>) -> Self {
        Self { x, u, l: 0.0 }
    }

    /// Origin with `m` empty stages.
    pub fn origin(m: usize) -> Self {
        Self { x: 0.0, u: vec![0.0; m], l: 0.0 }
    }

    pub fn v(&self) -> f64 {
        self.u.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub delta: f64,
    pub steps: u64,
    /// Fraction of the horizon excluded from steady-state statistics.
    pub burn_in: f64,
    pub seed: u64,
    pub replications: u32,
    pub regime: Regime,
    /// Force `V = 0`: the no-vacation reference diffusion.
    pub reference_only: bool,
    pub scheme: JumpScheme,
    /// Recording stride for exported trajectories.
    pub stride: u64,
}

impl SimConfig {
    pub const DEFAULT_BURN_IN: f64 = 0.2;

    pub fn new(regime: Regime, delta: f64, steps: u64) -> Self {
        Self {
            delta,
            steps,
            burn_in: Self::DEFAULT_BURN_IN,
            seed: 1,
            replications: 1,
            regime,
            reference_only: false,
            scheme: JumpScheme::Threshold,
            stride: 1,
        }
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

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_scheme(mut self, scheme: JumpScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn reference(mut self) -> Self {
        self.reference_only = true;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.delta * self.steps as f64
    }

    /// First step index counted in steady-state statistics.
    pub fn burn_in_steps(&self) -> u64 {
        (self.burn_in * self.steps as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::input(format!("time step must be positive, got {}", self.delta)));
        }
        if self.steps == 0 {
            return Err(Error::input("step count must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::input(format!("burn-in fraction must be in [0, 1), got {}", self.burn_in)));
        }
        if self.replications == 0 {
            return Err(Error::input("replication count must be >= 1"));
        }
        if self.stride == 0 {
            return Err(Error::input("recording stride must be >= 1"));
        }
        Ok(())
    }
}

/// One `+1`/`-1` move of the NDS vacation population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub step: u64,
    pub t: f64,
    pub stage: usize,
    /// `+1` for a vacation start, `-1` for a return, `0` for a stage change.
    pub delta: i8,
    /// Destination stage of a stage change.
    pub to_stage: Option<usize>,
    /// `X` at the grid point the jump is recorded at.
    pub x: f64,
    /// Regulator increment of that step.
    pub dl: f64,
}

/// State after a step, as handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub t: f64,
    pub x: f64,
    pub u: &'a [f64],
    pub v: f64,
    pub l: f64,
    /// Regulator increment of the step that produced this state.
    pub dl: f64,
}

pub trait StepObserver {
    /// Called for the initial state (step 0) and after every step.
    fn observe(&mut self, rec: &StepRecord<'_>);

    fn on_jump(&mut self, _ev: &JumpEvent) {}
}

impl<A: StepObserver, B: StepObserver> StepObserver for (A, B) {
    fn observe(&mut self, rec: &StepRecord<'_>) {
        self.0.observe(rec);
        self.1.observe(rec);
    }

    fn on_jump(&mut self, ev: &JumpEvent) {
        self.0.on_jump(ev);
        self.1.on_jump(ev);
    }
}

/// Sampled path: every `stride`-th grid point plus the last one, and every
/// NDS jump.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub delta: f64,
    pub stride: u64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// `u[i][k]`: stage `i` at recorded point `k`.
    pub u: Vec<Vec<f64>>,
    pub l: Vec<f64>,
    /// Regulator increment of the step ending at each recorded point.
    pub dl: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    /// Times the HW/near-HW `U` update was clamped at zero.
    pub clamp_events: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn stages(&self) -> usize {
        self.u.len()
    }

    pub fn v(&self, k: usize) -> f64 {
        self.u.iter().map(|ui| ui[k]).sum()
    }

    pub fn v_path(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.v(k)).collect()
    }
}

/// Observer building a [`Trajectory`].
#[derive(Debug, Clone)]
pub struct TrajectoryRecorder {
    stride: u64,
    last_step: u64,
    traj: Trajectory,
}

impl TrajectoryRecorder {
    pub fn new(delta: f64, stride: u64, stages: usize, last_step: u64) -> Self {
        Self {
            stride: stride.max(1),
            last_step,
            traj: Trajectory {
                delta,
                stride: stride.max(1),
                times: Vec::new(),
                x: Vec::new(),
                u: vec![Vec::new(); stages],
                l: Vec::new(),
                dl: Vec::new(),
                jumps: Vec::new(),
                clamp_events: 0,
            },
        }
    }

    pub fn finish(mut self, summary: &RunSummary) -> Trajectory {
        self.traj.clamp_events = summary.clamp_events;
        self.traj
    }
}

impl StepObserver for TrajectoryRecorder {
    fn observe(&mut self, rec: &StepRecord<'_>) {
        if rec.step % self.stride == 0 || rec.step == self.last_step {
            let t = &mut self.traj;
            t.times.push(rec.t);
            t.x.push(rec.x);
            for (path, &ui) in t.u.iter_mut().zip(rec.u) {
                path.push(ui);
            }
            t.l.push(rec.l);
            t.dl.push(rec.dl);
        }
    }

    fn on_jump(&mut self, ev: &JumpEvent) {
        self.traj.jumps.push(*ev);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub replication: u64,
    pub final_state: LimitState,
    pub clamp_events: u64,
    pub up_jumps: u64,
    pub down_jumps: u64,
}

/// A birth-death clock of the NDS vacation population: fires at rate
/// `coef * u[from]` and moves one server from stage `from` to `to` (or back
/// to the idle pool when `to` is `None`).
#[derive(Debug, Clone)]
struct OutflowClock {
    from: usize,
    to: Option<usize>,
    coef: f64,
    clock: PoissonClock,
}

struct Engine<'a> {
    p: &'a ModelParams,
    cfg: &'a SimConfig,
    regime: Regime,
    replication: u64,
    x: f64,
    u: Vec<f64>,
    l: f64,
    brownian: RngStream,
    // S_0i, fed beta_i / mu * dL
    inflow: Vec<PoissonClock>,
    outflow: Vec<OutflowClock>,
    scratch: Vec<f64>,
    clamp_events: u64,
    up_jumps: u64,
    down_jumps: u64,
}

impl<'a> Engine<'a> {
    fn new(p: &'a ModelParams, init: &LimitState, cfg: &'a SimConfig, regime: Regime, replication: u64) -> Self {
        let m = p.stages();
        let seed = cfg.seed;
        let single = m == 1;
        let inflow = (0..m)
            .map(|i| {
                let d = if single { driver::VACATION_BEGIN } else { driver::pair(0, i + 1) };
                PoissonClock::new(RngStream::for_driver(seed, replication, d))
            })
            .collect();
        let mut outflow = Vec::new();
        for i in 0..m {
            let d = if single { driver::VACATION_END } else { driver::pair(i + 1, 0) };
            outflow.push(OutflowClock {
                from: i,
                to: None,
                coef: p.gamma[i],
                clock: PoissonClock::new(RngStream::for_driver(seed, replication, d)),
            });
            for j in 0..m {
                if i != j && p.rate(i, j) > 0.0 {
                    outflow.push(OutflowClock {
                        from: i,
                        to: Some(j),
                        coef: p.rate(i, j),
                        clock: PoissonClock::new(RngStream::for_driver(
                            seed,
                            replication,
                            driver::pair(i + 1, j + 1),
                        )),
                    });
                }
            }
        }
        let u = if cfg.reference_only { vec![0.0; m] } else { init.u.clone() };
        Self {
            p,
            cfg,
            regime,
            replication,
            x: init.x,
            u,
            l: init.l,
            brownian: RngStream::for_driver(seed, replication, driver::BROWNIAN),
            inflow,
            outflow,
            scratch: vec![0.0; m],
            clamp_events: 0,
            up_jumps: 0,
            down_jumps: 0,
        }
    }

    #[inline]
    fn v(&self) -> f64 {
        if self.u.len() == 1 {
            self.u[0]
        } else {
            self.u.iter().sum()
        }
    }

    fn run<O: StepObserver>(mut self, obs: &mut O) -> Result<RunSummary> {
        let delta = self.cfg.delta;
        let noise = self.p.sigma * delta.sqrt();
        obs.observe(&StepRecord { step: 0, t: 0.0, x: self.x, u: &self.u, v: self.v(), l: self.l, dl: 0.0 });
        for step in 1..=self.cfg.steps {
            let dw = self.brownian.standard_normal() * noise;
            let dl = match self.regime {
                Regime::Hw => {
                    self.step_hw(dw);
                    0.0
                }
                Regime::NearHw => self.step_near_hw(dw),
                Regime::Nds => self.step_nds(dw, step, obs),
            };
            let v = self.v();
            if !self.x.is_finite() || !v.is_finite() {
                return Err(Error::Numerical {
                    step,
                    what: format!("non-finite state x={} v={}", self.x, v),
                });
            }
            obs.observe(&StepRecord { step, t: step as f64 * delta, x: self.x, u: &self.u, v, l: self.l, dl });
        }
        Ok(RunSummary {
            replication: self.replication,
            final_state: LimitState { x: self.x, u: self.u, l: self.l },
            clamp_events: self.clamp_events,
            up_jumps: self.up_jumps,
            down_jumps: self.down_jumps,
        })
    }

    /// `X <- max(X + drift delta + dW, 0)`; returns the projected amount.
    #[inline]
    fn reflect_x(&mut self, dw: f64) -> f64 {
        let v = self.v();
        let pred = self.x + (self.p.b + self.p.mu * v) * self.cfg.delta + dw;
        if pred < 0.0 {
            self.x = 0.0;
            self.l += -pred;
            -pred
        } else {
            self.x = pred;
            0.0
        }
    }

    fn step_hw(&mut self, dw: f64) {
        let delta = self.cfg.delta;
        let p = self.p;
        let v = self.v();
        let x = self.x;
        self.x = x + (p.b + p.mu * (-x).max(v)) * delta + dw;
        if self.cfg.reference_only {
            return;
        }
        let y_neg = (-(x + v)).max(0.0);
        if self.u.len() == 1 {
            let nv = v + (p.beta[0] * y_neg - p.gamma[0] * v) * delta;
            self.u[0] = self.clamp(nv);
        } else {
            self.stage_drift();
            for i in 0..self.u.len() {
                let nu = self.u[i] + (p.beta[i] * y_neg + self.scratch[i]) * delta;
                self.u[i] = self.clamp(nu);
            }
        }
    }

    fn step_near_hw(&mut self, dw: f64) -> f64 {
        let delta = self.cfg.delta;
        let p = self.p;
        let dl = self.reflect_x(dw);
        if self.cfg.reference_only {
            return dl;
        }
        let push = dl / p.mu;
        if self.u.len() == 1 {
            let nv = self.u[0] - p.gamma[0] * self.u[0] * delta + p.beta[0] * push;
            self.u[0] = self.clamp(nv);
        } else {
            self.stage_drift();
            for i in 0..self.u.len() {
                let nu = self.u[i] + self.scratch[i] * delta + p.beta[i] * push;
                self.u[i] = self.clamp(nu);
            }
        }
        dl
    }

    fn step_nds<O: StepObserver>(&mut self, dw: f64, step: u64, obs: &mut O) -> f64 {
        let dl = self.reflect_x(dw);
        if self.cfg.reference_only {
            return dl;
        }
        let t = step as f64 * self.cfg.delta;
        // returns and stage changes over the step, from the state at its start
        match self.cfg.scheme {
            JumpScheme::Threshold => self.outflow_threshold(step, t, obs),
            JumpScheme::Bernoulli => self.outflow_bernoulli(step, t, obs),
        }
        // vacation starts, driven by the regulator increment of this step
        if dl > 0.0 {
            for i in 0..self.u.len() {
                let arg = self.p.beta[i] / self.p.mu * dl;
                let k = match self.cfg.scheme {
                    JumpScheme::Threshold => self.inflow[i].advance_unchecked(arg),
                    JumpScheme::Bernoulli => {
                        let q = clip_probability(arg);
                        u64::from(q > 0.0 && self.inflow[i].stream_mut().bernoulli(q))
                    }
                };
                for _ in 0..k {
                    self.u[i] += 1.0;
                    self.up_jumps += 1;
                    obs.on_jump(&JumpEvent { step, t, stage: i, delta: 1, to_stage: None, x: self.x, dl });
                }
            }
        }
        dl
    }

    /// Exact time-changed clocks over one step with piecewise-constant `U`.
    fn outflow_threshold<O: StepObserver>(&mut self, step: u64, t: f64, obs: &mut O) {
        let mut remaining = self.cfg.delta;
        loop {
            let mut first: Option<(usize, f64)> = None;
            for (c, oc) in self.outflow.iter().enumerate() {
                let rate = oc.coef * self.u[oc.from];
                if rate > 0.0 {
                    let tau = oc.clock.remaining().max(0.0) / rate;
                    if tau <= remaining && first.map_or(true, |(_, best)| tau < best) {
                        first = Some((c, tau));
                    }
                }
            }
            let elapsed = first.map_or(remaining, |(_, tau)| tau);
            for (c, oc) in self.outflow.iter_mut().enumerate() {
                if Some(c) != first.map(|f| f.0) {
                    oc.clock.accrue(oc.coef * self.u[oc.from] * elapsed);
                }
            }
            let Some((c, tau)) = first else { break };
            let oc = &mut self.outflow[c];
            oc.clock.fire();
            let (from, to) = (oc.from, oc.to);
            self.apply_outflow(from, to, step, t, obs);
            remaining -= tau;
        }
    }

    fn outflow_bernoulli<O: StepObserver>(&mut self, step: u64, t: f64, obs: &mut O) {
        let delta = self.cfg.delta;
        for c in 0..self.outflow.len() {
            let oc = &mut self.outflow[c];
            let from = oc.from;
            if self.u[from] < 1.0 {
                continue;
            }
            let q = clip_probability(oc.coef * self.u[from] * delta);
            if oc.clock.stream_mut().bernoulli(q) {
                let to = oc.to;
                self.apply_outflow(from, to, step, t, obs);
            }
        }
    }

    fn apply_outflow<O: StepObserver>(&mut self, from: usize, to: Option<usize>, step: u64, t: f64, obs: &mut O) {
        self.u[from] -= 1.0;
        match to {
            Some(j) => {
                self.u[j] += 1.0;
                obs.on_jump(&JumpEvent { step, t, stage: from, delta: 0, to_stage: Some(j), x: self.x, dl: 0.0 });
            }
            None => {
                self.down_jumps += 1;
                obs.on_jump(&JumpEvent { step, t, stage: from, delta: -1, to_stage: None, x: self.x, dl: 0.0 });
            }
        }
    }

    /// `scratch = (R^T - G) u`.
    fn stage_drift(&mut self) {
        let m = self.u.len();
        for i in 0..m {
            let mut acc = -self.p.gamma[i] * self.u[i];
            for j in 0..m {
                acc += self.p.rate(j, i) * self.u[j];
            }
            self.scratch[i] = acc;
        }
    }

    #[inline]
    fn clamp(&mut self, v: f64) -> f64 {
        if v < 0.0 {
            self.clamp_events += 1;
            0.0
        } else {
            v
        }
    }
}

fn check_init(p: &ModelParams, init: &LimitState, regime: Regime, reference_only: bool) -> Result<()> {
    if init.u.len() != p.stages() {
        return Err(Error::input(format!(
            "initial state has {} stages, model has {}",
            init.u.len(),
            p.stages()
        )));
    }
    if !init.x.is_finite() || init.l != 0.0 {
        return Err(Error::input("initial x must be finite and l must start at 0"));
    }
    if regime.is_reflected() && init.x < 0.0 {
        return Err(Error::input(format!("reflected regimes need x0 >= 0, got {}", init.x)));
    }
    if reference_only {
        return Ok(());
    }
    for (i, &ui) in init.u.iter().enumerate() {
        if !(ui >= 0.0) || !ui.is_finite() {
            return Err(Error::input(format!("initial u[{i}] must be >= 0, got {ui}")));
        }
        if regime == Regime::Nds && ui.fract() != 0.0 {
            return Err(Error::input(format!("NDS initial u[{i}] must be an integer, got {ui}")));
        }
    }
    Ok(())
}

/// Runs replication `replication` of `cfg.regime`, streaming into `obs`.
pub fn run<O: StepObserver>(
    p: &ModelParams,
    init: &LimitState,
    cfg: &SimConfig,
    replication: u64,
    obs: &mut O,
) -> Result<RunSummary> {
    p.validate()?;
    cfg.validate()?;
    check_init(p, init, cfg.regime, cfg.reference_only)?;
    Engine::new(p, init, cfg, cfg.regime, replication).run(obs)
}

/// Runs `cfg.replications` independent replications in parallel; replication
/// `r` always uses the streams of `(cfg.seed, r)`.
pub fn run_replications<O, F>(
    p: &ModelParams,
    init: &LimitState,
    cfg: &SimConfig,
    make_observer: F,
) -> Result<Vec<(O, RunSummary)>>
where
    O: StepObserver + Send,
    F: Fn(u64) -> O + Sync,
{
    (0..u64::from(cfg.replications))
        .into_par_iter()
        .map(|r| {
            let mut obs = make_observer(r);
            let summary = run(p, init, cfg, r, &mut obs)?;
            Ok((obs, summary))
        })
        .collect()
}

/// Runs one replication and records its trajectory.
pub fn simulate(p: &ModelParams, init: &LimitState, cfg: &SimConfig) -> Result<Trajectory> {
    let mut rec = TrajectoryRecorder::new(cfg.delta, cfg.stride, p.stages(), cfg.steps);
    let summary = run(p, init, cfg, 0, &mut rec)?;
    Ok(rec.finish(&summary))
}

fn with_regime(cfg: &SimConfig, regime: Regime) -> SimConfig {
    SimConfig { regime, ..cfg.clone() }
}

/// Coupled SDE/ODE of the Halfin-Whitt regime.
pub fn simulate_hw(p: &ModelParams, init: &LimitState, cfg: &SimConfig) -> Result<Trajectory> {
    simulate(p, init, &with_regime(cfg, Regime::Hw))
}

/// Reflected SDE coupled to an ODE through the boundary term.
pub fn simulate_near_hw(p: &ModelParams, init: &LimitState, cfg: &SimConfig) -> Result<Trajectory> {
    simulate(p, init, &with_regime(cfg, Regime::NearHw))
}

/// Reflected SDE coupled to a birth-death process.
pub fn simulate_nds(p: &ModelParams, init: &LimitState, cfg: &SimConfig) -> Result<Trajectory> {
    simulate(p, init, &with_regime(cfg, Regime::Nds))
}

/// No-vacation reference: `dX = [b + mu X^-] dt + sigma dW` when
/// `cfg.regime` is HW, reflected Brownian motion with drift `b` otherwise.
pub fn simulate_reference_rbm(p: &ModelParams, init: &LimitState, cfg: &SimConfig) -> Result<Trajectory> {
    simulate(p, init, &SimConfig { reference_only: true, ..cfg.clone() })
}
