//! Steady-state statistics of limit trajectories and replication summaries.
//!
//! Time integrals use the left-endpoint rule on the simulation grid: the state
//! at `t_k` stands for the whole step `[t_k, t_{k+1})`. The first
//! `burn_in * T` time units are discarded.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::limit::{SimConfig, StepObserver, StepRecord, Trajectory};

/// Path quantity averaged by [`time_average`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    X,
    V,
    Stage(usize),
    L,
    /// `X + V`.
    Y,
    NegX,
    /// `(X + V)^-`.
    NegY,
    /// `1{X + V > 0}`.
    Waiting,
}

impl Functional {
    fn eval(&self, traj: &Trajectory, k: usize) -> f64 {
        match *self {
            Functional::X => traj.x[k],
            Functional::V => traj.v(k),
            Functional::Stage(i) => traj.u[i][k],
            Functional::L => traj.l[k],
            Functional::Y => traj.x[k] + traj.v(k),
            Functional::NegX => (-traj.x[k]).max(0.0),
            Functional::NegY => (-(traj.x[k] + traj.v(k))).max(0.0),
            Functional::Waiting => f64::from(u8::from(traj.x[k] + traj.v(k) > 0.0)),
        }
    }
}

/// Integration rule for [`time_average`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule {
    /// Piecewise constant, value at the left end of each interval.
    #[default]
    LeftEndpoint,
    Trapezoid,
}

fn window_start(traj: &Trajectory, burn_in: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::input(format!("burn-in fraction must be in [0, 1), got {burn_in}")));
    }
    if traj.len() < 2 {
        return Err(Error::input("trajectory has fewer than two points"));
    }
    let horizon = *traj.times.last().unwrap();
    let cut = burn_in * horizon;
    let start = traj.times.partition_point(|&t| t < cut);
    if start + 1 >= traj.len() {
        return Err(Error::input("empty post-burn-in window"));
    }
    Ok(start)
}

/// Cesàro mean of `f` over the post-burn-in window.
pub fn time_average(traj: &Trajectory, f: Functional, burn_in: f64, rule: Rule) -> Result<f64> {
    if let Functional::Stage(i) = f {
        if i >= traj.stages() {
            return Err(Error::input(format!("stage {i} out of range")));
        }
    }
    let start = window_start(traj, burn_in)?;
    let mut integral = 0.0;
    for k in start..traj.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        integral += match rule {
            Rule::LeftEndpoint => f.eval(traj, k) * dt,
            Rule::Trapezoid => 0.5 * (f.eval(traj, k) + f.eval(traj, k + 1)) * dt,
        };
    }
    Ok(integral / (traj.times[traj.len() - 1] - traj.times[start]))
}

/// Long-run fraction of time with `X + V > 0`.
pub fn estimate_pow_limit(traj: &Trajectory, burn_in: f64) -> Result<f64> {
    time_average(traj, Functional::Waiting, burn_in, Rule::LeftEndpoint)
}

/// `1 + ` long-run mean of `X`.
pub fn estimate_sd(traj: &Trajectory, burn_in: f64) -> Result<f64> {
    Ok(1.0 + time_average(traj, Functional::X, burn_in, Rule::LeftEndpoint)?)
}

/// Long-run rate `L(t)/t` over the post-burn-in window.
pub fn boundary_rate(traj: &Trajectory, burn_in: f64) -> Result<f64> {
    let start = window_start(traj, burn_in)?;
    let end = traj.len() - 1;
    Ok((traj.l[end] - traj.l[start]) / (traj.times[end] - traj.times[start]))
}

/// Streaming counterpart of the trajectory estimators, for runs too long to
/// record.
#[derive(Debug, Clone)]
pub struct SteadyStateAccumulator {
    burn_steps: u64,
    last_step: u64,
    delta: f64,
    sample_every: u64,
    steps: u64,
    waiting: f64,
    x: f64,
    v: f64,
    neg_x: f64,
    neg_y: f64,
    l_start: f64,
    l_end: f64,
    samples: Vec<f64>,
}

impl SteadyStateAccumulator {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            burn_steps: cfg.burn_in_steps(),
            last_step: cfg.steps,
            delta: cfg.delta,
            sample_every: 0,
            steps: 0,
            waiting: 0.0,
            x: 0.0,
            v: 0.0,
            neg_x: 0.0,
            neg_y: 0.0,
            l_start: 0.0,
            l_end: 0.0,
            samples: Vec::new(),
        }
    }

    /// Also keep `X` every `every` steps after burn-in.
    pub fn with_samples(mut self, every: u64) -> Self {
        self.sample_every = every;
        self
    }

    pub fn stats(&self) -> SteadyStats {
        let n = self.steps.max(1) as f64;
        let window = self.steps as f64 * self.delta;
        SteadyStats {
            window,
            pow: self.waiting / n,
            mean_x: self.x / n,
            mean_v: self.v / n,
            mean_neg_x: self.neg_x / n,
            mean_neg_y: self.neg_y / n,
            l_rate: if window > 0.0 { (self.l_end - self.l_start) / window } else { 0.0 },
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

impl StepObserver for SteadyStateAccumulator {
    #[inline]
    fn observe(&mut self, rec: &StepRecord<'_>) {
        if rec.step < self.burn_steps {
            return;
        }
        if rec.step == self.burn_steps {
            self.l_start = rec.l;
        }
        if rec.step == self.last_step {
            self.l_end = rec.l;
            return;
        }
        let y = rec.x + rec.v;
        self.steps += 1;
        self.waiting += f64::from(u8::from(y > 0.0));
        self.x += rec.x;
        self.v += rec.v;
        self.neg_x += (-rec.x).max(0.0);
        self.neg_y += (-y).max(0.0);
        if self.sample_every > 0 && (rec.step - self.burn_steps) % self.sample_every == 0 {
            self.samples.push(rec.x);
        }
    }
}

/// Post-burn-in averages of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStats {
    pub window: f64,
    /// Fraction of time with `X + V > 0`.
    pub pow: f64,
    pub mean_x: f64,
    pub mean_v: f64,
    pub mean_neg_x: f64,
    pub mean_neg_y: f64,
    pub l_rate: f64,
}

impl SteadyStats {
    pub fn sd(&self) -> f64 {
        1.0 + self.mean_x
    }
}

/// Summary of a quantity over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub param_set_id: String,
    pub estimate: f64,
    pub replication_values: Vec<f64>,
    pub theoretical: Option<f64>,
    pub max_abs_dev: Option<f64>,
    pub max_rel_dev: Option<f64>,
    /// Half-width of the 95% t-interval over replications; infinite for a
    /// single replication.
    pub ci_halfwidth: f64,
    pub seeds: Vec<u64>,
    /// Resolved configuration, `(key, value)`.
    pub config_echo: Vec<(String, String)>,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str = "param_set_id,estimate,theoretical,max_abs_dev,max_rel_dev,ci95,seeds";

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.param_set_id = id.into();
        self
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_echo(mut self, echo: Vec<(String, String)>) -> Self {
        self.config_echo = echo;
        self
    }

    /// CSV fields in [`Self::CSV_HEADER`] order; seeds are `;`-separated.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
        vec![
            self.param_set_id.clone(),
            format!("{:.6}", self.estimate),
            opt(self.theoretical),
            opt(self.max_abs_dev),
            opt(self.max_rel_dev),
            format!("{:.6}", self.ci_halfwidth),
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        ]
    }

    /// Row of per-replication values in the style of a results table.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        let theo = self.theoretical.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        s.push_str(&format!("{:<12} {:>8} |", self.param_set_id, theo));
        for v in &self.replication_values {
            s.push_str(&format!(" {v:.4}"));
        }
        let dev = self.max_abs_dev.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        s.push_str(&format!(" | max.dev {dev} | mean {:.4} ± {:.4}", self.estimate, self.ci_halfwidth));
        s
    }
}

/// Two-sided 97.5% Student-t quantile with `dof` degrees of freedom.
fn t_quantile_975(dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom").inverse_cdf(0.975)
}

/// Mean, 95% CI half-width and deviations from `theoretical`.
pub fn aggregate(values: &[f64], theoretical: Option<f64>) -> Result<EstimateReport> {
    if values.is_empty() {
        return Err(Error::input("aggregate needs at least one replication"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("replication values must be finite"));
    }
    // order-normalised so the result does not depend on replication order
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let ci_halfwidth = if sorted.len() < 2 {
        f64::INFINITY
    } else {
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        t_quantile_975(n - 1.0) * (var / n).sqrt()
    };
    let max_abs_dev = theoretical.map(|t| sorted.iter().map(|v| (v - t).abs()).fold(0.0, f64::max));
    let max_rel_dev = theoretical.zip(max_abs_dev).map(|(t, d)| d / t.abs());
    Ok(EstimateReport {
        param_set_id: String::new(),
        estimate: mean,
        replication_values: values.to_vec(),
        theoretical,
        max_abs_dev,
        max_rel_dev,
        ci_halfwidth,
        seeds: Vec::new(),
        config_echo: Vec::new(),
    })
}

/// Batch-means estimate `(mean, standard error)` from one long series.
pub fn batch_means(series: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || series.len() < batches {
        return Err(Error::input("batch means needs at least two nonempty batches"));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let k = means.len() as f64;
    let m = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    Ok((m, (var / k).sqrt()))
}

/// One-sample Kolmogorov-Smirnov test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value from the Kolmogorov distribution.
    pub p_value: f64,
}

/// KS test of `samples` against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::input("KS test needs samples"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d) })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = f64::from(j);
        let term = 2.0 * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// KS test against the exponential law with the given mean.
pub fn ks_exponential(samples: &[f64], mean: f64) -> Result<KsResult> {
    if !(mean > 0.0) {
        return Err(Error::input("exponential mean must be positive"));
    }
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x / mean).exp() })
}
