//! Closed-form probability of wait and slowdown, with and without vacations.
//!
//! The no-vacation baselines are exact for the limit diffusions. The
//! vacation-adjusted versions replace `V` by its long-run average `v` in the
//! `X` dynamics, which turns the coupled system back into the no-vacation one
//! with modified drift and rate.
//!
//! Every function requires `b < 0` and rejects `b >= 0` instead of taking the
//! absolute value.

use crate::error::{Error, Result};

/// Standard normal CDF, `0.5 * erfc(-x / sqrt 2)`.
///
/// `libm::erfc` (the fdlibm algorithm) is accurate to a few ulps, so the
/// absolute error stays well below `1e-10` on the whole real line.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn check_drift(b: f64) -> Result<()> {
    if !(b < 0.0) {
        return Err(Error::domain(format!("drift b must be negative for a steady state, got {b}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::domain(format!("{name} must be nonnegative, got {v}")));
    }
    Ok(())
}

/// `1 / (1 + sqrt(2 pi) a Phi(a) exp(a^2 / 2))`.
pub fn halfin_whitt_pow(a: f64) -> f64 {
    let s = (2.0 * std::f64::consts::PI).sqrt();
    1.0 / (1.0 + s * a * normal_cdf(a) * (0.5 * a * a).exp())
}

/// `b1 = sqrt(2 / mu) |b| / sigma`.
pub fn b1(b: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_drift(b)?;
    check_positive("mu", mu)?;
    check_positive("sigma", sigma)?;
    Ok((2.0 / mu).sqrt() * b.abs() / sigma)
}

/// Steady-state probability of wait of the no-vacation HW diffusion
/// `dX = [b + mu X^-] dt + sigma dW`.
pub fn pow0(b: f64, mu: f64, sigma: f64) -> Result<f64> {
    Ok(halfin_whitt_pow(b1(b, mu, sigma)?))
}

/// Effective drift and rate `(b~, mu~)` of the vacation-averaged HW dynamics.
pub fn effective_hw_params(b: f64, mu: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    check_drift(b)?;
    check_positive("mu", mu)?;
    check_nonnegative("beta", beta)?;
    check_positive("gamma", gamma)?;
    let mu_tilde = mu + beta;
    let b_tilde = gamma * mu_tilde / (mu * (gamma + beta)) * b;
    Ok((b_tilde, mu_tilde))
}

/// `b2 = gamma sqrt(2 (mu + beta)) / (mu (gamma + beta)) * |b| / sigma`.
pub fn b2(b: f64, mu: f64, sigma: f64, beta: f64, gamma: f64) -> Result<f64> {
    let (b_tilde, mu_tilde) = effective_hw_params(b, mu, beta, gamma)?;
    b1(b_tilde, mu_tilde, sigma)
}

/// Vacation-adjusted probability of wait; equals `pow0(b, mu + beta, sigma)`
/// when `gamma = mu`.
pub fn pow_tilde(b: f64, mu: f64, sigma: f64, beta: f64, gamma: f64) -> Result<f64> {
    Ok(halfin_whitt_pow(b2(b, mu, sigma, beta, gamma)?))
}

/// Long-run averages `(y, v)` of `(X + V)^-` and `V` in the HW system, solving
/// `b + (mu + beta) y + (mu - gamma) v = 0` and `beta y = gamma v`.
pub fn steady_averages_hw(b: f64, mu: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    check_drift(b)?;
    check_positive("mu", mu)?;
    check_nonnegative("beta", beta)?;
    check_positive("gamma", gamma)?;
    let denom = mu * (gamma + beta);
    Ok((gamma * b.abs() / denom, beta * b.abs() / denom))
}

/// Residuals of the two HW balance equations at `(y, v)`.
pub fn hw_balance_residuals(b: f64, mu: f64, beta: f64, gamma: f64, y: f64, v: f64) -> (f64, f64) {
    (b + (mu + beta) * y + (mu - gamma) * v, beta * y - gamma * v)
}

/// Slowdown of the no-vacation NDS limit, `1 + sigma^2 / (2 |b|)`.
pub fn sd0(b: f64, sigma: f64) -> Result<f64> {
    check_drift(b)?;
    check_nonnegative("sigma", sigma)?;
    Ok(1.0 + sigma * sigma / (2.0 * b.abs()))
}

/// Effective NDS drift `b / (1 + beta / gamma)`.
pub fn effective_nds_drift(b: f64, beta: f64, gamma: f64) -> Result<f64> {
    check_drift(b)?;
    check_nonnegative("beta", beta)?;
    check_positive("gamma", gamma)?;
    Ok(b / (1.0 + beta / gamma))
}

/// Vacation-adjusted slowdown `1 + sigma^2 (1 + beta / gamma) / (2 |b|)`.
pub fn sd_tilde(b: f64, sigma: f64, beta: f64, gamma: f64) -> Result<f64> {
    check_nonnegative("sigma", sigma)?;
    let b_tilde = effective_nds_drift(b, beta, gamma)?;
    Ok(1.0 + sigma * sigma / (2.0 * b_tilde.abs()))
}

/// Long-run averages `(v, l)` of `V` and `L(t)/t` in the NDS system, solving
/// `b + mu v + l = 0` and `-gamma v + beta l / mu = 0`.
pub fn steady_averages_nds(b: f64, mu: f64, beta: f64, gamma: f64) -> Result<(f64, f64)> {
    check_drift(b)?;
    check_positive("mu", mu)?;
    check_nonnegative("beta", beta)?;
    check_positive("gamma", gamma)?;
    let v = beta * b.abs() / (mu * (beta + gamma));
    let l = gamma * b.abs() / (beta + gamma);
    Ok((v, l))
}

/// Residuals of the two NDS balance equations at `(v, l)`.
pub fn nds_balance_residuals(b: f64, mu: f64, beta: f64, gamma: f64, v: f64, l: f64) -> (f64, f64) {
    (b + mu * v + l, -gamma * v + beta * l / mu)
}

/// Every heuristic quantity for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicOutputs {
    pub pow0: f64,
    pub pow_tilde: f64,
    pub sd0: f64,
    pub sd_tilde: f64,
    pub b1: f64,
    pub b2: f64,
    /// Effective HW drift.
    pub b_tilde: f64,
    /// Effective HW rate `mu + beta`.
    pub mu_tilde: f64,
    /// Effective NDS drift.
    pub b_tilde_nds: f64,
    pub y_bar: f64,
    pub v_bar: f64,
    pub l_bar: f64,
}

impl HeuristicOutputs {
    pub fn compute(b: f64, mu: f64, sigma: f64, beta: f64, gamma: f64) -> Result<Self> {
        let (b_tilde, mu_tilde) = effective_hw_params(b, mu, beta, gamma)?;
        let (y_bar, v_bar) = steady_averages_hw(b, mu, beta, gamma)?;
        let (_, l_bar) = steady_averages_nds(b, mu, beta, gamma)?;
        Ok(Self {
            pow0: pow0(b, mu, sigma)?,
            pow_tilde: pow_tilde(b, mu, sigma, beta, gamma)?,
            sd0: sd0(b, sigma)?,
            sd_tilde: sd_tilde(b, sigma, beta, gamma)?,
            b1: b1(b, mu, sigma)?,
            b2: b2(b, mu, sigma, beta, gamma)?,
            b_tilde,
            mu_tilde,
            b_tilde_nds: effective_nds_drift(b, beta, gamma)?,
            y_bar,
            v_bar,
            l_bar,
        })
    }

    /// `(name, value)` pairs in a fixed order, for tables and CSV rows.
    pub fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("pow0", self.pow0),
            ("pow_tilde", self.pow_tilde),
            ("sd0", self.sd0),
            ("sd_tilde", self.sd_tilde),
            ("b1", self.b1),
            ("b2", self.b2),
            ("b_tilde", self.b_tilde),
            ("mu_tilde", self.mu_tilde),
            ("b_tilde_nds", self.b_tilde_nds),
            ("y_bar", self.y_bar),
            ("v_bar", self.v_bar),
            ("l_bar", self.l_bar),
        ]
    }
}
