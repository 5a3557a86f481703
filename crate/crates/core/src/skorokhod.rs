//! One-dimensional Skorokhod map with reflection at zero.
//!
//! For an input path `x`, the regulator is `y(t) = sup_{s <= t} (x(s))^-` and
//! the constrained path is `z = x + y`. On a grid the supremum is the exact
//! running maximum `y_k = max(y_{k-1}, (x_k)^-)`; nothing is interpolated
//! between samples.

use crate::error::{Error, Result};

/// A path sampled at strictly increasing times starting from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::input("sampled path is empty"));
        }
        if times.len() != values.len() {
            return Err(Error::input(format!(
                "sampled path has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::input(format!("sampled path starts at t={}, expected 0", times[0])));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::input(format!(
                "sample times not strictly increasing at index {}",
                k + 1
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite path value at index {k}")));
        }
        Ok(Self { times, values })
    }

    /// Path on the grid `0, dt, 2dt, ...`.
    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::input(format!("grid step must be positive, got {dt}")));
        }
        let times = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest absolute pointwise difference, for paths on the same grid.
    pub fn sup_distance(&self, other: &SampledPath) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::input("paths are not sampled on a common grid"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// The pair `(z, y) = (Gamma_1(x), Gamma_2(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkorokhodOutput {
    /// Constrained path, nonnegative.
    pub z: SampledPath,
    /// Regulator: starts at 0, nondecreasing, increases only where `z = 0`.
    pub y: SampledPath,
}

pub fn skorokhod_map(x: &SampledPath) -> SkorokhodOutput {
    let mut y = Vec::with_capacity(x.len());
    let mut z = Vec::with_capacity(x.len());
    let mut sup = 0.0_f64;
    for &v in x.values() {
        sup = sup.max(-v);
        y.push(sup);
        z.push(v + sup);
    }
    SkorokhodOutput {
        z: SampledPath { times: x.times.clone(), values: z },
        y: SampledPath { times: x.times.clone(), values: y },
    }
}

/// `sup - inf` of the samples with times in `[s, t]`.
pub fn oscillation(x: &SampledPath, s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0 && s < t) {
        return Err(Error::input(format!("degenerate interval [{s}, {t}]")));
    }
    let span = *x.times.last().expect("nonempty path");
    if t > span {
        return Err(Error::input(format!("interval end {t} beyond path span {span}")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&tk, &v) in x.times.iter().zip(&x.values) {
        if tk >= s && tk <= t {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        return Err(Error::input(format!("no samples in [{s}, {t}]")));
    }
    Ok(hi - lo)
}

/// Discrete form of `int z dy = 0`: `sum_k z(t_k) (y(t_k) - y(t_{k-1})) <= tol`.
pub fn verify_complementarity(out: &SkorokhodOutput, tol: f64) -> bool {
    let z = out.z.values();
    let y = out.y.values();
    let sum: f64 = (1..z.len()).map(|k| z[k] * (y[k] - y[k - 1])).sum();
    sum <= tol
}
