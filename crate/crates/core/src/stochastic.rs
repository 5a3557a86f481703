//! Seeded random streams and the random drivers shared by both simulators.
//!
//! Every driver (Brownian motion, arrivals, services, vacation beginnings and
//! endings, stage transitions) draws from its own [`RngStream`]. A stream is a
//! ChaCha8 generator keyed by the 64-bit seed and positioned on the ChaCha
//! stream selected by `stream_id`, so streams with different ids never share
//! keystream and can be created independently on any worker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

/// Stream ids for the individual random drivers of one replication.
///
/// The replication index occupies the high bits so that `(seed, replication,
/// driver)` always maps to a distinct ChaCha stream.
pub mod driver {
    pub const BROWNIAN: u32 = 1;
    pub const ARRIVALS: u32 = 2;
    pub const SERVICE: u32 = 3;
    pub const VACATION_BEGIN: u32 = 4;
    pub const VACATION_END: u32 = 5;
    pub const INITIAL_STATE: u32 = 6;

    /// Unit Poisson process `S_ij` between vacation stages, with stage 0
    /// standing for the idle pool. Single-stage vacations use `pair(0, 1)` and
    /// `pair(1, 0)` through [`VACATION_BEGIN`] and [`VACATION_END`] instead.
    pub fn pair(from: usize, to: usize) -> u32 {
        0x1000 + (from as u32) * 0x100 + to as u32
    }

    pub fn stream_id(replication: u64, driver: u32) -> u64 {
        (replication << 24) | u64::from(driver)
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// Stream for `driver` within replication `replication`.
    pub fn for_driver(seed: u64, replication: u64, driver: u32) -> Self {
        Self::new(seed, driver::stream_id(replication, driver))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Exp(1) variate.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// `N(0, dt)` increment of a standard Brownian motion.
pub fn brownian_increment(stream: &mut RngStream, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::input(format!("Brownian increment needs dt > 0, got {dt}")));
    }
    Ok(stream.standard_normal() * dt.sqrt())
}

/// Law of the unit-mean interarrival variates `IA(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterarrivalLaw {
    Exponential,
    /// Sum of `k` exponential phases, SCV `1/k`.
    Erlang { k: u32 },
    /// Two exponential phases with balanced means, SCV `c2 > 1`.
    HyperExponential { c2: f64 },
    Deterministic,
}

impl InterarrivalLaw {
    /// The law of the given family matching a squared coefficient of variation.
    pub fn with_scv(c2: f64) -> Result<Self> {
        const EPS: f64 = 1e-12;
        if !(c2 >= 0.0) || !c2.is_finite() {
            return Err(Error::input(format!("interarrival SCV must be finite and >= 0, got {c2}")));
        }
        if c2 == 0.0 {
            return Ok(Self::Deterministic);
        }
        if (c2 - 1.0).abs() < EPS {
            return Ok(Self::Exponential);
        }
        if c2 > 1.0 {
            return Ok(Self::HyperExponential { c2 });
        }
        let k = (1.0 / c2).round();
        if (k * c2 - 1.0).abs() < 1e-9 {
            return Ok(Self::Erlang { k: k as u32 });
        }
        Err(Error::input(format!(
            "SCV {c2} in (0,1) is only supported as 1/k (Erlang-k)"
        )))
    }

    pub fn scv(&self) -> f64 {
        match *self {
            Self::Exponential => 1.0,
            Self::Erlang { k } => 1.0 / f64::from(k),
            Self::HyperExponential { c2 } => c2,
            Self::Deterministic => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Erlang { k } if k == 0 => Err(Error::input("Erlang law needs k >= 1")),
            Self::HyperExponential { c2 } if !(c2 > 1.0) || !c2.is_finite() => Err(Error::input(
                format!("hyperexponential law needs SCV > 1, got {c2}"),
            )),
            _ => Ok(()),
        }
    }

    /// Unit-mean variate.
    fn sample_unit(&self, stream: &mut RngStream) -> f64 {
        match *self {
            Self::Exponential => stream.exp1(),
            Self::Erlang { k } => {
                let kf = f64::from(k);
                (0..k).map(|_| stream.exp1()).sum::<f64>() / kf
            }
            Self::HyperExponential { c2 } => {
                // balanced means: p/rate1 = (1-p)/rate2 = 1/2
                let p = 0.5 * (1.0 + ((c2 - 1.0) / (c2 + 1.0)).sqrt());
                let u = stream.uniform();
                let e = stream.exp1();
                if u < p {
                    e / (2.0 * p)
                } else {
                    e / (2.0 * (1.0 - p))
                }
            }
            Self::Deterministic => 1.0,
        }
    }
}

/// Next interarrival time `IA(k) / rate`.
pub fn next_interarrival(law: &InterarrivalLaw, rate: f64, stream: &mut RngStream) -> Result<f64> {
    law.validate()?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::input(format!("arrival rate must be positive, got {rate}")));
    }
    loop {
        let t = law.sample_unit(stream) / rate;
        // Exp(1) can return exactly 0; interarrival times are strictly positive
        if t > 0.0 {
            return Ok(t);
        }
    }
}

/// A unit Poisson process read through a time change.
///
/// The clock is fed increments of its argument (for instance `beta * I(s) ds`)
/// and jumps whenever the accumulated argument crosses the next point of the
/// process; points are cumulative sums of IID Exp(1) variates.
#[derive(Debug, Clone)]
pub struct PoissonClock {
    cumulative: f64,
    next_threshold: f64,
    jumps: u64,
    stream: RngStream,
}

impl PoissonClock {
    pub fn new(mut stream: RngStream) -> Self {
        let next_threshold = stream.exp1();
        Self { cumulative: 0.0, next_threshold, jumps: 0, stream }
    }

    pub fn cumulative_argument(&self) -> f64 {
        self.cumulative
    }

    pub fn next_threshold(&self) -> f64 {
        self.next_threshold
    }

    /// Total jumps so far, i.e. `S(cumulative_argument)`.
    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    /// Argument still needed before the next jump.
    #[inline]
    pub fn remaining(&self) -> f64 {
        self.next_threshold - self.cumulative
    }

    /// Adds `delta_arg` to the argument and returns the jumps crossed.
    pub fn advance(&mut self, delta_arg: f64) -> Result<u64> {
        if !(delta_arg >= 0.0) {
            return Err(Error::input(format!(
                "Poisson clock argument increment must be >= 0, got {delta_arg}"
            )));
        }
        Ok(self.advance_unchecked(delta_arg))
    }

    #[inline]
    pub(crate) fn advance_unchecked(&mut self, delta_arg: f64) -> u64 {
        self.cumulative += delta_arg;
        let mut k = 0;
        while self.next_threshold <= self.cumulative {
            self.next_threshold += self.stream.exp1();
            k += 1;
        }
        self.jumps += k;
        k
    }

    /// Moves the argument exactly onto the next point and records the jump.
    ///
    /// Used by event-driven loops that computed the jump time themselves, so
    /// that round-off cannot leave the clock a hair short of its threshold.
    #[inline]
    pub(crate) fn fire(&mut self) {
        self.cumulative = self.next_threshold;
        self.next_threshold += self.stream.exp1();
        self.jumps += 1;
    }

    pub(crate) fn stream_mut(&mut self) -> &mut RngStream {
        &mut self.stream
    }

    /// Adds argument known not to reach the threshold (up to round-off).
    #[inline]
    pub(crate) fn accrue(&mut self, delta_arg: f64) {
        self.cumulative += delta_arg;
    }
}

static BERNOULLI_CLIP_WARNED: AtomicBool = AtomicBool::new(false);

/// Clips a per-step jump probability to 1, warning once per process.
#[inline]
pub(crate) fn clip_probability(p: f64) -> f64 {
    if p > 1.0 {
        if !BERNOULLI_CLIP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("per-step jump probability {p:.3} exceeds 1 and was clipped; reduce the time step");
        }
        1.0
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn brownian_moments() {
        let mut s = RngStream::new(7, 1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| brownian_increment(&mut s, 1.0).unwrap()).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.004, "mean {m}");
        assert!((v - 1.0).abs() < 0.005, "variance {v}");
    }

    #[test]
    fn brownian_is_deterministic_per_stream() {
        let a = brownian_increment(&mut RngStream::new(11, 3), 0.5).unwrap();
        let b = brownian_increment(&mut RngStream::new(11, 3), 0.5).unwrap();
        assert_eq!(a, b);
        assert!(brownian_increment(&mut RngStream::new(11, 3), 0.0).is_err());
        assert!(brownian_increment(&mut RngStream::new(11, 3), -1.0).is_err());
    }

    #[test]
    fn exponential_interarrival_mean() {
        let mut s = RngStream::new(3, 2);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| next_interarrival(&InterarrivalLaw::Exponential, 2.0, &mut s).unwrap())
            .collect();
        let (m, _) = mean_var(&xs);
        // sd of the mean is 0.5 / sqrt(n)
        assert!((m - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {m}");
    }

    #[test]
    fn deterministic_interarrival() {
        let mut s = RngStream::new(3, 2);
        for _ in 0..100 {
            assert_eq!(next_interarrival(&InterarrivalLaw::Deterministic, 4.0, &mut s).unwrap(), 0.25);
        }
    }

    #[test]
    fn erlang_and_hyperexponential_scv() {
        let n = 1_000_000;
        for (law, c2) in [
            (InterarrivalLaw::Erlang { k: 2 }, 0.5_f64),
            (InterarrivalLaw::HyperExponential { c2: 8.0 }, 8.0),
        ] {
            let mut s = RngStream::new(5, 9);
            let xs: Vec<f64> = (0..n).map(|_| next_interarrival(&law, 1.0, &mut s).unwrap()).collect();
            assert!(xs.iter().all(|&x| x > 0.0));
            let (m, v) = mean_var(&xs);
            assert!((m - 1.0).abs() < 3.0 * c2.sqrt() / (n as f64).sqrt(), "{law:?} mean {m}");
            let scv = v / (m * m);
            // SCV of Erlang-2 is 1/2; the hyperexponential case has a heavy fourth moment
            let tol = if c2 < 1.0 { 0.005 } else { 0.25 };
            assert!((scv - c2).abs() < tol, "{law:?} scv {scv}");
        }
    }

    #[test]
    fn scv_selection() {
        assert_eq!(InterarrivalLaw::with_scv(1.0).unwrap(), InterarrivalLaw::Exponential);
        assert_eq!(InterarrivalLaw::with_scv(0.25).unwrap(), InterarrivalLaw::Erlang { k: 4 });
        assert_eq!(InterarrivalLaw::with_scv(0.0).unwrap(), InterarrivalLaw::Deterministic);
        assert_eq!(InterarrivalLaw::with_scv(8.0).unwrap().scv(), 8.0);
        assert!(InterarrivalLaw::with_scv(0.3).is_err());
        assert!(InterarrivalLaw::with_scv(-1.0).is_err());
        let mut s = RngStream::new(1, 1);
        assert!(next_interarrival(&InterarrivalLaw::Erlang { k: 0 }, 1.0, &mut s).is_err());
        assert!(next_interarrival(&InterarrivalLaw::Exponential, 0.0, &mut s).is_err());
    }

    #[test]
    fn poisson_clock_basics() {
        let mut c = PoissonClock::new(RngStream::new(1, 4));
        assert_eq!(c.advance(0.0).unwrap(), 0);
        assert!(c.advance(-1e-9).is_err());

        let mut total = 0;
        for _ in 0..1_000_000 {
            total += c.advance(1.0).unwrap();
        }
        assert_eq!(total, c.jumps());
        // Poisson(1e6): sd 1e3
        assert!((total as f64 - 1e6).abs() < 3e3, "jumps {total}");
    }

    #[test]
    fn poisson_clocks_replay() {
        let mut a = PoissonClock::new(RngStream::new(9, 4));
        let mut b = PoissonClock::new(RngStream::new(9, 4));
        let args = [0.3, 2.0, 0.0, 5.5, 0.01, 1.7];
        let ka: Vec<u64> = args.iter().map(|&d| a.advance(d).unwrap()).collect();
        let kb: Vec<u64> = args.iter().map(|&d| b.advance(d).unwrap()).collect();
        assert_eq!(ka, kb);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut a = RngStream::for_driver(42, 0, driver::ARRIVALS);
        let mut b = RngStream::for_driver(42, 0, driver::SERVICE);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n as f64 - 1.0);
        let corr = cov / (vx * vy).sqrt();
        assert!(corr.abs() <= 0.01, "corr {corr}");
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_probability(0.3), 0.3);
        assert_eq!(clip_probability(1.7), 1.0);
    }
}
