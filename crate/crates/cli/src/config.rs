//! TOML configuration files and their merge with command-line flags.
//!
//! ```toml
//! [model]
//! b = -2.0
//! mu = 1.0
//! sigma = 3.0
//! beta = 2.0            # or a list, one rate per stage
//! gamma = 0.1
//! transitions = [[0.0]] # m x m, rows summing to zero
//!
//! [sim]
//! regime = "hw"
//! delta = 1e-3
//! steps = 1000000
//! seed = 7
//!
//! [sweep]
//! quantity = "pow"
//! grid = [0.1, 0.5, 1.0]
//! ```

use std::path::Path;

use serde::Deserialize;
use serverpop::limit::{JumpScheme, LimitState, ModelParams, Regime, SimConfig};

use crate::args::{Common, LimitArgs, ModelArgs, PrelimitArgs, QuantityArg, RegimeArg, SchemeArg};
use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub prelimit: PrelimitSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A scalar or a per-stage list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Rates {
    One(f64),
    Many(Vec<f64>),
}

impl Rates {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Rates::One(v) => vec![v],
            Rates::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub b: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: Option<Rates>,
    pub gamma: Option<Rates>,
    pub transitions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub regime: Option<String>,
    pub delta: Option<f64>,
    pub steps: Option<u64>,
    pub burn_in: Option<f64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub scheme: Option<String>,
    pub stride: Option<u64>,
    pub reference: Option<bool>,
    pub x0: Option<f64>,
    pub v0: Option<Rates>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrelimitSection {
    pub n: Option<u64>,
    pub alpha: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub sample_dt: Option<f64>,
    pub events: Option<bool>,
    pub decoupling: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Only `gamma` is supported.
    pub parameter: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub quantity: Option<String>,
    pub simulate: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn model(file: &ModelSection, flags: &ModelArgs) -> Result<ModelParams, CliError> {
    let b = flags.b.or(file.b).unwrap_or(-2.0);
    let mu = flags.mu.or(file.mu).unwrap_or(1.0);
    let sigma = flags.sigma.or(file.sigma).unwrap_or(3.0);
    let beta = flags.beta.map(|v| vec![v]).or(file.beta.clone().map(Rates::into_vec)).unwrap_or(vec![2.0]);
    let gamma = flags.gamma.map(|v| vec![v]).or(file.gamma.clone().map(Rates::into_vec)).unwrap_or(vec![0.1]);
    let m = beta.len();
    let transitions = file.transitions.clone().unwrap_or_else(|| vec![vec![0.0; m]; m]);
    Ok(ModelParams::multi_stage(b, mu, sigma, beta, gamma, transitions)?)
}

fn regime(flag: Option<RegimeArg>, file: Option<&str>) -> Result<Regime, CliError> {
    Ok(match (flag, file) {
        (Some(RegimeArg::Hw), _) => Regime::Hw,
        (Some(RegimeArg::NearHw), _) => Regime::NearHw,
        (Some(RegimeArg::Nds), _) => Regime::Nds,
        (None, Some(s)) => s.parse()?,
        (None, None) => Regime::Hw,
    })
}

pub fn scheme(flag: Option<SchemeArg>, file: Option<&str>) -> Result<JumpScheme, CliError> {
    Ok(match (flag, file) {
        (Some(SchemeArg::Bernoulli), _) => JumpScheme::Bernoulli,
        (Some(SchemeArg::Threshold), _) => JumpScheme::Threshold,
        (None, Some(s)) => s.parse()?,
        (None, None) => JumpScheme::default(),
    })
}

pub fn quantity(flag: Option<QuantityArg>, file: Option<&str>) -> Result<QuantityArg, CliError> {
    match (flag, file) {
        (Some(q), _) => Ok(q),
        (None, Some("pow")) | (None, None) => Ok(QuantityArg::Pow),
        (None, Some("sd")) => Ok(QuantityArg::Sd),
        (None, Some(s)) => Err(CliError::Config(format!("unknown quantity '{s}', expected pow or sd"))),
    }
}

pub fn scale(common: &Common, file: &SimSection, default: f64) -> Result<f64, CliError> {
    if common.paper_scale {
        return Ok(1.0);
    }
    let s = common.scale.or(file.scale).unwrap_or(default);
    if !(s > 0.0) || !s.is_finite() {
        return Err(CliError::Config(format!("--scale must be positive, got {s}")));
    }
    Ok(s)
}

/// Limit-simulation settings; `--scale` multiplies the step count.
pub fn sim(common: &Common, file: &SimSection, flags: &LimitArgs) -> Result<SimConfig, CliError> {
    let regime = regime(flags.regime, file.regime.as_deref())?;
    let delta = flags.delta.or(file.delta).unwrap_or(1e-3);
    let steps = flags.steps.or(file.steps).unwrap_or(1_000_000);
    let steps = ((steps as f64 * scale(common, file, 1.0)?).round() as u64).max(1);
    let mut cfg = SimConfig::new(regime, delta, steps)
        .with_seed(common.seed.or(file.seed).unwrap_or(0))
        .with_replications(common.replications.or(file.replications).unwrap_or(1))
        .with_burn_in(flags.burn_in.or(file.burn_in).unwrap_or(SimConfig::DEFAULT_BURN_IN))
        .with_scheme(scheme(common.scheme, file.scheme.as_deref())?)
        .with_stride(flags.stride.or(file.stride).unwrap_or(100));
    if flags.reference || file.reference.unwrap_or(false) {
        cfg = cfg.reference();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn initial_state(file: &SimSection, flags: &LimitArgs, stages: usize) -> Result<LimitState, CliError> {
    let x = flags.x0.or(file.x0).unwrap_or(0.0);
    let u = match (flags.v0, &file.v0) {
        (Some(v), _) => vec![v],
        (None, Some(r)) => r.clone().into_vec(),
        (None, None) => vec![0.0; stages],
    };
    if u.len() != stages {
        return Err(CliError::Config(format!("initial state has {} stages, model has {stages}", u.len())));
    }
    Ok(LimitState::multi(x, u))
}

/// Merged pre-limit settings.
#[derive(Debug, Clone)]
pub struct PrelimitSettings {
    pub n: u64,
    pub alpha: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub sample_dt: f64,
    pub events: bool,
    pub decoupling: Option<f64>,
}

pub fn prelimit(file: &PrelimitSection, flags: &PrelimitArgs) -> PrelimitSettings {
    PrelimitSettings {
        n: flags.n.or(file.n).unwrap_or(400),
        alpha: flags.alpha.or(file.alpha).unwrap_or(1.0),
        horizon: flags.horizon.or(file.horizon).unwrap_or(1000.0),
        burn_in: flags.burn_in.or(file.burn_in).unwrap_or(0.2),
        sample_dt: flags.sample_dt.or(file.sample_dt).unwrap_or(1.0),
        events: flags.events || file.events.unwrap_or(false),
        decoupling: flags.decoupling.or(file.decoupling),
    }
}
