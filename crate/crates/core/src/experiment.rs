//! Reproduction presets, parameter sweeps and CSV output.
//!
//! Step counts of the presets are stated at full size and multiplied by a
//! scale factor; [`DESK_SCALE`] is the default. Scaling changes only the
//! number of steps, never parameters or the time step.

use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::{aggregate, EstimateReport, SteadyStateAccumulator};
use crate::heuristics;
use crate::limit::{
    run_replications, simulate, LimitState, ModelParams, Regime, SimConfig, Trajectory,
};

/// Default multiplier on the full-size step counts.
pub const DESK_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table1,
    Table2,
    Fig1,
    Fig2,
    Fig3,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Table1, Preset::Table2, Preset::Fig1, Preset::Fig2, Preset::Fig3];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Preset::Table1 => "POW of the no-vacation HW diffusion, 8 runs, against pow0",
            Preset::Table2 => "slowdown of reflected Brownian motion, 8 runs, against sd0",
            Preset::Fig1 => "sample paths of the HW and NDS pairs (X, V)",
            Preset::Fig2 => "HW POW against pow_tilde as a function of gamma",
            Preset::Fig3 => "NDS slowdown against sd_tilde as a function of gamma",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(Preset::name).collect();
                Error::input(format!("unknown preset '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// Scaled step count, at least one step.
pub fn scaled_steps(full: u64, scale: f64) -> Result<u64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::input(format!("scale must be positive, got {scale}")));
    }
    Ok(((full as f64 * scale).round() as u64).max(1))
}

/// One replicated steady-state estimate against a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub id: String,
    pub model: ModelParams,
    pub sim: SimConfig,
    pub quantity: Quantity,
    /// Full-size step count before scaling.
    pub full_steps: u64,
}

/// Steady-state quantity estimated from a limit trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Fraction of time with `X + V > 0`.
    Pow,
    /// `1 + ` mean of `X`.
    Sd,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Pow => "pow",
            Quantity::Sd => "sd",
        }
    }
}

impl TableSpec {
    pub fn table1(scale: f64) -> Result<Self> {
        let full = 200_000_000;
        Ok(Self {
            id: "table1".into(),
            model: ModelParams::single_stage(-2.0, 1.0, 3.0, 2.0, 0.1),
            sim: SimConfig::new(Regime::Hw, 1e-3, scaled_steps(full, scale)?).reference().with_replications(8),
            quantity: Quantity::Pow,
            full_steps: full,
        })
    }

    pub fn table2(scale: f64) -> Result<Self> {
        let full = 100_000_000;
        Ok(Self {
            id: "table2".into(),
            model: ModelParams::single_stage(-6.0, 2.0, 3.0, 5.0, 3.0),
            sim: SimConfig::new(Regime::Nds, 1e-4, scaled_steps(full, scale)?).reference().with_replications(8),
            quantity: Quantity::Sd,
            full_steps: full,
        })
    }

    /// Closed-form value without vacations.
    pub fn theoretical(&self) -> Result<f64> {
        let m = &self.model;
        match self.quantity {
            Quantity::Pow => heuristics::pow0(m.b, m.mu, m.sigma),
            Quantity::Sd => heuristics::sd0(m.b, m.sigma),
        }
    }

    pub fn run(&self) -> Result<EstimateReport> {
        let values = replicate(&self.model, &self.sim, self.quantity)?;
        Ok(aggregate(&values, Some(self.theoretical()?))?
            .with_id(self.id.clone())
            .with_seeds(vec![self.sim.seed])
            .with_echo(config_echo(&self.model, &self.sim)))
    }
}

/// Runs `sim.replications` replications from the origin and returns the
/// per-replication estimates of `quantity`.
pub fn replicate(model: &ModelParams, sim: &SimConfig, quantity: Quantity) -> Result<Vec<f64>> {
    let init = LimitState::origin(model.stages());
    let runs = run_replications(model, &init, sim, |_| SteadyStateAccumulator::new(sim))?;
    Ok(runs
        .iter()
        .map(|(acc, _)| {
            let s = acc.stats();
            match quantity {
                Quantity::Pow => s.pow,
                Quantity::Sd => s.sd(),
            }
        })
        .collect())
}

/// Sweep of a limit-system estimate and its heuristic over `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub id: String,
    pub model: ModelParams,
    pub sim: SimConfig,
    pub quantity: Quantity,
    pub grid: Vec<f64>,
    /// When false only the heuristic column is computed.
    pub simulate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub sim_value: Option<f64>,
    pub heuristic_value: f64,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub ci95: Option<f64>,
    pub report: Option<EstimateReport>,
}

impl SweepSpec {
    pub const FIG2_GRID: [f64; 11] = [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    pub const FIG3_GRID: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

    /// POW sweep at `b = -2`, `beta = 2`.
    pub fn fig2(mu: f64, sigma: f64, scale: f64) -> Result<Self> {
        Ok(Self {
            id: format!("fig2_mu{mu}_sigma{sigma}"),
            model: ModelParams::single_stage(-2.0, mu, sigma, 2.0, 1.0),
            sim: SimConfig::new(Regime::Hw, 1e-3, scaled_steps(200_000_000, scale)?).with_replications(4),
            quantity: Quantity::Pow,
            grid: Self::FIG2_GRID.to_vec(),
            simulate: true,
        })
    }

    /// Slowdown sweep at `b = -6`, `beta = 5`.
    pub fn fig3(mu: f64, sigma: f64, scale: f64) -> Result<Self> {
        Ok(Self {
            id: format!("fig3_mu{mu}_sigma{sigma}"),
            model: ModelParams::single_stage(-6.0, mu, sigma, 5.0, 1.0),
            sim: SimConfig::new(Regime::Nds, 1e-4, scaled_steps(100_000_000, scale)?).with_replications(4),
            quantity: Quantity::Sd,
            grid: Self::FIG3_GRID.to_vec(),
            simulate: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::input("sweep grid is empty"));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("sweep grid must be strictly increasing"));
        }
        if self.model.stages() != 1 {
            return Err(Error::input("gamma sweeps need a single-stage model"));
        }
        if self.grid.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::input("gamma grid values must be positive"));
        }
        Ok(())
    }

    fn model_at(&self, gamma: f64) -> ModelParams {
        ModelParams { gamma: vec![gamma], ..self.model.clone() }
    }

    pub fn heuristic_at(&self, gamma: f64) -> Result<f64> {
        let m = &self.model;
        match self.quantity {
            Quantity::Pow => heuristics::pow_tilde(m.b, m.mu, m.sigma, m.beta[0], gamma),
            Quantity::Sd => heuristics::sd_tilde(m.b, m.sigma, m.beta[0], gamma),
        }
    }

    pub fn run(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        self.grid
            .iter()
            .map(|&gamma| {
                let heuristic_value = self.heuristic_at(gamma)?;
                if !self.simulate {
                    return Ok(SweepPoint {
                        gamma,
                        sim_value: None,
                        heuristic_value,
                        abs_err: None,
                        rel_err: None,
                        ci95: None,
                        report: None,
                    });
                }
                let model = self.model_at(gamma);
                let values = replicate(&model, &self.sim, self.quantity)?;
                let report = aggregate(&values, Some(heuristic_value))?
                    .with_id(format!("{}_gamma{gamma}", self.id))
                    .with_seeds(vec![self.sim.seed])
                    .with_echo(config_echo(&model, &self.sim));
                let err = report.estimate - heuristic_value;
                Ok(SweepPoint {
                    gamma,
                    sim_value: Some(report.estimate),
                    heuristic_value,
                    abs_err: Some(err.abs()),
                    rel_err: Some(err.abs() / heuristic_value.abs()),
                    ci95: Some(report.ci_halfwidth),
                    report: Some(report),
                })
            })
            .collect()
    }
}

/// Sample-path export settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub id: String,
    pub model: ModelParams,
    pub sim: SimConfig,
    pub init: LimitState,
}

impl PathSpec {
    /// HW (`b = -0.3`) and NDS (`b = -3`) paths for `sigma` in {1, 3}, `T = 200`.
    pub fn fig1(stride: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for (regime, b) in [(Regime::Hw, -0.3), (Regime::Nds, -3.0)] {
            for sigma in [1.0, 3.0] {
                out.push(Self {
                    id: format!("fig1_{}_sigma{sigma}", regime.name()),
                    model: ModelParams::single_stage(b, 2.0, sigma, 2.0, 0.1),
                    sim: SimConfig::new(regime, 1e-3, 200_000).with_stride(stride),
                    init: LimitState::origin(1),
                });
            }
        }
        out
    }
}

/// Simulates one path and re-checks NDS jump causality on it.
pub fn emit_paths(spec: &PathSpec) -> Result<Trajectory> {
    let traj = simulate(&spec.model, &spec.init, &spec.sim)?;
    if spec.sim.regime == Regime::Nds {
        check_jump_causality(&traj)?;
    }
    Ok(traj)
}

/// Every upward vacation jump must sit on a step with `x = 0` and a positive
/// regulator increment.
pub fn check_jump_causality(traj: &Trajectory) -> Result<()> {
    match traj.jumps.iter().find(|j| j.delta > 0 && !(j.x == 0.0 && j.dl > 0.0)) {
        Some(j) => Err(Error::Numerical {
            step: j.step,
            what: format!("upward jump at x = {} with regulator increment {}", j.x, j.dl),
        }),
        None => Ok(()),
    }
}

/// Resolved configuration as `(key, value)` pairs.
pub fn config_echo(model: &ModelParams, sim: &SimConfig) -> Vec<(String, String)> {
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    vec![
        ("regime".into(), sim.regime.name().into()),
        ("reference_only".into(), sim.reference_only.to_string()),
        ("b".into(), model.b.to_string()),
        ("mu".into(), model.mu.to_string()),
        ("sigma".into(), model.sigma.to_string()),
        ("beta".into(), list(&model.beta)),
        ("gamma".into(), list(&model.gamma)),
        ("transitions".into(), list(&model.transitions)),
        ("delta".into(), sim.delta.to_string()),
        ("steps".into(), sim.steps.to_string()),
        ("horizon".into(), sim.horizon().to_string()),
        ("burn_in".into(), sim.burn_in.to_string()),
        ("seed".into(), sim.seed.to_string()),
        ("replications".into(), sim.replications.to_string()),
        ("scheme".into(), sim.scheme.name().into()),
        ("stride".into(), sim.stride.to_string()),
        ("time_average".into(), "left-endpoint".into()),
    ]
}

/// Writes `# key = value` comment lines.
pub fn write_header<W: Write>(w: &mut W, title: &str, echo: &[(String, String)]) -> io::Result<()> {
    writeln!(w, "# {title}")?;
    for (k, v) in echo {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// Trajectory CSV: `t,x,v,l`, or `t,x,u1,..,um,l` with several stages.
pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    let m = traj.stages();
    if m == 1 {
        writeln!(w, "t,x,v,l")?;
    } else {
        let us: Vec<String> = (1..=m).map(|i| format!("u{i}")).collect();
        writeln!(w, "t,x,{},l", us.join(","))?;
    }
    for k in 0..traj.len() {
        write!(w, "{},{}", traj.times[k], traj.x[k])?;
        for ui in &traj.u {
            write!(w, ",{}", ui[k])?;
        }
        writeln!(w, ",{}", traj.l[k])?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str = "gamma,sim_value,heuristic_value,abs_err,rel_err,ci95";

/// Sweep CSV rows sorted by grid value; empty cells for skipped simulation.
pub fn write_sweep<W: Write>(w: &mut W, points: &[SweepPoint]) -> io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    writeln!(w, "{SWEEP_HEADER}")?;
    let mut sorted: Vec<&SweepPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    for p in sorted {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.gamma,
            opt(p.sim_value),
            p.heuristic_value,
            opt(p.abs_err),
            opt(p.rel_err),
            opt(p.ci95)
        )?;
    }
    Ok(())
}

pub fn write_reports<W: Write>(w: &mut W, reports: &[EstimateReport]) -> io::Result<()> {
    writeln!(w, "{}", EstimateReport::CSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.csv_fields().join(","))?;
    }
    Ok(())
}

/// Largest absolute and relative sweep errors, ignoring skipped points.
pub fn sweep_max_errors(points: &[SweepPoint]) -> (f64, f64) {
    points.iter().fold((0.0, 0.0), |(a, r), p| {
        (a.max(p.abs_err.unwrap_or(0.0)), r.max(p.rel_err.unwrap_or(0.0)))
    })
}
