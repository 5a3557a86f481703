use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serverpop::estimators::{aggregate, EstimateReport, SteadyStateAccumulator};
use serverpop::experiment::{
    check_jump_causality, config_echo, emit_paths, sweep_max_errors, write_header, write_reports, write_sweep,
    write_trajectory, PathSpec, Preset, Quantity, SweepSpec, TableSpec, DESK_SCALE,
};
use serverpop::heuristics::{self, HeuristicOutputs};
use serverpop::limit::{run_replications, simulate, LimitState, ModelParams, Regime, SimConfig};
use serverpop::prelimit::{
    decoupling_check, run_prelimit, run_prelimit_replications, EventKind, PrelimitConfig, PrelimitParams,
    SystemState,
};

use crate::args::{Cli, Command, Common, QuantityArg};
use crate::config::{self, FileConfig};
use crate::CliError;

type Echo = Vec<(String, String)>;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SimulateLimit { common, model, sim, trajectory } => {
            let file = config::load(common.config.as_deref())?;
            let p = config::model(&file.model, &model)?;
            let cfg = config::sim(&common, &file.sim, &sim)?;
            let init = config::initial_state(&file.sim, &sim, p.stages())?;
            simulate_limit(&p, &init, &cfg, trajectory, &out_dir(&common, &file))
        }
        Command::SimulatePrelimit { common, model, pre } => {
            let file = config::load(common.config.as_deref())?;
            let p = config::model(&file.model, &model)?;
            let settings = config::prelimit(&file.prelimit, &pre);
            let seed = common.seed.or(file.sim.seed).unwrap_or(0);
            let reps = common.replications.or(file.sim.replications).unwrap_or(1);
            simulate_prelimit(&p, &settings, seed, reps, &out_dir(&common, &file))
        }
        Command::Heuristic { common, model } => {
            let file = config::load(common.config.as_deref())?;
            let p = config::model(&file.model, &model)?;
            heuristic(&p, &out_dir(&common, &file))
        }
        Command::Sweep { common, model, sim, quantity, grid, no_sim } => {
            let file = config::load(common.config.as_deref())?;
            if let Some(param) = file.sweep.parameter.as_deref() {
                if param != "gamma" {
                    return Err(CliError::Config(format!("sweep parameter '{param}' is not supported; use gamma")));
                }
            }
            let p = config::model(&file.model, &model)?;
            let q = config::quantity(quantity, file.sweep.quantity.as_deref())?;
            let mut cfg = config::sim(&common, &file.sim, &sim)?;
            cfg.regime = match q {
                QuantityArg::Pow => Regime::Hw,
                QuantityArg::Sd => Regime::Nds,
            };
            if common.replications.or(file.sim.replications).is_none() {
                cfg.replications = 4;
            }
            let grid = grid.or(file.sweep.grid.clone()).unwrap_or_else(|| match q {
                QuantityArg::Pow => SweepSpec::FIG2_GRID.to_vec(),
                QuantityArg::Sd => SweepSpec::FIG3_GRID.to_vec(),
            });
            let spec = SweepSpec {
                id: "sweep".into(),
                model: p,
                sim: cfg,
                quantity: match q {
                    QuantityArg::Pow => Quantity::Pow,
                    QuantityArg::Sd => Quantity::Sd,
                },
                grid,
                simulate: !no_sim && file.sweep.simulate.unwrap_or(true),
            };
            sweep(&spec, &out_dir(&common, &file))
        }
        Command::Preset { name, common, stride } => {
            let file = config::load(common.config.as_deref())?;
            let preset: Preset = name.parse()?;
            if common.paper_scale {
                log::warn!("running {} at full size; this can take a long time", preset.name());
            }
            let scale = config::scale(&common, &file.sim, DESK_SCALE)?;
            preset_run(preset, scale, &common, &file, stride, &out_dir(&common, &file))
        }
        Command::Paths { common, model, sim } => {
            let file = config::load(common.config.as_deref())?;
            let p = config::model(&file.model, &model)?;
            let cfg = config::sim(&common, &file.sim, &sim)?;
            let init = config::initial_state(&file.sim, &sim, p.stages())?;
            let spec = PathSpec { id: "paths".into(), model: p, sim: cfg, init };
            paths(&[spec], &out_dir(&common, &file))
        }
    }
}

fn out_dir(common: &Common, file: &FileConfig) -> PathBuf {
    common.out.clone().or(file.output.dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn with_version(mut echo: Echo) -> Echo {
    echo.insert(0, ("serverpop".into(), env!("CARGO_PKG_VERSION").into()));
    echo
}

/// Heuristic counterparts of the quantities estimated by `simulate-limit`.
fn limit_theory(p: &ModelParams, cfg: &SimConfig) -> (Option<f64>, Option<f64>, Option<f64>) {
    if p.stages() != 1 {
        return (None, None, None);
    }
    let (b, mu, sigma, beta, gamma) = (p.b, p.mu, p.sigma, p.beta[0], p.gamma[0]);
    match (cfg.regime, cfg.reference_only) {
        (Regime::Hw, true) => (heuristics::pow0(b, mu, sigma).ok(), None, Some(0.0)),
        (Regime::Hw, false) => (
            heuristics::pow_tilde(b, mu, sigma, beta, gamma).ok(),
            None,
            heuristics::steady_averages_hw(b, mu, beta, gamma).ok().map(|(_, v)| v),
        ),
        (_, true) => (None, heuristics::sd0(b, sigma).ok(), Some(0.0)),
        (Regime::Nds, false) => (
            None,
            heuristics::sd_tilde(b, sigma, beta, gamma).ok(),
            heuristics::steady_averages_nds(b, mu, beta, gamma).ok().map(|(v, _)| v),
        ),
        (Regime::NearHw, false) => (None, None, heuristics::steady_averages_nds(b, mu, beta, gamma).ok().map(|(v, _)| v)),
    }
}

fn simulate_limit(
    p: &ModelParams,
    init: &LimitState,
    cfg: &SimConfig,
    trajectory: bool,
    out: &Path,
) -> Result<(), CliError> {
    let runs = run_replications(p, init, cfg, |_| SteadyStateAccumulator::new(cfg))?;
    let stats: Vec<_> = runs.iter().map(|(acc, _)| acc.stats()).collect();
    let (pow_t, sd_t, v_t) = limit_theory(p, cfg);
    let echo = with_version(config_echo(p, cfg));
    let pick = |f: fn(&serverpop::estimators::SteadyStats) -> f64| stats.iter().map(f).collect::<Vec<_>>();
    let reports = vec![
        aggregate(&pick(|s| s.pow), pow_t)?.with_id("pow"),
        aggregate(&pick(|s| s.sd()), sd_t)?.with_id("sd"),
        aggregate(&pick(|s| s.mean_v), v_t)?.with_id("mean_v"),
        aggregate(&pick(|s| s.l_rate), None)?.with_id("boundary_rate"),
    ];
    let reports: Vec<_> = reports.into_iter().map(|r| r.with_seeds(vec![cfg.seed])).collect();
    let mut w = create(out, "simulate_limit.csv")?;
    write_header(&mut w, "simulate-limit", &echo)?;
    write_reports(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        println!("{}", r.pretty());
    }
    if trajectory {
        let traj = simulate(p, init, cfg)?;
        if cfg.regime == Regime::Nds && !cfg.reference_only {
            check_jump_causality(&traj)?;
        }
        let mut w = create(out, "trajectory.csv")?;
        write_header(&mut w, "trajectory, replication 0", &echo)?;
        write_trajectory(&mut w, &traj)?;
        w.flush()?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn prelimit_echo(p: &PrelimitParams, s: &config::PrelimitSettings, seed: u64, reps: u32) -> Echo {
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    with_version(vec![
        ("n".into(), p.n.to_string()),
        ("alpha".into(), p.alpha.to_string()),
        ("lambda".into(), p.lambda.to_string()),
        ("servers".into(), p.servers.to_string()),
        ("mu_ind".into(), p.mu_ind.to_string()),
        ("interarrival_scv".into(), p.ia_law.scv().to_string()),
        ("beta".into(), list(&p.beta)),
        ("gamma".into(), list(&p.gamma)),
        ("transitions".into(), list(&p.transitions)),
        ("horizon".into(), s.decoupling.unwrap_or(s.horizon).to_string()),
        ("burn_in".into(), s.burn_in.to_string()),
        ("sample_dt".into(), s.sample_dt.to_string()),
        ("seed".into(), seed.to_string()),
        ("replications".into(), reps.to_string()),
        ("initial_state".into(), "q=0,i=N,v=0".into()),
    ])
}

fn simulate_prelimit(
    model: &ModelParams,
    s: &config::PrelimitSettings,
    seed: u64,
    reps: u32,
    out: &Path,
) -> Result<(), CliError> {
    let p = PrelimitParams::from_limit(model, s.n, s.alpha)?;
    let echo = prelimit_echo(&p, s, seed, reps);
    if let Some(horizon) = s.decoupling {
        let d = decoupling_check(&p, horizon, reps, seed)?;
        let mut w = create(out, "decoupling.csv")?;
        write_header(&mut w, "simulate-prelimit decoupling", &echo)?;
        writeln!(w, "n,alpha,horizon,probability,std_error,ci95,hits,replications")?;
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{},{}",
            d.n, p.alpha, horizon, d.probability, d.std_error, d.ci_halfwidth, d.hits, d.replications
        )?;
        w.flush()?;
        println!("P(V hits 1 by {horizon}) = {:.4} ± {:.4} (n = {})", d.probability, d.ci_halfwidth, d.n);
        return Ok(());
    }
    let cfg = PrelimitConfig::new(s.horizon).with_seed(seed).with_replications(reps).with_burn_in(s.burn_in);
    let runs = run_prelimit_replications(&p, &SystemState::empty(&p), &cfg)?;
    let vscale = (p.n as f64).powf(p.alpha - 0.5);
    let pow: Vec<f64> = runs.iter().map(|r| r.stats.pow()).collect();
    let v: Vec<f64> = runs.iter().map(|r| r.stats.mean_v() / vscale).collect();
    let reports =
        vec![aggregate(&pow, None)?.with_id("pow"), aggregate(&v, None)?.with_id("mean_v_tilde")];
    let reports: Vec<_> = reports.into_iter().map(|r| r.with_seeds(vec![seed])).collect();
    let mut w = create(out, "prelimit_report.csv")?;
    write_header(&mut w, "simulate-prelimit", &echo)?;
    write_reports(&mut w, &reports)?;
    w.flush()?;
    for r in &reports {
        println!("{}", r.pretty());
    }

    let mut detail = cfg.clone().with_snapshots(s.sample_dt);
    if s.events {
        detail = detail.with_event_log();
    }
    let run0 = run_prelimit(&p, &SystemState::empty(&p), &detail, 0)?;
    let mut w = create(out, "snapshots.csv")?;
    write_header(&mut w, "snapshots, replication 0", &echo)?;
    writeln!(w, "t,q,i,v,x_hat,v_tilde")?;
    for snap in &run0.snapshots {
        writeln!(w, "{},{},{},{},{},{}", snap.t, snap.q, snap.i, snap.v, snap.x_hat, snap.v_tilde)?;
    }
    w.flush()?;
    if s.events {
        let mut w = create(out, "events.csv")?;
        write_header(&mut w, "event log, replication 0", &echo)?;
        writeln!(w, "t,kind,q,i,v,arrivals,departures,routed")?;
        for e in &run0.events {
            let kind = match e.kind {
                EventKind::Departure => "departure".to_string(),
                EventKind::Arrival => "arrival".to_string(),
                EventKind::VacationEnd(k) => format!("vacation_end_{}", k + 1),
                EventKind::VacationBegin(k) => format!("vacation_begin_{}", k + 1),
                EventKind::StageMove { from, to } => format!("stage_{}_to_{}", from + 1, to + 1),
            };
            let c = e.counters;
            writeln!(
                w,
                "{},{kind},{},{},{},{},{},{}",
                e.t,
                e.state.q,
                e.state.i,
                e.state.v(),
                c.arrivals,
                c.departures,
                c.routed
            )?;
        }
        w.flush()?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn heuristic(p: &ModelParams, out: &Path) -> Result<(), CliError> {
    if p.stages() != 1 {
        return Err(CliError::Config("heuristics need a single-stage model".into()));
    }
    let h = HeuristicOutputs::compute(p.b, p.mu, p.sigma, p.beta[0], p.gamma[0])?;
    let fields = h.fields();
    for (k, v) in &fields {
        println!("{k:<12} {v:.10}");
    }
    let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
    let row: Vec<String> = fields.iter().map(|(_, v)| v.to_string()).collect();
    println!("{}", header.join(","));
    println!("{}", row.join(","));
    let echo = with_version(vec![
        ("b".into(), p.b.to_string()),
        ("mu".into(), p.mu.to_string()),
        ("sigma".into(), p.sigma.to_string()),
        ("beta".into(), p.beta[0].to_string()),
        ("gamma".into(), p.gamma[0].to_string()),
    ]);
    let mut w = create(out, "heuristic.csv")?;
    write_header(&mut w, "heuristic", &echo)?;
    writeln!(w, "{}", header.join(","))?;
    writeln!(w, "{}", row.join(","))?;
    w.flush()?;
    Ok(())
}

fn sweep(spec: &SweepSpec, out: &Path) -> Result<(), CliError> {
    let points = spec.run()?;
    let mut echo = with_version(config_echo(&spec.model, &spec.sim));
    echo.push(("quantity".into(), spec.quantity.name().into()));
    echo.push(("simulate".into(), spec.simulate.to_string()));
    echo.push(("grid".into(), spec.grid.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(";")));
    let mut w = create(out, &format!("{}.csv", spec.id))?;
    write_header(&mut w, &format!("sweep {} over gamma", spec.quantity.name()), &echo)?;
    write_sweep(&mut w, &points)?;
    w.flush()?;
    let reports: Vec<EstimateReport> = points.iter().filter_map(|p| p.report.clone()).collect();
    if !reports.is_empty() {
        let mut w = create(out, &format!("{}_reports.csv", spec.id))?;
        write_header(&mut w, &format!("sweep {} reports", spec.id), &echo)?;
        write_reports(&mut w, &reports)?;
        w.flush()?;
    }
    for p in &points {
        match p.sim_value {
            Some(s) => println!("gamma {:<6} sim {s:.4} heuristic {:.4}", p.gamma, p.heuristic_value),
            None => println!("gamma {:<6} heuristic {:.4}", p.gamma, p.heuristic_value),
        }
    }
    if spec.simulate {
        let (abs, rel) = sweep_max_errors(&points);
        println!("{}: max abs error {abs:.4}, max rel error {rel:.4}", spec.id);
    }
    Ok(())
}

fn paths(specs: &[PathSpec], out: &Path) -> Result<(), CliError> {
    for spec in specs {
        let traj = emit_paths(spec)?;
        let mut echo = with_version(config_echo(&spec.model, &spec.sim));
        echo.push(("x0".into(), spec.init.x.to_string()));
        echo.push(("v0".into(), spec.init.v().to_string()));
        let mut w = create(out, &format!("{}.csv", spec.id))?;
        write_header(&mut w, &format!("sample path {}", spec.id), &echo)?;
        write_trajectory(&mut w, &traj)?;
        w.flush()?;
        println!("{}: {} points, {} jumps", spec.id, traj.len(), traj.jumps.len());
    }
    Ok(())
}

fn apply_common(sim: &mut SimConfig, common: &Common, file: &FileConfig) -> Result<(), CliError> {
    if let Some(seed) = common.seed.or(file.sim.seed) {
        sim.seed = seed;
    }
    if let Some(r) = common.replications.or(file.sim.replications) {
        sim.replications = r;
    }
    sim.scheme = config::scheme(common.scheme, file.sim.scheme.as_deref())?;
    sim.validate()?;
    Ok(())
}

fn preset_run(
    preset: Preset,
    scale: f64,
    common: &Common,
    file: &FileConfig,
    stride: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    match preset {
        Preset::Table1 | Preset::Table2 => {
            let mut spec = if preset == Preset::Table1 { TableSpec::table1(scale)? } else { TableSpec::table2(scale)? };
            apply_common(&mut spec.sim, common, file)?;
            let report = spec.run()?;
            let mut echo = with_version(report.config_echo.clone());
            echo.push(("scale".into(), scale.to_string()));
            let mut w = create(out, &format!("{}.csv", preset.name()))?;
            write_header(&mut w, preset.description(), &echo)?;
            write_reports(&mut w, std::slice::from_ref(&report))?;
            w.flush()?;
            println!("{}", report.pretty());
        }
        Preset::Fig1 => {
            let mut specs = PathSpec::fig1(stride.unwrap_or(100));
            for s in &mut specs {
                apply_common(&mut s.sim, common, file)?;
            }
            paths(&specs, out)?;
        }
        Preset::Fig2 | Preset::Fig3 => {
            let panels: [(f64, f64); 4] = if preset == Preset::Fig2 {
                [(0.5, 1.0), (0.5, 3.0), (1.0, 1.0), (1.0, 3.0)]
            } else {
                [(2.0, 2.0), (2.0, 3.0), (4.0, 2.0), (4.0, 3.0)]
            };
            for (mu, sigma) in panels {
                let mut spec =
                    if preset == Preset::Fig2 { SweepSpec::fig2(mu, sigma, scale)? } else { SweepSpec::fig3(mu, sigma, scale)? };
                apply_common(&mut spec.sim, common, file)?;
                sweep(&spec, out)?;
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
