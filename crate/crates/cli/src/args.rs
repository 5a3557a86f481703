use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "serverpop", version, about = "Many-server queues with server vacations: simulation and heuristics")]
pub struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a diffusion limit and estimate POW, slowdown and mean V.
    SimulateLimit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: LimitArgs,
        /// Also write the trajectory of replication 0.
        #[arg(long)]
        trajectory: bool,
    },
    /// Event simulation of the n-th queueing system.
    SimulatePrelimit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pre: PrelimitArgs,
    },
    /// Closed-form POW and slowdown approximations.
    Heuristic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Simulation and heuristic over a gamma grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: LimitArgs,
        /// Quantity to sweep.
        #[arg(long, value_enum)]
        quantity: Option<QuantityArg>,
        /// Comma-separated, strictly increasing gamma values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Only evaluate the heuristic column.
        #[arg(long)]
        no_sim: bool,
    },
    /// Reproduce a table or figure.
    Preset {
        /// One of table1, table2, fig1, fig2, fig3.
        name: String,
        #[command(flatten)]
        common: Common,
        /// Sampling stride for exported paths.
        #[arg(long)]
        stride: Option<u64>,
    },
    /// Export sample paths of a limit system.
    Paths {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: LimitArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Multiplier on the step count (presets: on the full-size count).
    #[arg(long, conflicts_with = "paper_scale")]
    pub scale: Option<f64>,
    /// Run presets at full size.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Vacation-begin rate (single stage).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Vacation-end rate (single stage).
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LimitArgs {
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Record every k-th grid point.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Drop the vacation component.
    #[arg(long)]
    pub reference: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub v0: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PrelimitArgs {
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Snapshot spacing.
    #[arg(long)]
    pub sample_dt: Option<f64>,
    /// Write the event log of replication 0.
    #[arg(long)]
    pub events: bool,
    /// Estimate P(V hits 1 by T) from V(0) = 0 with this T instead.
    #[arg(long)]
    pub decoupling: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Hw,
    NearHw,
    Nds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bernoulli,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    Pow,
    Sd,
}
