//! `blindqkd`: run attack scenarios, sweep parameters and tabulate CHSH
//! efficiency bounds.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use blindqkd::{Protocol, ScenarioKind, WeakSidePolicy};

#[derive(Debug, Parser)]
#[command(
    name = "blindqkd",
    version,
    about = "Double blinding-attack simulator for entanglement-based QKD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one session and write a JSON summary.
    Run(RunArgs),
    /// Repeat a session over a grid of angle differences or α values.
    Sweep(SweepArgs),
    /// Tabulate the local-model CHSH bounds for given efficiencies.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Honest,
    SingleBlinding,
    DoubleBbm92,
    DoubleEkert,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Honest => ScenarioKind::HonestSinglet,
            ScenarioArg::SingleBlinding => ScenarioKind::SingleBlinding,
            ScenarioArg::DoubleBbm92 => ScenarioKind::DoubleBlindBbm92,
            ScenarioArg::DoubleEkert => ScenarioKind::DoubleBlindEkert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Bbm92,
    Ekert,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Bbm92 => Protocol::Bbm92,
            ProtocolArg::Ekert => Protocol::Ekert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeakSideArg {
    Alternate,
    Random,
    FixedA,
    FixedB,
}

impl From<WeakSideArg> for WeakSidePolicy {
    fn from(w: WeakSideArg) -> Self {
        match w {
            WeakSideArg::Alternate => WeakSidePolicy::Alternate,
            WeakSideArg::Random => WeakSidePolicy::Random,
            WeakSideArg::FixedA => WeakSidePolicy::FixedA,
            WeakSideArg::FixedB => WeakSidePolicy::FixedB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Scenario and session parameters shared by `run` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    #[arg(long, value_enum, default_value = "double-ekert")]
    pub scenario: ScenarioArg,
    #[arg(long, value_enum, default_value = "ekert")]
    pub protocol: ProtocolArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Width of the weak pulse's silent band in radians [default: π/(4√2)].
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "weak-side", value_enum, default_value = "random")]
    pub weak_side: WeakSideArg,
    /// Fraction of white noise mixed into the honest source.
    #[arg(long, default_value_t = 0.0)]
    pub depolarize: f64,
    /// Detector discriminator threshold; intensities below are in the same units.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    /// Strong pulse intensity [default: 2 × threshold].
    #[arg(long = "strong-intensity")]
    pub strong_intensity: Option<f64>,
    /// Single-blinding resend intensity [default: 1.5 × threshold].
    #[arg(long = "single-blind-intensity")]
    pub single_blind_intensity: Option<f64>,
    /// Worker threads [default: all cores]; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Family-wise significance of the fair-sampling monitor.
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Summary destination [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump every round as CSV to this path.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Include λ and Eve's predictions in the record dump.
    #[arg(long = "eve-view")]
    pub eve_view: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Angle difference θ_B − θ_A with θ_A = 0.
    Delta,
    /// Ekert-tuning width α.
    Alpha,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, value_enum, default_value = "delta")]
    pub axis: Axis,
    /// Explicit comma-separated grid; overrides --from/--to/--step.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("values").required(true).multiple(true).args(["eta", "eta21"])))]
pub struct BoundsArgs {
    /// Detection efficiency η (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub eta: Vec<f64>,
    /// Conditional efficiency η₂,₁ (repeatable or comma-separated).
    #[arg(long = "eta21", alias = "eta-21", value_delimiter = ',')]
    pub eta21: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Bounds(args) => commands::bounds(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
