mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "qwalk",
    version,
    about = "Classical and quantum hitting times of Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe a chain: transition matrix, stationary distribution, spectrum.
    Chain(ChainCmd),
    /// Classical hitting times HT, E[H_z], HT_eps and h_eps.
    Classical(HitCmd),
    /// Classical and quantum hitting times side by side.
    Quantum(HitCmd),
    /// Detect acceptance probabilities from phase estimation.
    Detect(PhaseCmd),
    /// Rotate outputs and their distance to the ideal U-rotation.
    Rotate(PhaseCmd),
    /// Tulsi finding experiment.
    Tulsi(HitCmd),
    /// Classical analogue of the reflection walk built from a chain.
    Analogue(AnalogueCmd),
    /// Property sweep over the built-in families.
    Verify(VerifyCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance override; takes precedence over QWALK_TOL.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    /// Built-in family: cycle, complete, torus2d, hypercube, random.
    #[arg(long, conflicts_with = "chain")]
    pub family: Option<String>,
    /// Family size: states for cycle/complete/random, side for torus2d,
    /// dimension for hypercube.
    #[arg(long)]
    pub n: Option<usize>,
    /// Apply lazify with this alpha.
    #[arg(long)]
    pub lazy: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON chain spec file.
    #[arg(long)]
    pub chain: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChainCmd {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct HitCmd {
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Marked state, or "all".
    #[arg(long, default_value = "all")]
    pub z: String,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5])]
    pub eps: Vec<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct PhaseCmd {
    #[command(flatten)]
    pub hit: HitCmd,
    /// Phase precision; defaults to 1/max(1, QHT_eps).
    #[arg(long, conflicts_with_all = ["t", "r"])]
    pub delta: Option<f64>,
    /// Explicit number of phase bits (requires --r).
    #[arg(long, requires = "r")]
    pub t: Option<u32>,
    /// Explicit number of repetitions (requires --t).
    #[arg(long, requires = "t")]
    pub r: Option<usize>,
    /// Cross-check against the dense circuit oracle when it fits.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Args, Debug)]
pub struct AnalogueCmd {
    #[command(flatten)]
    pub hit: HitCmd,
    /// Draw random symmetric signs for the walk blocks from --seed.
    #[arg(long)]
    pub signs: bool,
}

#[derive(Args, Debug)]
pub struct VerifyCmd {
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = ["cycle".to_string(), "complete".to_string(), "torus2d".to_string(), "hypercube".to_string(), "random".to_string()]
    )]
    pub families: Vec<String>,
    /// Smallest state count swept.
    #[arg(long, default_value_t = 3)]
    pub nmin: usize,
    /// Largest state count swept.
    #[arg(long, default_value_t = 9)]
    pub nmax: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5])]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Laziness applied to every family member.
    #[arg(long, default_value_t = 0.0)]
    pub lazy: f64,
    #[command(flatten)]
    pub output: Output,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Chain(c) => commands::chain(&c),
        Command::Classical(c) => commands::hitting(&c, false),
        Command::Quantum(c) => commands::hitting(&c, true),
        Command::Detect(c) => commands::phase(&c, false),
        Command::Rotate(c) => commands::phase(&c, true),
        Command::Tulsi(c) => commands::tulsi(&c),
        Command::Analogue(c) => commands::analogue(&c),
        Command::Verify(c) => commands::verify(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qwalk: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Io(_) => 2,
                CliError::Verification(_) => 3,
            })
        }
    }
}
