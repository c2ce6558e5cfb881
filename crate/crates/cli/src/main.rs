mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PartialConfig;

/// Exit statuses: 2 configuration, 3 solver failure, 4 I/O.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(rough_symplectic::Error),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<rough_symplectic::Error> for CliError {
    fn from(e: rough_symplectic::Error) -> Self {
        use rough_symplectic::Error as E;
        match e.root() {
            E::NonConvergence { .. } | E::SingularMatrix => CliError::Solver(e),
            E::Io(_) => match e {
                E::Io(io) => CliError::Io(io),
                other => CliError::Io(std::io::Error::other(other.to_string())),
            },
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "rough-symplectic",
    version,
    about = "Integrate Hamiltonian systems driven by fractional Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample fBm paths and write them as CSV.
    SamplePath(Flags),
    /// Integrate a system along sampled paths.
    Integrate(Flags),
    /// Fit pathwise convergence rates.
    Convergence(Flags),
    /// Track the area of the evolved unit square.
    Area(Flags),
    /// Track |Y| - |z| for the Kubo oscillator.
    Invariant(Flags),
    /// Run the command named in a config file or manifest.
    Run(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Config file or manifest; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $ROUGH_SYMPLECTIC_OUT or current directory].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    /// Comma-separated scheme names.
    #[arg(long = "schemes", alias = "scheme", value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of noise channels (kubo).
    #[arg(long)]
    dims: Option<usize>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Step size; sets the step count to T/h.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Initial value, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    z: Option<Vec<f64>>,
    /// Base seed; path i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    coarsest_level: Option<u32>,
    #[arg(long)]
    finest_level: Option<u32>,
    /// `exact` or `fine`.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    reference_level: Option<u32>,
    #[arg(long)]
    reference_scheme: Option<String>,
    #[arg(long)]
    zero_noise: bool,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// `fixed-point`, `newton` or `direct-linear`.
    #[arg(long)]
    strategy: Option<String>,
    /// Snapshot times for `area`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    /// Propagate and write Jacobians (`integrate`).
    #[arg(long)]
    jacobian: bool,
    /// Require hurst in (1/4, 1/2].
    #[arg(long)]
    strict_range: bool,
    #[arg(long)]
    workers: Option<usize>,
}

impl Flags {
    fn partial(&self, command: Option<&str>) -> PartialConfig {
        PartialConfig {
            command: command.map(str::to_string),
            system: self.system.clone(),
            schemes: self.schemes.clone(),
            hurst: self.hurst,
            epsilon: self.epsilon,
            dims: self.dims,
            horizon: self.horizon,
            steps: self.steps,
            h: self.h,
            z: self.z.clone(),
            seed: self.seed,
            paths: self.paths,
            coarsest_level: self.coarsest_level,
            finest_level: self.finest_level,
            reference: self.reference.clone(),
            reference_level: self.reference_level,
            reference_scheme: self.reference_scheme.clone(),
            zero_noise: self.zero_noise.then_some(true),
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            strategy: self.strategy.clone(),
            snapshots: self.snapshots.clone(),
            jacobian: self.jacobian.then_some(true),
            strict_range: self.strict_range.then_some(true),
            workers: self.workers,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (flags, command) = match &cli.command {
        Command::SamplePath(f) => (f, Some("sample-path")),
        Command::Integrate(f) => (f, Some("integrate")),
        Command::Convergence(f) => (f, Some("convergence")),
        Command::Area(f) => (f, Some("area")),
        Command::Invariant(f) => (f, Some("invariant")),
        Command::Run(f) => (f, None),
    };
    if command.is_none() && flags.config.is_none() {
        return Err(CliError::Config("`run` needs --config".into()));
    }
    let file = match &flags.config {
        Some(path) => PartialConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => PartialConfig::default(),
    };
    if let (Some(cmd), Some(in_file)) = (command, &file.command) {
        if cmd != in_file {
            return Err(CliError::Config(format!("config is for `{in_file}`, not `{cmd}`")));
        }
    }
    let cfg = file.overlay(flags.partial(command)).resolve()?;
    let out = flags
        .out
        .clone()
        .or_else(|| std::env::var_os("ROUGH_SYMPLECTIC_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let result = run::run(&cfg, &out)?;
    for line in &result.summary {
        println!("{line}");
    }
    for f in &result.files {
        println!("wrote {}", out.join(f).display());
    }
    println!("wrote {}", result.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
