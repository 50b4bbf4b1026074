mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::RunConfig;
use output::Outputs;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Library(torus_elliptic::Error),
}

impl From<torus_elliptic::Error> for CliError {
    fn from(e: torus_elliptic::Error) -> Self {
        CliError::Library(e)
    }
}

#[derive(Serialize)]
pub struct ErrorReport {
    status: &'static str,
    kind: String,
    message: String,
    exit_code: u8,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Library(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (kind, message) = match self {
            CliError::Validation(m) => ("validation".to_string(), m.clone()),
            CliError::Library(e) => (e.kind().to_string(), e.to_string()),
        };
        ErrorReport { status: "error", kind, message, exit_code: self.exit_code() }
    }
}

#[derive(Parser)]
#[command(name = "torus-elliptic", version, about = "Elliptic operators on the torus: certificates, norms, resolvents, evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// OperatorSpec JSON file.
    #[arg(long, global = true)]
    operator: Option<PathBuf>,
    /// CauchyProblemSpec JSON file.
    #[arg(long, global = true)]
    problem: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    bandwidth: Option<usize>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    scan_bound: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    k_dict: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Uniform and normal ellipticity certificates.
    Check,
    /// Sup, Hölder and Besov norms, decay profiles and block tables.
    Norms,
    /// Marcinkiewicz quantities and η₂ for the resolvent symbol.
    MultiplierAudit,
    /// Dictionary estimates of resolvent decay with fitted slopes.
    ResolventSweep,
    /// Localized coefficient sizes and contraction thresholds per ε.
    PartitionAudit,
    /// Cauchy problem trajectory, weighted norms and maximal regularity ratios.
    Solve,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Norms => "norms",
            Command::MultiplierAudit => "multiplier-audit",
            Command::ResolventSweep => "resolvent-sweep",
            Command::PartitionAudit => "partition-audit",
            Command::Solve => "solve",
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(p) = &cli.operator {
        cfg.operator_path = Some(p.clone());
    }
    if let Some(p) = &cli.problem {
        cfg.problem_path = Some(p.clone());
    }
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = &cli.$field { cfg.$field = v.clone(); } )* };
    }
    over!(bandwidth, grid, scan_bound, alpha, seed, k_dict, eps, mu, horizon, steps);
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    let mut cfg = cfg.resolve()?;
    if let Some(p) = cfg.problem.as_mut() {
        if cli.mu.is_some() {
            p.mu = cfg.mu;
        }
        if cli.horizon.is_some() {
            p.horizon = cfg.horizon;
        }
    }
    Ok(cfg)
}

fn execute(command: Command, cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    match command {
        Command::Check => commands::check(cfg, out),
        Command::Norms => commands::norms(cfg, out),
        Command::MultiplierAudit => commands::multiplier_audit(cfg, out),
        Command::ResolventSweep => commands::resolvent_sweep(cfg, out),
        Command::PartitionAudit => commands::partition_audit(cfg, out),
        Command::Solve => commands::solve(cfg, out),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.report()).expect("report serializes"));
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let hash = cfg.hash();
    let mut out = match Outputs::new(&cfg.output_dir, cli.command.name(), &hash) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let result = execute(cli.command, &cfg, &mut out);
    let finished = out.finish(result.as_ref().err());
    match (result, finished) {
        (Err(e), _) | (Ok(()), Err(e)) => fail(&e),
        (Ok(()), Ok(())) => {
            println!("{}", cfg.output_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
    }
}
