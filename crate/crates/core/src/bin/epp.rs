use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand, ValueEnum};

use epp_core::cli::{self, CliError, Format, RunManifest, RunOutput, RunSettings, Subcommand};
use epp_core::config::Config;

const CONFIG_HELP: &str = "\
Config keys (flat `key = value`, `#` comments; override with --set key=value):

  noise model (iterate, fixpoint, mc, curve)
    model            ideal | white | p1p2 | general | binary   [p1p2; curve: binary]
    f0               white/binary reliability                 [0.9]
    p1, p2           p1p2 apparatus reliabilities             [0.96, 0.968]
    both_labs        p1p2 noise in both labs                  [false]
    f.XXXX           general: f_{mu nu}, bits of mu then nu   [0]
    normalization_tol  general: allowed |sum - 1|             [1e-9]
    f00 f01 f10 f11  binary: correlated spin-flip weights
  start_fidelity     Werner start                             [0.85; curve: 0.6]
  iterate            steps [20], dump = summary | cells [summary]
  fixpoint           sweep = comma list of f0 (model white | binary)
  critical           family = binary-uncorrelated | white-noise, bracket_lo, bracket_hi,
                     halvings [40], threshold [1e-9], budget [2000000], stall [1e-15]
  scan               f00_min [0.5], f00_max [1.0], f00_points [11], samples [200]
  mc                 pairs [1000000], rounds [8]
  curve              n_max [10], segment_points [50]
  resources          settings = p1:p2,... [four reference settings], both_labs,
                     eps_min [1e-4], max_rounds [200]

Exit status: 0 if every computation converged, 1 otherwise, 2 on bad input.";

#[derive(Parser)]
#[command(name = "epp", version, about = "Noisy entanglement purification with error flags", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the table and its manifest.
    #[arg(long, default_value = "epp-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Fixpoint convergence tolerance (max-norm of one step).
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Analytic trajectory F, F^cond, N per step.
    Iterate(RunArgs),
    /// Long-run state and regime, optionally over a sweep of f0.
    Fixpoint(RunArgs),
    /// Bisection for the critical noise level of a family.
    Critical(RunArgs),
    /// Regime frequencies over random noise models.
    Scan(RunArgs),
    /// Pair-level Monte Carlo against the analytic trajectory.
    Mc(RunArgs),
    /// Purification curve F^cond_{n+1} against F^cond_n.
    Curve(RunArgs),
    /// Initial pairs per final pair against 1 - F^cond.
    Resources(RunArgs),
    /// Rerun a manifest written by an earlier run.
    Replay {
        manifest: PathBuf,
        #[arg(long, default_value = "epp-out")]
        out: PathBuf,
    },
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })
}

fn run(sub: Subcommand, args: RunArgs) -> Result<(RunOutput, PathBuf), CliError> {
    let mut config = match &args.config {
        Some(path) => Config::parse(&read(path)?, &path.display().to_string())?,
        None => Config::default(),
    };
    for o in &args.overrides {
        config.set_assignment(o)?;
    }
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let settings = RunSettings { seed: args.seed, tol: args.tol, max_iter: args.max_iter, format };
    Ok((cli::execute(sub, &config, &settings)?, args.out))
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Iterate(a) => run(Subcommand::Iterate, a),
        Command::Fixpoint(a) => run(Subcommand::Fixpoint, a),
        Command::Critical(a) => run(Subcommand::Critical, a),
        Command::Scan(a) => run(Subcommand::Scan, a),
        Command::Mc(a) => run(Subcommand::Mc, a),
        Command::Curve(a) => run(Subcommand::Curve, a),
        Command::Resources(a) => run(Subcommand::Resources, a),
        Command::Replay { manifest, out } => read(&manifest).and_then(|text| {
            let m: RunManifest =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
            Ok((cli::replay(&m)?, out))
        }),
    };
    let written = result.and_then(|(output, dir)| {
        let (data, _) = output.write(&dir)?;
        Ok((output.manifest.converged, data))
    });
    match written {
        Ok((converged, data)) => {
            println!("{}", data.display());
            if converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: not every computation converged");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
