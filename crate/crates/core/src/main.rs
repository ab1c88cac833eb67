use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wkelly::cli::{
    parse_scenario, run_scenario, CliError, Command, Report, RunOptions, EXIT_USAGE,
};

/// Weighted log-optimal investment: solve, simulate and check scenarios.
#[derive(Parser)]
#[command(name = "wkelly", version)]
struct Cli {
    /// Suppress the human-readable table.
    #[arg(long, global = true)]
    quiet: bool,
    /// Directory for report files when --out is not given.
    #[arg(long, global = true, env = "WKELLY_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    file: PathBuf,
    /// Report path; overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Compute optimal fractions.
    Solve(Common),
    /// Monte Carlo check of the martingale property.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Write every path step to this CSV file.
        #[arg(long)]
        paths: Option<PathBuf>,
    },
    /// Check feasibility, dominance, normalization and balance.
    Check(Common),
}

fn report_path(common: &Common, out_dir: Option<&Path>, name: &str) -> Option<PathBuf> {
    if let Some(out) = &common.out {
        return Some(out.clone());
    }
    let stem = common.file.file_stem()?.to_string_lossy().into_owned();
    out_dir.map(|dir| dir.join(format!("{stem}.{name}.json")))
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    let (common, command, options, name) = match &cli.command {
        Sub::Solve(c) => (c, Command::Solve, RunOptions::default(), "solve"),
        Sub::Check(c) => (c, Command::Check, RunOptions::default(), "check"),
        Sub::Simulate {
            common,
            replicates,
            horizon,
            seed,
            threads,
            paths,
        } => (
            common,
            Command::Simulate,
            RunOptions {
                horizon: *horizon,
                replicates: *replicates,
                seed: *seed,
                threads: *threads,
                paths: paths.clone(),
            },
            "simulate",
        ),
    };
    let text = std::fs::read_to_string(&common.file)
        .map_err(|e| CliError::Io(format!("{}: {e}", common.file.display())))?;
    let config = parse_scenario(&text)?;
    let report = run_scenario(&config, command, &options)?;
    let json = report.to_json();
    match report_path(common, cli.out_dir.as_deref(), name) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, json + "\n")
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if !cli.quiet {
                print!("{}", report.table());
                println!("report: {}", path.display());
            }
        }
        None => {
            if !cli.quiet {
                eprint!("{}", report.table());
            }
            println!("{json}");
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(report) => ExitCode::from(report.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
