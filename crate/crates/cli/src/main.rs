use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use obstacle_core::config::ScenarioConfig;
use obstacle_core::exec::{init_workers, Exec};
use obstacle_core::harness::{run, Command, RunOptions, RunResult};
use obstacle_core::output::{emit, read_json, Format};
use obstacle_core::{library, Error};

/// Worker count for the data-parallel loops; 1 runs everything sequentially.
const WORKERS_VAR: &str = "OBSTACLE_WORKERS";

#[derive(Parser)]
#[command(name = "obstacle", version, about = "Penalized solver and checks for parabolic obstacle systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario TOML file, or the name of a built-in scenario.
    #[arg(long)]
    config: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve at the configured penalty level.
    Solve(Common),
    /// Run the penalization ladder and its convergence diagnostics.
    Ladder(Common),
    /// Minimality, variational-inequality and energy checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// A result.json from an earlier solve or ladder run; the ladder is rerun when absent.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Feynman-Kac Monte Carlo cross-check at a sample of nodes.
    McCheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

fn load(arg: &str) -> Result<ScenarioConfig, Error> {
    let path = PathBuf::from(arg);
    if path.exists() {
        ScenarioConfig::from_path(&path)
    } else if library::source(arg).is_some() {
        library::builtin(arg)
    } else {
        Err(Error::validation(
            "config",
            format!("{arg} is neither a file nor one of {:?}", library::names()),
        ))
    }
}

fn exec_from_env() -> Result<Exec, Error> {
    match std::env::var(WORKERS_VAR) {
        Err(_) => Ok(Exec::Parallel),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::validation(WORKERS_VAR, format!("expected a positive integer, got {v:?}")))?;
            if n == 1 {
                Ok(Exec::Sequential)
            } else {
                init_workers(n)?;
                Ok(Exec::Parallel)
            }
        }
    }
}

fn print_summary(result: &RunResult, files: &[PathBuf]) {
    let p = &result.provenance;
    println!("scenario {} ({}), seed {}, config {}", p.scenario, p.command.name(), p.seed, &p.config_hash[..16]);
    for c in &result.checks {
        println!(
            "  {:<4} {:<28} {:>12.4e}  (threshold {:.4e})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    for f in files {
        println!("  wrote {}", f.display());
    }
    println!("{}", if result.passed { "all checks passed" } else { "some checks failed" });
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let (command, common, solution) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c, None),
        Cmd::Ladder(c) => (Command::Ladder, c, None),
        Cmd::Verify { common, solution } => (Command::Verify, common, solution),
        Cmd::McCheck(c) => (Command::McCheck, c, None),
    };
    let mut config = load(&common.config)?;
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    let stored = solution.map(|p| read_json(&p)).transpose()?;
    let opts = RunOptions {
        exec: exec_from_env()?,
        stored,
    };
    let result = run(&config, command, opts)?;
    let format = match common.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    let files = emit(&result, &common.out, format)?;
    print_summary(&result, &files);
    Ok(result.passed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
