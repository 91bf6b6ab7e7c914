use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use foggrid::scenario::{
    compare_frameworks, emit_comparison, emit_report, parse_config, run_scenario, sweep, sweep_csv,
    ConfigError, ScenarioConfig,
};
use foggrid::sim::RunError;

const OUT_ENV: &str = "FOGGRID_OUT";

#[derive(Parser)]
#[command(
    name = "foggrid",
    version,
    about = "Fog-augmented smart-grid simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario once in its configured mode.
    Run(RunArgs),
    /// Run the workload cloud-only and fog-augmented with the same seed.
    Compare(RunArgs),
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
    /// Compare frameworks over consecutive seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds, starting at the configured (or --seed) value.
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Run seeds concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory; defaults to $FOGGRID_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("error[{}]: {e}", e.category()))
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Runtime(format!("error[runtime]: {e}"))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("error[io]: {}: {e}", path.display()))
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("error[io]: {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn load_with_overrides(args: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(h) = args.horizon {
        cfg = cfg.with_horizon(h)?;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} nodes, {} arrival processes, {} sessions",
                cfg.run.topology.len(),
                cfg.run.arrivals.len(),
                cfg.run.sessions.len()
            );
        }
        Command::Run(args) => {
            let cfg = load_with_overrides(&args)?;
            let report = run_scenario(&cfg)?;
            let dir = out_dir(&args);
            emit_report(&report, &dir).map_err(|e| io_failure(&dir, e))?;
            print!("{}", report.summary_txt());
        }
        Command::Compare(args) => {
            let cfg = load_with_overrides(&args)?;
            let cmp = compare_frameworks(&cfg)?;
            let dir = out_dir(&args);
            emit_comparison(&cmp, &dir).map_err(|e| io_failure(&dir, e))?;
            print!("{}", cmp.comparison_txt());
        }
        Command::Sweep {
            run,
            count,
            parallel,
        } => {
            let cfg = load_with_overrides(&run)?;
            let first = cfg.run.seed;
            let seeds: Vec<u64> = (0..count).map(|i| first.wrapping_add(i)).collect();
            let rows = sweep(&cfg, &seeds, parallel)?;
            let dir = out_dir(&run);
            let csv = sweep_csv(&rows);
            fs::create_dir_all(&dir)
                .and_then(|_| fs::write(dir.join("sweep.csv"), &csv))
                .map_err(|e| io_failure(&dir, e))?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
