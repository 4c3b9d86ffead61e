use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtlab::config::{parse_level, Overrides};
use mtlab::error::parse_method;
use mtlab::{parse_config, report, run, sweep, HarnessError, RunConfig};
use mtlab_core::{GradientLevel, Method};

#[derive(Debug, Parser)]
#[command(
    name = "mtlab",
    version,
    about = "Multi-task optimizer runs, sweeps and interference reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one method over the repeat seeds.
    Run(RunArgs),
    /// Train every applicable (method, level) cell.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated method names, or "all" for the full roster.
        #[arg(long, default_value = "all")]
        methods: String,
        /// Comma-separated gradient levels.
        #[arg(long, default_value = "param,feature")]
        levels: String,
        /// Cells trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank a finished sweep's cells by indicator and by final loss.
    Report {
        /// Sweep directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in worked examples.
    Selftest,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat TOML config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// param or feature
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    /// Comma-separated repeat seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot every N iterations.
    #[arg(long)]
    cadence: Option<usize>,
    /// Number of tasks in the toy problem.
    #[arg(long)]
    tasks: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> mtlab::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => parse_config(&mtlab::io::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        Overrides {
            method: self.method.clone(),
            level: self.level.clone(),
            iters: self.iters,
            seeds: self.seeds.clone(),
            out: self.out.clone(),
            cadence: self.cadence,
            tasks: self.tasks,
        }
        .apply(base)
    }
}

fn parse_list<T>(csv: &str, parse: impl Fn(&str) -> mtlab::Result<T>) -> mtlab::Result<Vec<T>> {
    csv.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

fn execute(cli: Cli) -> mtlab::Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let outcome = run(&config)?;
            for s in &outcome.seeds {
                println!(
                    "seed {}: total final loss {:.6e} ({} snapshots)",
                    s.seed,
                    s.final_losses.iter().sum::<f64>(),
                    s.snapshots
                );
            }
            println!("wrote {}", outcome.dir.display());
            Ok(true)
        }
        Command::Sweep {
            run,
            methods,
            levels,
            jobs,
        } => {
            // A feature-level base would be rejected for balancing methods; cells pick their own level.
            let mut args = run;
            let level_override = args.level.take();
            let config = args.resolve()?;
            let methods = if methods.trim() == "all" {
                Method::ROSTER.to_vec()
            } else {
                parse_list(&methods, parse_method)?
            };
            let levels: Vec<GradientLevel> = match level_override {
                Some(l) => vec![parse_level(&l)?],
                None => parse_list(&levels, parse_level)?,
            };
            let entries = sweep(&config, &methods, &levels, jobs.max(1))?;
            for e in &entries {
                println!("{e}");
            }
            println!("wrote {}", config.out.display());
            Ok(true)
        }
        Command::Report { out } => {
            let table = report(&out)?;
            print!("{}", table.to_text());
            Ok(true)
        }
        Command::Selftest => {
            let checks = mtlab::selftest::run_selftest();
            for c in &checks {
                println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
