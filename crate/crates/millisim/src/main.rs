use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use millisim::config::{Config, ConfigError};
use millisim::metrics::run_csv;
use millisim::sim::run_single;
use millisim::sweep::{parse_axis, sweep_and_summarize, write_single_run, SweepAxis};

#[derive(Parser)]
#[command(
    name = "millisim",
    about = "System-level simulator of a CA-enabled 5G downlink with millisecond cross-carrier slice scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. -O embb_rate_mbps=120. Repeatable.
    #[arg(short = 'O', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Scheduling policy: no_ca, primary_only, or millislice.
    #[arg(short, long)]
    policy: Option<String>,
    /// Simulated duration in seconds.
    #[arg(short, long)]
    duration: Option<f64>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single replication and write run_<id>.csv.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// RNG seed.
        #[arg(short, long)]
        seed: Option<u64>,
        /// Also write trace_<id>.log with one line per routed BSR.
        #[arg(long)]
        trace: bool,
        /// Print the run CSV to stdout instead of writing files.
        #[arg(long)]
        stdout: bool,
    },
    /// Execute a grid of runs and write per-run files plus summary.csv.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Seeds, e.g. --seeds 1,2,3 or --seeds 1..10 (inclusive).
        #[arg(long, default_value = "1")]
        seeds: String,
        /// Sweep axis key=v1,v2,... (repeatable; cross product of all axes).
        #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
        axes: Vec<String>,
    },
}

fn load_config(common: &CommonOpts) -> Result<Config, ConfigError> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    cfg.apply_overrides(common.overrides.iter().map(|s| s.as_str()))?;
    if let Some(policy) = &common.policy {
        cfg.set("policy", policy)?;
    }
    if let Some(duration) = common.duration {
        cfg.set("duration_s", &duration.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let spec = spec.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range {spec:?}"))?;
        if lo > hi {
            return Err(format!("empty seed range {spec:?}"));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| format!("bad seed {:?}", s.trim()))
        })
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run_command(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn run_command(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            common,
            seed,
            trace,
            stdout,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let id = format!("{}_s{}", cfg.policy.as_str(), cfg.seed);

            let mut trace_buf: Vec<u8> = Vec::new();
            let stats = if trace {
                run_single(&cfg, Some(&mut trace_buf))
            } else {
                run_single(&cfg, None)
            };
            stats
                .verify_conservation()
                .map_err(CliError::Runtime)?;

            if stdout {
                print!("{}", run_csv(&stats));
            } else {
                let path = write_single_run(&stats, &common.out, &id)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                println!("wrote {}", path.display());
            }
            if trace {
                std::fs::create_dir_all(&common.out)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                let path = common.out.join(format!("trace_{id}.log"));
                std::fs::write(&path, trace_buf)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Sweep {
            common,
            seeds,
            axes,
        } => {
            let cfg = load_config(&common)?;
            let seeds = parse_seeds(&seeds).map_err(CliError::Config)?;
            let axes: Vec<SweepAxis> = axes
                .iter()
                .map(|a| parse_axis(a))
                .collect::<Result<_, _>>()
                .map_err(CliError::Config)?;
            let outcome = sweep_and_summarize(&cfg, &axes, &seeds, &common.out)?;
            println!(
                "completed {} runs, {} failed; summary at {}",
                outcome.completed.len(),
                outcome.failures.len(),
                common.out.join("summary.csv").display()
            );
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Runtime("some replications failed".to_string()))
            }
        }
    }
}
