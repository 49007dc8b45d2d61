use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ragan_cli::{run_and_emit, CliError, ExperimentConfig, RawConfig};
use ragan_core::channels::{dataset_to_text, synthetic_multipath};
use ragan_core::Streams;

#[derive(Parser)]
#[command(name = "ragan", version, about = "End-to-end link training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one scheme, sweep BLER over the Eb/N0 grid, write CSVs.
    Train {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scheme: Option<String>,
        /// Output directory for losses.csv and bler.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Messages per Eb/N0 grid point.
        #[arg(long = "eval-n")]
        eval_n: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Override any config key, e.g. `--set channel=rayleigh`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write a synthetic multipath channel file (one `re,im` gain per line).
    SynthChannel {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        users: usize,
        #[arg(long, default_value_t = 1000)]
        subcarriers: usize,
        #[arg(long, default_value_t = 5)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn flags(
    seed: Option<u64>,
    scheme: Option<String>,
    out: Option<PathBuf>,
    eval_n: Option<usize>,
    epochs: Option<usize>,
    set: Vec<String>,
) -> Result<RawConfig, CliError> {
    let mut raw = RawConfig::default();
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        raw.set(k.trim(), v.trim())?;
    }
    if let Some(v) = seed {
        raw.set("seed", v.to_string())?;
    }
    if let Some(v) = scheme {
        raw.set("scheme", v)?;
    }
    if let Some(v) = out {
        raw.set("out", v.to_string_lossy())?;
    }
    if let Some(v) = eval_n {
        raw.set("eval_n", v.to_string())?;
    }
    if let Some(v) = epochs {
        raw.set("epochs", v.to_string())?;
    }
    Ok(raw)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            seed,
            scheme,
            out,
            eval_n,
            epochs,
            set,
        } => {
            let mut raw = match &config {
                Some(path) => RawConfig::load(path)?,
                None => RawConfig::default(),
            };
            raw.merge(flags(seed, scheme, out, eval_n, epochs, set)?);
            let cfg = ExperimentConfig::from_entries(&raw)?;
            let result = run_and_emit(&cfg)?;
            let report = result.report();
            println!(
                "{} on {}: {} epochs x {} iterations in {:.1?}",
                cfg.scheme,
                cfg.channel,
                report.epochs.len(),
                report.inner_iterations,
                report.wall_time
            );
            for p in &result.curve.points {
                println!("  {:>6.2} dB  BLER {:.3e}", p.ebn0_db, p.bler);
            }
            println!("wrote {}", cfg.out.display());
            Ok(())
        }
        Command::SynthChannel {
            out,
            users,
            subcarriers,
            paths,
            seed,
        } => {
            if users == 0 || subcarriers == 0 || paths == 0 {
                return Err(CliError::Config(
                    "users, subcarriers and paths must be at least 1".into(),
                ));
            }
            let mut rng = Streams::new(seed).stream("synthetic-channel");
            let samples = synthetic_multipath(users, subcarriers, paths, &mut rng);
            std::fs::write(&out, dataset_to_text(&samples)).map_err(|e| CliError::io(&out, e))?;
            println!("wrote {} gains to {}", samples.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap's own usage errors would exit with 2, which is reserved for
    // training aborts.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
