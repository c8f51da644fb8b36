use clap::{Parser, Subcommand};
use mocp::datagen::ToyProcess;
use mocp::error::Result;
use mocp::harness::{load_outcomes, report, run_experiment, RunConfig};
use mocp::rng::{phase, RngStream};
use mocp::selftest::{run_all, run_criterion, CriterionOutcome};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mocp", version, about = "Multi-output conformal prediction experiments")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a toy dataset as CSV.
    Generate {
        #[arg(long, default_value = "unimodal")]
        process: ToyProcess,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep the raw scale instead of standardizing.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Turn stored records into tables and rank summaries.
    Report {
        /// Directory holding `index.csv`.
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<input>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks.
    Selftest {
        /// Only these criteria (1 to 9).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn generate(process: ToyProcess, n: usize, seed: u64, raw: bool, out: &PathBuf) -> Result<()> {
    let data = process.generate(n, &RngStream::new(seed).child(phase::DATA), !raw)?;
    data.write_csv(out)?;
    println!("wrote {n} rows to {}", out.display());
    Ok(())
}

fn run(config: &PathBuf, output_dir: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(config)?;
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    let out = run_experiment(&cfg)?;
    for seed in &out.seeds {
        if let Some(e) = &seed.error {
            println!("seed {}: aborted: {e}", seed.seed);
        }
        for s in &seed.skipped {
            println!("seed {}: {} skipped ({})", seed.seed, s.method, s.reason);
        }
        for r in &seed.records {
            match &r.error {
                Some(e) => println!("seed {} {}: error: {e}", r.seed, r.method),
                None => println!(
                    "seed {} {:<12} mc={:.4} size={} wsc={} cec_x={} cal={:.2}s test={:.2}s",
                    r.seed,
                    r.method.name(),
                    r.mc.unwrap_or(f64::NAN),
                    fmt_opt(r.median_size),
                    fmt_opt(r.wsc),
                    fmt_opt(r.cec_x),
                    r.cal_time_s,
                    r.test_time_s
                ),
            }
        }
    }
    if let Some(dir) = &cfg.output_dir {
        println!("records in {} (config {})", dir.display(), out.config_hash);
    }
    Ok(if out.has_errors() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn selftest(only: &[u8]) -> Result<ExitCode> {
    let outcomes: Vec<CriterionOutcome> = if only.is_empty() {
        run_all()
    } else {
        only.iter().map(|&id| run_criterion(id)).collect::<Result<_>>()?
    };
    for o in &outcomes {
        println!("{o}");
    }
    Ok(if outcomes.iter().all(|o| o.passed) { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { process, n, seed, raw, out } => generate(process, n, seed, raw, &out).map(|_| ExitCode::SUCCESS),
        Command::Run { config, output_dir } => run(&config, output_dir),
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input.join("report"));
            let outcomes = load_outcomes(&input)?;
            let s = report(&outcomes, &out)?;
            println!(
                "{} records, {} rows; ranked {} into {}",
                s.records,
                s.long_rows,
                s.ranked_metrics.join(", "),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { only } => selftest(&only),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

