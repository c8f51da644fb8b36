//! A small end-to-end run with the harness, written to a temporary directory.

use mocp::datagen::ToyProcess;
use mocp::harness::{load_outcomes, report, run_experiment, DatasetSource, ModelConfig, ModelSpec, RunConfig, SplitConfig};
use mocp::metrics::WscConfig;
use mocp::scores::{MethodId, MonteCarloParams};

fn main() -> mocp::error::Result<()> {
    let out = std::env::temp_dir().join("mocp-example-experiment");
    let _ = std::fs::remove_dir_all(&out);
    let cfg = RunConfig {
        dataset: DatasetSource::Toy { process: ToyProcess::Bimodal, n: 1500 },
        model: ModelConfig { spec: ModelSpec::KnnKde { k: 30, sigma_grid: mocp::harness::default_sigma_grid() }, capabilities: None },
        methods: vec![MethodId::DrCp, MethodId::CHdr, MethodId::Pcp, MethodId::CPcp, MethodId::MCp],
        monte_carlo: MonteCarloParams::new(50, 50)?,
        seeds: vec![0, 1],
        split: SplitConfig { cal_size: 300, ..SplitConfig::default() },
        wsc: WscConfig { n_directions: 100, ..WscConfig::default() },
        output_dir: Some(out.clone()),
        ..RunConfig::default()
    };
    let run = run_experiment(&cfg)?;
    for r in run.records() {
        println!(
            "seed {} {:<6} mc {:.3} median size {:.3} cal {:.3}s test {:.3}s",
            r.seed,
            r.method,
            r.mc.unwrap_or(f64::NAN),
            r.median_size.unwrap_or(f64::NAN),
            r.cal_time_s,
            r.test_time_s
        );
    }
    let summary = report(&load_outcomes(&out)?, &out.join("report"))?;
    println!("report for {} records in {}", summary.records, out.join("report").display());
    Ok(())
}
