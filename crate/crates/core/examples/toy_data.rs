//! Draws both toy processes and prints a few summary numbers.

use mocp::datagen::ToyProcess;
use mocp::models::{ConditionalModel, ToyOracle};
use mocp::rng::RngStream;

fn main() -> mocp::error::Result<()> {
    for process in [ToyProcess::Unimodal, ToyProcess::Bimodal] {
        let raw = process.generate(5000, &RngStream::new(1), false)?;
        let (lo, hi) = process.x_range();
        println!("{}: x in [{lo}, {hi}), first raw y = {:?}", process.name(), raw.y_row(0));

        let data = process.generate(5000, &RngStream::new(1), true)?;
        let oracle = ToyOracle::new(process);
        let nll: f64 = (0..data.len())
            .map(|i| -oracle.log_density(data.x_row(i), data.y_row(i)).unwrap())
            .sum::<f64>()
            / data.len() as f64;
        println!("  oracle mean negative log-likelihood (standardized) {nll:.3}");
    }
    Ok(())
}
