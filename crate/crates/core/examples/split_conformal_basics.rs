//! The split-conformal threshold on a handful of scores.

use mocp::calibration::{conformal_quantile, k_alpha};
use mocp::datagen::CoverageLaw;

fn main() -> mocp::error::Result<()> {
    let scores = [0.3, 1.2, 0.7, 2.5, 0.1, 0.9, 1.8, 0.4, 1.1];
    let alpha = 0.2;
    let cal = conformal_quantile(&scores, alpha)?;
    println!("n = {}, k_alpha = {}, q_hat = {}", cal.n_cal(), cal.k_alpha, cal.q_hat);
    println!("score 1.5 inside: {}", cal.contains(1.5));
    println!("score 2.0 inside: {}", cal.contains(2.0));

    // With 199 points the coverage given the calibration set is Beta(160, 40).
    let law = CoverageLaw::new(199, alpha);
    println!("k_alpha(199) = {}, coverage mean {:.4}, sd {:.4}", k_alpha(199, alpha), law.mean(), law.variance().sqrt());

    // Too few points for the level: the region is everything.
    let tiny = conformal_quantile(&[1.0, 2.0], 0.1)?;
    println!("two points at alpha 0.1: q_hat = {}", tiny.q_hat);
    Ok(())
}
