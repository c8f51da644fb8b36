//! Friedman, Wilcoxon and Holm on a small made-up metric table.

use mocp::stats::{cd_summary, rank_matrix_from_long, LongRow, Orientation};

fn main() -> mocp::error::Result<()> {
    let methods = [("c_hdr", 1.0), ("l_cp", 1.1), ("dr_cp", 1.6), ("m_cp", 2.4)];
    let mut rows = Vec::new();
    for d in 0..12 {
        for (k, (m, base)) in methods.iter().enumerate() {
            let wobble = ((d * 7 + k * 3) % 5) as f64 * 0.05;
            rows.push(LongRow {
                dataset: format!("data{d:02}"),
                method: m.to_string(),
                seed: 0,
                metric: "median_size".into(),
                value: base + wobble,
            });
        }
    }
    let matrix = rank_matrix_from_long(&rows, "median_size", Orientation::Minimize)?;
    let summary = cd_summary(&matrix, 0.05)?;
    println!("friedman statistic {:.3}, p {:.2e}", summary.friedman.statistic, summary.friedman.p_value);
    for (m, r) in summary.methods.iter().zip(&summary.mean_ranks) {
        println!("  {m:<6} mean rank {r:.2}");
    }
    for p in &summary.pairwise {
        println!("  {} vs {}: p {:.4}, holm {:.4}, reject {}", p.first, p.second, p.p_value, p.adjusted_p_value, p.reject);
    }
    println!("groups: {:?}", summary.groups);
    Ok(())
}
