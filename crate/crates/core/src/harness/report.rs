use super::run::{RunRecord, SeedOutcome};
use crate::error::{Error, Result};
use crate::stats::{cd_summary, rank_matrix_from_long, write_groups_json, write_long_csv, write_ranks, LongRow, Orientation};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Significance level for the rank groups.
pub const GROUP_LEVEL: f64 = 0.05;

const METRICS: [&str; 8] = ["mc", "mean_size", "median_size", "wsc", "cec_x", "cec_v", "cal_time_s", "test_time_s"];

fn metric_value(r: &RunRecord, metric: &str) -> Option<f64> {
    match metric {
        "mc" => r.mc,
        "mean_size" => r.mean_size,
        "median_size" => r.median_size,
        "wsc" => r.wsc,
        "cec_x" => r.cec_x,
        "cec_v" => r.cec_v,
        "cal_time_s" => Some(r.cal_time_s),
        "test_time_s" => Some(r.test_time_s),
        _ => None,
    }
}

/// Coverage metrics are ranked by distance to `1 − α`, everything else is
/// lower-is-better.
pub fn orientation(metric: &str, alpha: f64) -> Orientation {
    match metric {
        "mc" | "wsc" => Orientation::Target(1.0 - alpha),
        _ => Orientation::Minimize,
    }
}

/// Flattens successful records into the long table.
pub fn long_rows(records: &[RunRecord]) -> Vec<LongRow> {
    let mut rows = Vec::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        for metric in METRICS {
            if let Some(value) = metric_value(r, metric) {
                rows.push(LongRow {
                    dataset: r.dataset.clone(),
                    method: r.method.name().to_string(),
                    seed: r.seed,
                    metric: metric.to_string(),
                    value,
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRow {
    dataset: String,
    method: String,
    metric: String,
    n: usize,
    mean: f64,
    std: f64,
    median: f64,
}

fn summarize(rows: &[LongRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.dataset.clone(), r.method.clone(), r.metric.clone())).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((dataset, method, metric), mut v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            v.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
            SummaryRow { dataset, method, metric, n, mean, std, median }
        })
        .collect()
}

/// What `report` wrote.
#[derive(Debug, Clone, Default)]
pub struct ReportSummary {
    pub records: usize,
    pub long_rows: usize,
    pub ranked_metrics: Vec<String>,
}

/// Writes `long.csv`, `summary.csv`, `ranks.csv` and `groups.json` to `out`.
pub fn report(outcomes: &[SeedOutcome], out: &Path) -> Result<ReportSummary> {
    let records: Vec<RunRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    if records.is_empty() {
        return Err(Error::InvalidData("no records to report".into()));
    }
    let alpha = records[0].alpha;
    if records.iter().any(|r| r.alpha != alpha) {
        log::warn!("records mix several alphas; coverage metrics are ranked against 1 - {alpha}");
    }
    std::fs::create_dir_all(out)?;
    let rows = long_rows(&records);
    write_long_csv(out.join("long.csv"), &rows)?;

    let mut writer = csv::Writer::from_path(out.join("summary.csv"))?;
    for row in summarize(&rows) {
        writer.serialize(row)?;
    }
    writer.flush()?;

    let mut ranks = csv::WriterBuilder::new().flexible(true).from_path(out.join("ranks.csv"))?;
    let mut groups = BTreeMap::new();
    let mut ranked = Vec::new();
    for metric in METRICS {
        let matrix = match rank_matrix_from_long(&rows, metric, orientation(metric, alpha)) {
            Ok(m) => m,
            Err(e) => {
                log::info!("not ranking {metric}: {e}");
                continue;
            }
        };
        write_ranks(&mut ranks, metric, &matrix)?;
        match cd_summary(&matrix, GROUP_LEVEL) {
            Ok(s) => {
                groups.insert(metric.to_string(), s);
            }
            Err(e) => log::info!("no significance groups for {metric}: {e}"),
        }
        ranked.push(metric.to_string());
    }
    ranks.flush()?;
    write_groups_json(out.join("groups.json"), &groups)?;
    Ok(ReportSummary { records: records.len(), long_rows: rows.len(), ranked_metrics: ranked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::MethodId;
    use crate::stats::read_long_csv;

    fn record(dataset: &str, method: MethodId, seed: u64, mc: f64, size: f64) -> RunRecord {
        RunRecord {
            config_hash: "h".into(),
            dataset: dataset.into(),
            model: "oracle".into(),
            method,
            seed,
            alpha: 0.2,
            n_cal: 10,
            n_test: 10,
            mc: Some(mc),
            mean_size: Some(size),
            median_size: Some(size),
            wsc: None,
            cec_x: None,
            cec_v: None,
            q_hat: Some(1.0),
            cal_time_s: 0.1,
            test_time_s: 0.2,
            timing_excludes_sampling: false,
            error: None,
        }
    }

    fn outcome(records: Vec<RunRecord>) -> SeedOutcome {
        SeedOutcome {
            config_hash: "h".into(),
            seed: 0,
            dataset: "d".into(),
            model: "oracle".into(),
            records,
            skipped: vec![],
            error: None,
        }
    }

    #[test]
    fn single_record_gives_one_row_per_metric() {
        let dir = tempfile::tempdir().unwrap();
        let s = report(&[outcome(vec![record("a", MethodId::DrCp, 0, 0.8, 2.0)])], dir.path()).unwrap();
        assert_eq!(s.records, 1);
        let rows = read_long_csv(dir.path().join("long.csv")).unwrap();
        let metrics: Vec<_> = rows.iter().map(|r| r.metric.as_str()).collect();
        assert_eq!(metrics, ["mc", "mean_size", "median_size", "cal_time_s", "test_time_s"]);
    }

    #[test]
    fn coverage_is_ranked_by_distance_to_target() {
        // Over-coverage at 0.95 is worse than 0.79 under |MC − 0.8|.
        let mut recs = Vec::new();
        for d in 0..6 {
            let ds = format!("d{d}");
            recs.push(record(&ds, MethodId::DrCp, 0, 0.79, 1.0));
            recs.push(record(&ds, MethodId::Pcp, 0, 0.95, 2.0));
        }
        let dir = tempfile::tempdir().unwrap();
        report(&[outcome(recs)], dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("ranks.csv")).unwrap();
        let mean_row = text.lines().find(|l| l.starts_with("mc,mean_rank")).unwrap();
        assert_eq!(mean_row, "mc,mean_rank,1,2");
    }

    #[test]
    fn ranks_agree_with_cd_summary() {
        let mut recs = Vec::new();
        for d in 0..8 {
            let ds = format!("d{d}");
            for (k, m) in [MethodId::DrCp, MethodId::LCp, MethodId::Pcp].into_iter().enumerate() {
                recs.push(record(&ds, m, 0, 0.8, (k as f64 + 1.0) * (1.0 + 0.1 * d as f64)));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        report(&[outcome(recs.clone())], dir.path()).unwrap();
        let groups: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("groups.json")).unwrap()).unwrap();
        let matrix = crate::stats::rank_matrix_from_long(&long_rows(&recs), "mean_size", Orientation::Minimize).unwrap();
        let direct = cd_summary(&matrix, GROUP_LEVEL).unwrap();
        assert_eq!(groups["mean_size"], serde_json::to_value(&direct).unwrap());
        assert_eq!(direct.mean_ranks, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(&[], dir.path()).is_err());
    }
}
