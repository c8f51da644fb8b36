use super::{CdSummary, RankMatrix};
use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// One observation of the long-format metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub fn read_long_csv(path: impl AsRef<Path>) -> Result<Vec<LongRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_long_csv(path: impl AsRef<Path>, rows: &[LongRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// How raw metric values map to "lower is better".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Minimize,
    Maximize,
    /// Distance `|v − target|`, e.g. coverage against `1 − α`.
    Target(f64),
}

impl Orientation {
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            Orientation::Minimize => v,
            Orientation::Maximize => -v,
            Orientation::Target(t) => (v - t).abs(),
        }
    }
}

/// Ranks methods on per-dataset means of `metric` over seeds. Only methods
/// observed on every dataset are kept; non-finite values are ignored.
pub fn rank_matrix_from_long(rows: &[LongRow], metric: &str, orientation: Orientation) -> Result<RankMatrix> {
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric && r.value.is_finite()) {
        let e = sums.entry((r.dataset.clone(), r.method.clone())).or_insert((0.0, 0));
        e.0 += orientation.apply(r.value);
        e.1 += 1;
    }
    let datasets: Vec<String> = sums.keys().map(|(d, _)| d.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let methods: Vec<String> = sums
        .keys()
        .map(|(_, m)| m.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|m| datasets.iter().all(|d| sums.contains_key(&(d.clone(), m.clone()))))
        .collect();
    if datasets.is_empty() || methods.is_empty() {
        return Err(Error::InvalidData(format!("no complete observations of metric '{metric}'")));
    }
    let values = Array2::from_shape_fn((datasets.len(), methods.len()), |(i, j)| {
        let (s, c) = sums[&(datasets[i].clone(), methods[j].clone())];
        s / c as f64
    });
    RankMatrix::new(datasets, methods, values)
}

/// Writes one row per dataset with each method's rank, then the mean ranks.
pub fn write_ranks_csv(path: impl AsRef<Path>, metric: &str, matrix: &RankMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    write_ranks(&mut writer, metric, matrix)?;
    writer.flush()?;
    Ok(())
}

/// Appends the rank block of one metric, header included.
pub fn write_ranks<W: std::io::Write>(writer: &mut csv::Writer<W>, metric: &str, matrix: &RankMatrix) -> Result<()> {
    let mut header = vec!["metric".to_string(), "dataset".to_string()];
    header.extend(matrix.methods.iter().cloned());
    writer.write_record(&header)?;
    for (i, d) in matrix.datasets.iter().enumerate() {
        let mut record = vec![metric.to_string(), d.clone()];
        record.extend(matrix.ranks.row(i).iter().map(|r| r.to_string()));
        writer.write_record(&record)?;
    }
    let mut record = vec![metric.to_string(), "mean_rank".to_string()];
    record.extend(matrix.mean_ranks().iter().map(|r| r.to_string()));
    writer.write_record(&record)?;
    Ok(())
}

pub fn write_groups_json(path: impl AsRef<Path>, summaries: &BTreeMap<String, CdSummary>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), summaries)?;
    Ok(())
}
