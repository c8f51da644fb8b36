//! Rank-based comparison of methods across datasets: Friedman omnibus test,
//! pairwise Wilcoxon signed-rank tests with Holm's step-down correction, and
//! the data behind a critical-difference diagram.

mod ks;
mod table;

pub use ks::{kolmogorov_cdf, ks_statistic_uniform, ks_test_uniform};
pub use table::{rank_matrix_from_long, read_long_csv, write_groups_json, write_long_csv, write_ranks, write_ranks_csv, LongRow, Orientation};

use crate::error::{Error, Result};
use crate::special::{chi2_sf, normal_sf};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Average ranks (1-based, ties share the mean rank) of `values`, ascending.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Datasets × methods table, lower values better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMatrix {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub values: Array2<f64>,
    pub ranks: Array2<f64>,
}

impl RankMatrix {
    pub fn new(datasets: Vec<String>, methods: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (datasets.len(), methods.len()) {
            return Err(Error::InvalidData("rank matrix labels do not match its shape".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidData("rank matrix contains NaN".into()));
        }
        let mut ranks = Array2::zeros(values.dim());
        for (i, row) in values.rows().into_iter().enumerate() {
            let r = average_ranks(&row.to_vec());
            ranks.row_mut(i).assign(&ndarray::Array1::from(r));
        }
        Ok(Self { datasets, methods, values, ranks })
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        self.ranks.columns().into_iter().map(|c| c.mean().unwrap_or(f64::NAN)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Friedman chi-square statistic with the ties correction, referred to
/// χ² with `m − 1` degrees of freedom.
pub fn friedman_test(matrix: &RankMatrix) -> Result<TestResult> {
    let (n, k) = (matrix.n_datasets(), matrix.n_methods());
    if n < 2 || k < 2 {
        return Err(Error::InvalidData("the Friedman test needs at least 2 datasets and 2 methods".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let rank_sums: f64 = matrix.ranks.columns().into_iter().map(|c| c.sum().powi(2)).sum();
    let numerator = 12.0 / (nf * kf * (kf + 1.0)) * rank_sums - 3.0 * nf * (kf + 1.0);
    let mut ties = 0.0;
    for row in matrix.ranks.rows() {
        let mut r = row.to_vec();
        r.sort_by(f64::total_cmp);
        for group in r.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            ties += t * t * t - t;
        }
    }
    let denominator = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    if denominator <= 1e-12 {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0 });
    }
    let statistic = (numerator / denominator).max(0.0);
    Ok(TestResult { statistic, p_value: chi2_sf(kf - 1.0, statistic) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    /// Exact for up to 25 nonzero differences, normal approximation above.
    Auto,
    Exact,
    Normal,
}

pub const WILCOXON_EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `a − b`.
    pub w_plus: f64,
    pub p_value: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test of `a − b`, dropping zero differences.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(a, b, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(a: &[f64], b: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidData("Wilcoxon test needs paired samples of equal length".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidData("Wilcoxon test received NaN".into()));
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult { w_plus: 0.0, p_value: 1.0, n: 0, exact: true });
    }
    if n < 5 {
        return Err(Error::InvalidData(format!("Wilcoxon test needs at least 5 nonzero differences, got {n}")));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let exact = match method {
        WilcoxonMethod::Auto => n <= WILCOXON_EXACT_LIMIT,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p_value = if exact {
        exact_p(&ranks, w_plus)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let ties: f64 = sorted.chunk_by(|x, y| x == y).map(|g| (g.len() as f64).powi(3) - g.len() as f64).sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
            (2.0 * normal_sf(z)).min(1.0)
        }
    };
    Ok(WilcoxonResult { w_plus, p_value, n, exact })
}

/// Exact two-sided p-value by enumerating all `2ⁿ` sign patterns through a
/// subset-sum count over doubled (integer) ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let patterns: f64 = counts.iter().sum();
    let w = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / patterns;
    let upper: f64 = counts[w..].iter().sum::<f64>() / patterns;
    (2.0 * lower.min(upper)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

/// Holm's step-down procedure; adjusted p-values are returned in input order.
pub fn holm_correction(p_values: &[f64], level: f64) -> Result<HolmResult> {
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidData("p-values must lie in [0, 1]".into()));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[i]).min(1.0));
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|p| *p <= level).collect();
    Ok(HolmResult { adjusted, reject })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    pub p_value: f64,
    pub adjusted_p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdSummary {
    pub methods: Vec<String>,
    pub mean_ranks: Vec<f64>,
    pub friedman: TestResult,
    pub level: f64,
    pub pairwise: Vec<PairwiseComparison>,
    /// Maximal runs of methods, in mean-rank order, with no rejected pair.
    pub groups: Vec<Vec<String>>,
}

/// Mean ranks and groups of methods not distinguishable at `level`.
pub fn cd_summary(matrix: &RankMatrix, level: f64) -> Result<CdSummary> {
    let k = matrix.n_methods();
    let friedman = friedman_test(matrix)?;
    let mean_ranks = matrix.mean_ranks();
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let a = matrix.values.column(i).to_vec();
            let b = matrix.values.column(j).to_vec();
            // Too few informative datasets: the pair cannot be separated.
            let p = wilcoxon_signed_rank(&a, &b).map(|r| r.p_value).unwrap_or(1.0);
            pairs.push((i, j));
            raw.push(p);
        }
    }
    let holm = holm_correction(&raw, level)?;
    let significant = friedman.p_value < level;
    let mut rejected = vec![vec![false; k]; k];
    let pairwise = pairs
        .iter()
        .enumerate()
        .map(|(idx, &(i, j))| {
            let reject = significant && holm.reject[idx];
            rejected[i][j] = reject;
            rejected[j][i] = reject;
            PairwiseComparison {
                first: matrix.methods[i].clone(),
                second: matrix.methods[j].clone(),
                p_value: raw[idx],
                adjusted_p_value: holm.adjusted[idx],
                reject,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]));
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && (start..=end).all(|s| !rejected[order[s]][order[end + 1]]) {
            end += 1;
        }
        if runs.last().is_none_or(|&(_, e)| end > e) {
            runs.push((start, end));
        }
    }
    let groups = runs
        .into_iter()
        .map(|(s, e)| order[s..=e].iter().map(|&i| matrix.methods[i].clone()).collect())
        .collect();
    Ok(CdSummary { methods: matrix.methods.clone(), mean_ranks, friedman, level, pairwise, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0, 0.0]), vec![2.5, 2.5, 4.0, 1.0]);
        let m = RankMatrix::new(names("d", 2), names("m", 4), Array2::from_shape_fn((2, 4), |(i, j)| ((i + j) % 3) as f64))
            .unwrap();
        for row in m.ranks.rows() {
            assert_eq!(row.sum(), 10.0);
        }
    }

    #[test]
    fn friedman_identical_ordering() {
        let values = Array2::from_shape_fn((10, 3), |(_, j)| j as f64);
        let m = RankMatrix::new(names("d", 10), names("m", 3), values).unwrap();
        let r = friedman_test(&m).unwrap();
        assert!((r.statistic - 20.0).abs() < 1e-12);
        assert!((r.p_value - (-10.0f64).exp()).abs() < 1e-12);
        let permuted = Array2::from_shape_fn((10, 3), |(_, j)| [2.0, 0.0, 1.0][j]);
        let m2 = RankMatrix::new(names("d", 10), names("m", 3), permuted).unwrap();
        assert!((friedman_test(&m2).unwrap().statistic - 20.0).abs() < 1e-12);
    }

    #[test]
    fn friedman_all_tied() {
        let m = RankMatrix::new(names("d", 4), names("m", 3), Array2::from_elem((4, 3), 1.5)).unwrap();
        assert_eq!(friedman_test(&m).unwrap(), TestResult { statistic: 0.0, p_value: 1.0 });
    }

    #[test]
    fn wilcoxon_small_exact() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!((r.p_value - 0.0625).abs() < 1e-15);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(wilcoxon_signed_rank(&a, &a).unwrap().p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn exact_null_sums_to_one() {
        // Brute-force enumeration of sign patterns for n = 8 with ties.
        let ranks = average_ranks(&[1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 5.0, 8.0]);
        let n = ranks.len();
        for w in [0.0, 7.5, 18.0, 36.0] {
            let mut le = 0usize;
            let mut ge = 0usize;
            for mask in 0u32..(1 << n) {
                let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                le += (s <= w + 1e-9) as usize;
                ge += (s >= w - 1e-9) as usize;
            }
            let expected = (2.0 * le.min(ge) as f64 / (1u32 << n) as f64).min(1.0);
            assert!((exact_p(&ranks, w) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_and_normal_paths_agree_at_25() {
        let mut rng = RngStream::new(11).rng();
        for _ in 0..20 {
            let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>() + 0.1).collect();
            let e = wilcoxon_signed_rank_with(&a, &b, WilcoxonMethod::Exact).unwrap();
            let n = wilcoxon_signed_rank_with(&a, &b, WilcoxonMethod::Normal).unwrap();
            assert!((e.p_value - n.p_value).abs() < 0.02, "{} vs {}", e.p_value, n.p_value);
        }
    }

    #[test]
    fn holm_step_down() {
        let h = holm_correction(&[0.04], 0.05).unwrap();
        assert_eq!(h.reject, vec![true]);
        let h = holm_correction(&[0.04, 0.01], 0.05).unwrap();
        assert_eq!(h.reject, vec![true, true]);
        assert_eq!(h.adjusted, vec![0.04, 0.02]);
        let h = holm_correction(&[0.01, 0.03, 0.02, 0.5], 0.05).unwrap();
        let mut pairs: Vec<(f64, f64)> = [0.01, 0.03, 0.02, 0.5].into_iter().zip(h.adjusted).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(holm_correction(&[1.5], 0.05).is_err());
    }

    #[test]
    fn cd_groups() {
        let same = RankMatrix::new(names("d", 6), names("m", 2), Array2::from_elem((6, 2), 0.3)).unwrap();
        assert_eq!(cd_summary(&same, 0.05).unwrap().groups, vec![vec!["m0".to_string(), "m1".to_string()]]);
        // Strict dominance over 30 datasets separates all three methods.
        let mut rng = RngStream::new(2).rng();
        let values = Array2::from_shape_fn((30, 3), |(_, j)| j as f64 + 0.1 * rng.random::<f64>());
        let m = RankMatrix::new(names("d", 30), vec!["a".into(), "b".into(), "c".into()], values).unwrap();
        let s = cd_summary(&m, 0.05).unwrap();
        assert_eq!(s.groups, vec![vec!["a".to_string()], vec!["b".to_string()], vec!["c".to_string()]]);
        assert_eq!(s.mean_ranks, vec![1.0, 2.0, 3.0]);
        for p in &s.pairwise {
            let reverse = s.pairwise.iter().find(|q| q.first == p.second && q.second == p.first);
            assert!(reverse.is_none());
        }
    }
}
