use super::kmeans::{kmeans_pp, Partition};
use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::rng::RngStream;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CecConfig {
    pub clusters: usize,
    /// Draws per input for the sorted log-density features of CEC-V.
    pub density_samples: usize,
    pub max_iter: usize,
}

impl Default for CecConfig {
    fn default() -> Self {
        Self { clusters: 10, density_samples: 20, max_iter: 100 }
    }
}

/// Requested cluster count, reduced to `max(2, ⌊n_test/500⌋)` on small test
/// sets and never above the number of clustered points.
pub fn cluster_count(requested: usize, n_test: usize, n_points: usize) -> usize {
    requested.min((n_test / 500).max(2)).min(n_points).max(1)
}

/// Squared deviation of per-cell coverage from `1 − α`, each point
/// contributing its own cell's error.
pub fn cec(memberships: &[bool], labels: &[usize], alpha: f64) -> Result<f64> {
    if memberships.len() != labels.len() || memberships.is_empty() {
        return Err(Error::InvalidData("CEC needs one label per membership".into()));
    }
    let cells = labels.iter().max().map_or(0, |m| m + 1);
    let mut hits = vec![0usize; cells];
    let mut counts = vec![0usize; cells];
    for (&m, &l) in memberships.iter().zip(labels) {
        counts[l] += 1;
        hits[l] += m as usize;
    }
    let n = memberships.len() as f64;
    Ok(counts
        .iter()
        .zip(&hits)
        .filter(|(c, _)| **c > 0)
        .map(|(&c, &h)| c as f64 / n * (h as f64 / c as f64 - (1.0 - alpha)).powi(2))
        .sum())
}

/// CEC over a partition of the input space fitted beforehand.
pub fn cec_x(test_x: ArrayView2<f64>, memberships: &[bool], partition: &Partition, alpha: f64) -> Result<f64> {
    cec(memberships, &partition.assign_all(test_x), alpha)
}

/// Sorted log-densities of `m` fresh draws at each input; row `j` uses
/// `stream.child(j)`.
pub fn density_features(
    model: &dyn ConditionalModel,
    x: ArrayView2<f64>,
    density_samples: usize,
    stream: &RngStream,
) -> Result<Array2<f64>> {
    if density_samples == 0 {
        return Err(Error::InvalidConfig("CEC-V needs at least one density sample".into()));
    }
    let rows = (0..x.nrows())
        .into_par_iter()
        .map(|j| {
            let xj = x.row(j).to_vec();
            let draws = model.sample(&xj, density_samples, &mut stream.child(j as u64).rng())?;
            let mut v = model.log_density_batch(&xj, draws.view())?;
            if v.iter().any(|d| d.is_nan()) {
                return Err(Error::Numerical("NaN log-density in CEC-V features".into()));
            }
            v.sort_by(f64::total_cmp);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Array2::from_shape_fn((x.nrows(), density_samples), |(i, k)| rows[i][k]))
}

/// CEC over clusters of the log-density features: the partition is fitted on
/// validation features and applied to test features.
pub fn cec_v(
    val_features: ArrayView2<f64>,
    test_features: ArrayView2<f64>,
    memberships: &[bool],
    config: &CecConfig,
    alpha: f64,
    stream: &RngStream,
) -> Result<f64> {
    let j = cluster_count(config.clusters, test_features.nrows(), val_features.nrows());
    let partition = kmeans_pp(val_features, j, &mut stream.rng(), config.max_iter)?;
    cec_x(test_features, memberships, &partition, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConditionalGaussian;
    use ndarray::Array2;

    #[test]
    fn single_cell_is_squared_marginal_error() {
        let m = [true, true, false, true, true];
        let v = cec(&m, &[0; 5], 0.2).unwrap();
        assert!((v - 0.0).abs() < 1e-15);
        let m = [true, false];
        assert!((cec(&m, &[0, 0], 0.2).unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn two_cells_hand_computed() {
        let mut m = vec![true; 7];
        m.extend([false; 3]);
        m.extend([true; 9]);
        m.push(false);
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        assert!((cec(&m, &labels, 0.2).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn perfect_cells_and_empty_cells() {
        let m = [true, true, true, true, false, true, true, true, true, false];
        let labels = [0, 0, 0, 0, 0, 3, 3, 3, 3, 3];
        assert_eq!(cec(&m, &labels, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn cluster_count_fallback() {
        assert_eq!(cluster_count(10, 5000, 2000), 10);
        assert_eq!(cluster_count(10, 2387, 2000), 4);
        assert_eq!(cluster_count(10, 100, 2000), 2);
        assert_eq!(cluster_count(10, 100, 1), 1);
    }

    #[test]
    fn features_are_sorted() {
        let model = ConditionalGaussian::standard(1, 2);
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let f = density_features(&model, x.view(), 20, &RngStream::new(1)).unwrap();
        for row in f.rows() {
            assert!(row.windows(2).into_iter().all(|w| w[0] <= w[1]));
        }
        let one = density_features(&model, x.view(), 1, &RngStream::new(1)).unwrap();
        assert_eq!(one.ncols(), 1);
    }

    #[test]
    fn homoscedastic_single_cluster() {
        let model = ConditionalGaussian::standard(1, 2);
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let f = density_features(&model, x.view(), 5, &RngStream::new(2)).unwrap();
        let m: Vec<bool> = (0..40).map(|i| i % 4 != 0).collect();
        let cfg = CecConfig { clusters: 1, ..CecConfig::default() };
        let v = cec_v(f.view(), f.view(), &m, &cfg, 0.2, &RngStream::new(3)).unwrap();
        assert!((v - (0.75f64 - 0.8).powi(2)).abs() < 1e-12);
    }
}
