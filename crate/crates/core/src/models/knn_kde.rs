//! Nearest-neighbour weighted kernel density model.
//!
//! For an input `x` the `k` nearest training inputs receive weight `1/k` and
//! the predictive density is the mixture `Σ_i w_i N(y; y_i, σ² I)` over their
//! targets.

use super::mixture::DiagonalMixture;
use super::{check_dims, check_level, Capabilities, ConditionalModel};
use crate::data::{row, Dataset};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub const DEFAULT_NEIGHBORS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnKde {
    train_x: Array2<f64>,
    train_y: Array2<f64>,
    k: usize,
    sigma: f64,
}

impl KnnKde {
    pub fn new(train: &Dataset, k: usize, sigma: f64) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::InvalidConfig(format!(
                "neighbour count {k} must lie in 1..={}",
                train.len()
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { train_x: train.x.clone(), train_y: train.y.clone(), k, sigma })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Indices of the `k` nearest training inputs, ties broken by index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        nearest(&self.train_x, x, self.k)
    }

    /// Training targets of the neighbours of `x`, each with weight `1/k`.
    pub fn weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let w = 1.0 / self.k as f64;
        self.neighbors(x).into_iter().map(|i| (i, w)).collect()
    }

    pub fn mixture_at(&self, x: &[f64]) -> Result<DiagonalMixture> {
        check_dims(self, x, None)?;
        mixture_for(&self.train_y, &self.neighbors(x), self.sigma)
    }
}

fn nearest(train_x: &Array2<f64>, x: &[f64], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = (0..train_x.nrows())
        .map(|i| {
            let d2 = row(train_x, i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (d2, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
        dist.truncate(k);
    }
    dist.sort_by(cmp);
    dist.into_iter().map(|(_, i)| i).collect()
}

fn mixture_for(train_y: &Array2<f64>, neighbors: &[usize], sigma: f64) -> Result<DiagonalMixture> {
    let d = train_y.ncols();
    let centers: Vec<f64> = neighbors.iter().flat_map(|&i| row(train_y, i).iter().copied()).collect();
    DiagonalMixture::isotropic(d, centers, sigma)
}

impl ConditionalModel for KnnKde {
    fn input_dim(&self) -> usize {
        self.train_x.ncols()
    }

    fn output_dim(&self) -> usize {
        self.train_y.ncols()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(self, x, Some(y))?;
        Ok(self.mixture_at(x)?.log_density(y))
    }

    fn log_density_batch(&self, x: &[f64], ys: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.mixture_at(x)?.log_density_batch(ys))
    }

    fn sample(&self, x: &[f64], count: usize, rng: &mut StreamRng) -> Result<Array2<f64>> {
        Ok(self.mixture_at(x)?.sample(count, rng))
    }

    fn marginal_quantile(&self, x: &[f64], i: usize, level: f64) -> Result<f64> {
        check_level(level)?;
        if i >= self.output_dim() {
            return Err(Error::InvalidData(format!("output index {i} out of range")));
        }
        Ok(self.mixture_at(x)?.marginal(i).quantile(level))
    }

    fn latent_forward(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        check_dims(self, x, Some(z))?;
        Ok(self.mixture_at(x)?.latent_forward(z))
    }

    fn latent_inverse(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(self, x, Some(y))?;
        Ok(self.mixture_at(x)?.latent_inverse(y))
    }
}

/// Mean negative log predictive density on `val` for one bandwidth.
pub fn knn_kde_validation_nll(train: &Dataset, k: usize, sigma: f64, val: &Dataset) -> Result<f64> {
    let model = KnnKde::new(train, k, sigma)?;
    let mut total = 0.0;
    for i in 0..val.len() {
        total -= model.log_density(val.x_row(i), val.y_row(i))?;
    }
    Ok(total / val.len() as f64)
}

/// Fits the model with the bandwidth from `sigma_grid` minimizing validation
/// negative log-likelihood (first minimizer on ties).
pub fn fit_knn_kde(train: &Dataset, k: usize, sigma_grid: &[f64], val: &Dataset) -> Result<KnnKde> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidConfig("bandwidth grid is empty".into()));
    }
    if let Some(bad) = sigma_grid.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidConfig(format!("bandwidth grid entries must be positive, got {bad}")));
    }
    KnnKde::new(train, k, sigma_grid[0])?;
    // Neighbour sets do not depend on the bandwidth.
    let neighbor_sets: Vec<Vec<usize>> =
        (0..val.len()).map(|i| nearest(&train.x, val.x_row(i), k)).collect();
    let mut best: Option<(f64, f64)> = None;
    for &sigma in sigma_grid {
        let mut total = 0.0;
        for (i, nbrs) in neighbor_sets.iter().enumerate() {
            total -= mixture_for(&train.y, nbrs, sigma)?.log_density(val.y_row(i));
        }
        let nll = total / val.len() as f64;
        log::debug!("knn-kde sigma={sigma} validation nll={nll}");
        if best.is_none_or(|(_, b)| nll < b) {
            best = Some((sigma, nll));
        }
    }
    let (sigma, _) = best.expect("grid is nonempty");
    KnnKde::new(train, k, sigma)
}
