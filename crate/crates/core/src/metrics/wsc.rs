use crate::error::{Error, Result};
use crate::rng::RngStream;
use ndarray::{Array1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WscConfig {
    /// Minimal fraction of points a slab must contain.
    pub delta: f64,
    pub n_directions: usize,
    /// Fraction of the test set used to search for the worst slab.
    pub search_fraction: f64,
}

impl Default for WscConfig {
    fn default() -> Self {
        Self { delta: 0.2, n_directions: 1000, search_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WscResult {
    /// Coverage of the selected slab on the held-out part.
    pub value: f64,
    /// Coverage of the selected slab on the search part.
    pub search_value: f64,
    pub direction: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Minimum mean of `values[i..j]` over windows with `j − i ≥ min_len`.
///
/// Dinkelbach iteration: for the current mean `λ`, the window minimizing
/// `Σ (c − λ)` is found from prefix sums in one pass; its mean becomes the
/// next `λ` until no window beats it.
fn min_mean_window(values: &[f64], min_len: usize) -> (usize, usize, f64) {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mean = |i: usize, j: usize| (prefix[j] - prefix[i]) / (j - i) as f64;
    let (mut best_i, mut best_j) = (0, n);
    let mut lambda = mean(0, n);
    loop {
        let q = |k: usize| prefix[k] - lambda * k as f64;
        let mut arg_max_i = 0;
        let mut found = (0, n, f64::INFINITY);
        for j in min_len..=n {
            let i = j - min_len;
            if q(i) > q(arg_max_i) {
                arg_max_i = i;
            }
            let value = q(j) - q(arg_max_i);
            if value < found.2 {
                found = (arg_max_i, j, value);
            }
        }
        let candidate = mean(found.0, found.1);
        if candidate < lambda - 1e-15 {
            lambda = candidate;
            best_i = found.0;
            best_j = found.1;
        } else {
            return (best_i, best_j, lambda);
        }
    }
}

/// Worst-slab coverage.
///
/// Over `n_directions` random unit vectors `v`, find on the first part of
/// the test set the slab `{a ≤ vᵀx ≤ b}` holding at least a `δ` fraction of
/// its points with the lowest coverage, then report that slab's coverage on
/// the remaining points.
pub fn wsc(x: ArrayView2<f64>, covered: &[bool], config: &WscConfig, stream: &RngStream) -> Result<WscResult> {
    let n = x.nrows();
    if covered.len() != n {
        return Err(Error::InvalidData("WSC needs one membership per test input".into()));
    }
    if !(config.delta > 0.0 && config.delta <= 1.0) {
        return Err(Error::InvalidConfig(format!("WSC delta must lie in (0, 1], got {}", config.delta)));
    }
    if !(config.search_fraction > 0.0 && config.search_fraction < 1.0) || config.n_directions == 0 {
        return Err(Error::InvalidConfig("WSC needs a search fraction in (0, 1) and at least one direction".into()));
    }
    if (n as f64) < 2.0 / config.delta {
        return Err(Error::InvalidData(format!("WSC needs at least 2/δ = {} test points, got {n}", 2.0 / config.delta)));
    }
    let split = ((n as f64 * config.search_fraction).floor() as usize).clamp(1, n - 1);
    let min_len = ((config.delta * split as f64).ceil() as usize).clamp(1, split);
    let overall = covered.iter().filter(|c| **c).count() as f64 / n as f64;
    let mut rng = stream.rng();
    let p = x.ncols();
    let mut worst: Option<(f64, Array1<f64>, f64, f64)> = None;
    let mut order: Vec<usize> = (0..split).collect();
    for _ in 0..config.n_directions {
        let mut v = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let proj: Vec<f64> = (0..split).map(|i| x.row(i).dot(&v)).collect();
        order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
        let values: Vec<f64> = order.iter().map(|&i| if covered[i] { 1.0 } else { 0.0 }).collect();
        let (i, j, value) = min_mean_window(&values, min_len);
        if worst.as_ref().is_none_or(|w| value < w.0) {
            worst = Some((value, v, proj[order[i]], proj[order[j - 1]]));
        }
    }
    let Some((search_value, v, lower, upper)) = worst else {
        return Err(Error::Numerical("no valid WSC direction".into()));
    };
    let mut inside = 0usize;
    let mut hits = 0usize;
    for i in split..n {
        let t = x.row(i).dot(&v);
        if t >= lower && t <= upper {
            inside += 1;
            hits += covered[i] as usize;
        }
    }
    let value = if inside == 0 {
        log::warn!("worst slab holds no held-out points; reporting overall coverage");
        overall
    } else {
        hits as f64 / inside as f64
    };
    Ok(WscResult { value, search_value, direction: v.to_vec(), lower, upper })
}
