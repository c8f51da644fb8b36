//! Finite mixtures of axis-aligned Gaussians.
//!
//! Both the k-NN kernel density model and the toy oracle are, for a fixed
//! input, such a mixture. Besides density and sampling, a diagonal mixture
//! admits an exact invertible map to a standard normal latent space: the
//! Knothe–Rosenblatt transform, which pushes each coordinate through its
//! conditional CDF given the previous coordinates and then through `Φ^{-1}`.

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::special::{log_sum_exp, normal_cdf, normal_pdf, normal_quantile, normal_sf, LN_SQRT_2PI};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMixture {
    dim: usize,
    /// Normalized log weights.
    log_weights: Vec<f64>,
    /// Component-major, `n_components × dim`.
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl DiagonalMixture {
    pub fn new(dim: usize, weights: &[f64], means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || dim == 0 {
            return Err(Error::InvalidModel("mixture needs at least one component and dimension".into()));
        }
        if means.len() != k * dim || stds.len() != k * dim {
            return Err(Error::InvalidModel("mixture parameter shapes disagree".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel("mixture weights must be finite and nonnegative".into()));
        }
        if stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidModel("mixture scales must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidModel("mixture weights sum to zero".into()));
        }
        let log_weights = weights.iter().map(|w| (w / total).ln()).collect();
        Ok(Self { dim, log_weights, means, stds })
    }

    /// Equal-weight mixture of `N(center, sigma² I)` components; `centers` is
    /// component-major.
    pub fn isotropic(dim: usize, centers: Vec<f64>, sigma: f64) -> Result<Self> {
        let k = centers.len() / dim.max(1);
        Self::new(dim, &vec![1.0; k], centers, vec![sigma; k * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    fn component(&self, j: usize) -> (&[f64], &[f64]) {
        let range = j * self.dim..(j + 1) * self.dim;
        (&self.means[range.clone()], &self.stds[range])
    }

    fn log_component(&self, j: usize, y: &[f64]) -> f64 {
        let (m, s) = self.component(j);
        let mut acc = 0.0;
        for ((yi, mi), si) in y.iter().zip(m).zip(s) {
            let z = (yi - mi) / si;
            acc -= 0.5 * z * z + si.ln() + LN_SQRT_2PI;
        }
        acc
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.n_components());
        for j in 0..self.n_components() {
            terms.push(self.log_weights[j] + self.log_component(j, y));
        }
        log_sum_exp(&terms)
    }

    pub fn log_density_batch(&self, ys: ArrayView2<f64>) -> Vec<f64> {
        let k = self.n_components();
        // Per-component constants hoisted out of the row loop.
        let offsets: Vec<f64> = (0..k)
            .map(|j| {
                let (_, s) = self.component(j);
                self.log_weights[j] - s.iter().map(|v| v.ln() + LN_SQRT_2PI).sum::<f64>()
            })
            .collect();
        let inv_stds: Vec<f64> = self.stds.iter().map(|s| 1.0 / s).collect();
        let mut terms = vec![0.0; k];
        ys.rows()
            .into_iter()
            .map(|y| {
                for (j, term) in terms.iter_mut().enumerate() {
                    let base = j * self.dim;
                    let mut q = 0.0;
                    for (i, yi) in y.iter().enumerate() {
                        let z = (yi - self.means[base + i]) * inv_stds[base + i];
                        q += z * z;
                    }
                    *term = offsets[j] - 0.5 * q;
                }
                log_sum_exp(&terms)
            })
            .collect()
    }

    pub fn sample(&self, count: usize, rng: &mut StreamRng) -> Array2<f64> {
        let weights = self.weights();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let last = cumulative.len() - 1;
        let mut out = Array2::zeros((count, self.dim));
        for mut row in out.rows_mut() {
            let u: f64 = rng.random::<f64>() * acc;
            let j = cumulative.partition_point(|&c| c <= u).min(last);
            let (m, s) = self.component(j);
            for ((v, mi), si) in row.iter_mut().zip(m).zip(s) {
                let z: f64 = rng.sample(StandardNormal);
                *v = mi + si * z;
            }
        }
        out
    }

    fn coordinate(&self, log_weights: &[f64], i: usize) -> Mixture1d {
        let norm = log_sum_exp(log_weights);
        let k = self.n_components();
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut stds = Vec::with_capacity(k);
        for (j, lw) in log_weights.iter().enumerate() {
            let w = (lw - norm).exp();
            if w > 0.0 {
                weights.push(w);
                means.push(self.means[j * self.dim + i]);
                stds.push(self.stds[j * self.dim + i]);
            }
        }
        Mixture1d { weights, means, stds }
    }

    /// Marginal distribution of coordinate `i`.
    pub fn marginal(&self, i: usize) -> Mixture1d {
        self.coordinate(&self.log_weights, i)
    }

    fn condition_on(&self, log_weights: &mut [f64], i: usize, value: f64) {
        for (j, lw) in log_weights.iter_mut().enumerate() {
            let m = self.means[j * self.dim + i];
            let s = self.stds[j * self.dim + i];
            let z = (value - m) / s;
            *lw -= 0.5 * z * z + s.ln();
        }
    }

    /// Knothe–Rosenblatt map from output space to standard normal latent space.
    pub fn latent_inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut log_weights = self.log_weights.clone();
        let mut z = Vec::with_capacity(self.dim);
        for (i, &yi) in y.iter().enumerate() {
            z.push(self.coordinate(&log_weights, i).to_latent(yi));
            if i + 1 < self.dim {
                self.condition_on(&mut log_weights, i, yi);
            }
        }
        z
    }

    /// Inverse of [`DiagonalMixture::latent_inverse`].
    pub fn latent_forward(&self, z: &[f64]) -> Vec<f64> {
        let mut log_weights = self.log_weights.clone();
        let mut y = Vec::with_capacity(self.dim);
        for (i, &zi) in z.iter().enumerate() {
            let yi = self.coordinate(&log_weights, i).from_latent(zi);
            y.push(yi);
            if i + 1 < self.dim {
                self.condition_on(&mut log_weights, i, yi);
            }
        }
        y
    }
}

/// One-dimensional Gaussian mixture with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture1d {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Mixture1d {
    pub fn pdf(&self, y: f64) -> f64 {
        self.iter().map(|(w, m, s)| w * normal_pdf((y - m) / s) / s).sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.iter().map(|(w, m, s)| w * normal_cdf((y - m) / s)).sum()
    }

    pub fn sf(&self, y: f64) -> f64 {
        self.iter().map(|(w, m, s)| w * normal_sf((y - m) / s)).sum()
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, m), s)| (*w, *m, *s))
    }

    /// `Φ^{-1}(F(y))`, evaluated through the survival function in the upper
    /// half so both tails keep full precision.
    pub fn to_latent(&self, y: f64) -> f64 {
        let lower = self.cdf(y);
        if lower <= 0.5 {
            normal_quantile(lower)
        } else {
            -normal_quantile(self.sf(y))
        }
    }

    /// Solves `to_latent(y) = z` by safeguarded Newton iteration.
    ///
    /// The root is bracketed by the component quantiles `m_j + s_j z`: at the
    /// smallest of them every component CDF is at most `Φ(z)`, at the largest
    /// at least `Φ(z)`.
    pub fn from_latent(&self, z: f64) -> f64 {
        let (mut lo, mut hi) = self
            .iter()
            .map(|(_, m, s)| m + s * z)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            return lo;
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.to_latent(y) - z;
            if g == 0.0 || g.is_nan() {
                break;
            }
            if g > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let slope = self.pdf(y) / normal_pdf(g + z);
            let newton = y - g / slope;
            let next = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - y).abs() <= 1e-15 * y.abs().max(1.0) {
                y = next;
                break;
            }
            y = next;
        }
        y
    }

    /// Quantile at `level`.
    pub fn quantile(&self, level: f64) -> f64 {
        self.from_latent(normal_quantile(level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use ndarray::array;

    fn two_blob() -> DiagonalMixture {
        DiagonalMixture::new(2, &[0.3, 0.7], vec![-2.0, 1.0, 1.5, -0.5], vec![0.5, 1.0, 0.8, 0.3]).unwrap()
    }

    #[test]
    fn single_component_mode_density() {
        let m = DiagonalMixture::isotropic(2, vec![1.0, -1.0], 1.0).unwrap();
        let f = m.log_density(&[1.0, -1.0]).exp();
        assert!((f - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn batch_matches_pointwise() {
        let m = two_blob();
        let ys = array![[0.0, 0.0], [-2.0, 1.0], [5.0, -3.0]];
        let batch = m.log_density_batch(ys.view());
        for (i, row) in ys.rows().into_iter().enumerate() {
            assert!((batch[i] - m.log_density(&row.to_vec())).abs() < 1e-12);
        }
    }

    #[test]
    fn density_matches_direct_sum() {
        let m = two_blob();
        let y = [0.3, 0.2];
        let g = |v: f64, mu: f64, s: f64| normal_pdf((v - mu) / s) / s;
        let direct = 0.3 * g(0.3, -2.0, 0.5) * g(0.2, 1.0, 1.0) + 0.7 * g(0.3, 1.5, 0.8) * g(0.2, -0.5, 0.3);
        assert!((m.log_density(&y).exp() - direct).abs() < 1e-15);
    }

    #[test]
    fn latent_round_trip() {
        let m = two_blob();
        for &y in &[[0.0, 0.0], [-2.5, 1.7], [3.0, -0.4], [1.4, 2.0]] {
            let z = m.latent_inverse(&y);
            let back = m.latent_forward(&z);
            for (a, b) in back.iter().zip(&y) {
                assert!((a - b).abs() < 1e-10, "{back:?} vs {y:?}");
            }
        }
        for &z in &[[0.0, 0.0], [1.5, -2.0], [-3.0, 3.0]] {
            let y = m.latent_forward(&z);
            let back = m.latent_inverse(&y);
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn marginal_quantile_inverts_cdf() {
        let marginal = two_blob().marginal(0);
        for &level in &[0.01, 0.1, 0.5, 0.9, 0.999] {
            let q = marginal.quantile(level);
            assert!((marginal.cdf(q) - level).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_images_are_standard_normal() {
        let m = two_blob();
        let draws = m.sample(20_000, &mut RngStream::new(5).rng());
        let zs: Vec<Vec<f64>> = draws.rows().into_iter().map(|r| m.latent_inverse(&r.to_vec())).collect();
        let n = zs.len() as f64;
        for i in 0..2 {
            let mean = zs.iter().map(|z| z[i]).sum::<f64>() / n;
            let var = zs.iter().map(|z| (z[i] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
        let cross = zs.iter().map(|z| z[0] * z[1]).sum::<f64>() / n;
        assert!(cross.abs() < 0.03);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DiagonalMixture::new(1, &[1.0], vec![0.0], vec![0.0]).is_err());
        assert!(DiagonalMixture::new(1, &[0.0], vec![0.0], vec![1.0]).is_err());
        assert!(DiagonalMixture::new(2, &[1.0], vec![0.0], vec![1.0]).is_err());
    }
}
