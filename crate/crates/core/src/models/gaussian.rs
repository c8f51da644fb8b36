//! Linear-Gaussian conditional model `Y | x ~ N(Ax + b, LLᵀ)`.
//!
//! The latent map `Q(z; x) = Ax + b + Lz` is exact and cheap to invert, so
//! this single model supports every conformity score.

use super::{check_dims, check_level, Capabilities, ConditionalModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::special::{normal_quantile, LN_SQRT_2PI};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const RIDGE: f64 = 1e-8;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalGaussian {
    input_dim: usize,
    output_dim: usize,
    /// `d × p`, row-major.
    coef: Vec<f64>,
    intercept: Vec<f64>,
    /// Lower-triangular Cholesky factor of the residual covariance, `d × d`
    /// row-major.
    chol: Vec<f64>,
}

impl ConditionalGaussian {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        coef: Vec<f64>,
        intercept: Vec<f64>,
        chol: Vec<f64>,
    ) -> Result<Self> {
        if coef.len() != input_dim * output_dim
            || intercept.len() != output_dim
            || chol.len() != output_dim * output_dim
        {
            return Err(Error::InvalidModel("conditional Gaussian parameter shapes disagree".into()));
        }
        for i in 0..output_dim {
            if !(chol[i * output_dim + i] > 0.0) {
                return Err(Error::InvalidModel("Cholesky factor needs a positive diagonal".into()));
            }
            if (i + 1..output_dim).any(|j| chol[i * output_dim + j] != 0.0) {
                return Err(Error::InvalidModel("Cholesky factor must be lower triangular".into()));
            }
        }
        Ok(Self { input_dim, output_dim, coef, intercept, chol })
    }

    /// `N(0, I_d)` regardless of input.
    pub fn standard(input_dim: usize, output_dim: usize) -> Self {
        let mut chol = vec![0.0; output_dim * output_dim];
        for i in 0..output_dim {
            chol[i * output_dim + i] = 1.0;
        }
        Self {
            input_dim,
            output_dim,
            coef: vec![0.0; input_dim * output_dim],
            intercept: vec![0.0; output_dim],
            chol,
        }
    }

    pub fn coef(&self) -> &[f64] {
        &self.coef
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    /// `LLᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.output_dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..=i.min(j)).map(|k| self.chol[i * d + k] * self.chol[j * d + k]).sum();
            }
        }
        out
    }

    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        let p = self.input_dim;
        (0..self.output_dim)
            .map(|i| self.intercept[i] + self.coef[i * p..(i + 1) * p].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    /// Solves `L z = y − μ(x)` by forward substitution.
    fn whiten(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d = self.output_dim;
        let mu = self.mean(x);
        let mut z = vec![0.0; d];
        for i in 0..d {
            let partial: f64 = (0..i).map(|k| self.chol[i * d + k] * z[k]).sum();
            z[i] = (y[i] - mu[i] - partial) / self.chol[i * d + i];
        }
        z
    }

    fn color(&self, mu: &[f64], z: &[f64]) -> Vec<f64> {
        let d = self.output_dim;
        (0..d)
            .map(|i| mu[i] + (0..=i).map(|k| self.chol[i * d + k] * z[k]).sum::<f64>())
            .collect()
    }

    fn log_det(&self) -> f64 {
        (0..self.output_dim).map(|i| self.chol[i * self.output_dim + i].ln()).sum()
    }

    /// Differential entropy of the predictive distribution.
    pub fn entropy(&self) -> f64 {
        let d = self.output_dim as f64;
        0.5 * d + d * LN_SQRT_2PI + self.log_det()
    }
}

impl ConditionalModel for ConditionalGaussian {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(self, x, Some(y))?;
        let z = self.whiten(x, y);
        let q: f64 = z.iter().map(|v| v * v).sum();
        Ok(-0.5 * q - self.log_det() - self.output_dim as f64 * LN_SQRT_2PI)
    }

    fn sample(&self, x: &[f64], count: usize, rng: &mut StreamRng) -> Result<Array2<f64>> {
        check_dims(self, x, None)?;
        let d = self.output_dim;
        let mu = self.mean(x);
        let mut out = Array2::zeros((count, d));
        let mut z = vec![0.0; d];
        for mut row in out.rows_mut() {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for (slot, v) in row.iter_mut().zip(self.color(&mu, &z)) {
                *slot = v;
            }
        }
        Ok(out)
    }

    fn marginal_quantile(&self, x: &[f64], i: usize, level: f64) -> Result<f64> {
        check_dims(self, x, None)?;
        check_level(level)?;
        if i >= self.output_dim {
            return Err(Error::InvalidData(format!("output index {i} out of range")));
        }
        let d = self.output_dim;
        let sd = (0..=i).map(|k| self.chol[i * d + k].powi(2)).sum::<f64>().sqrt();
        Ok(self.mean(x)[i] + sd * normal_quantile(level))
    }

    fn latent_forward(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        check_dims(self, x, Some(z))?;
        Ok(self.color(&self.mean(x), z))
    }

    fn latent_inverse(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(self, x, Some(y))?;
        Ok(self.whiten(x, y))
    }
}

/// Least-squares fit of `y` on `x` with an intercept; the residual covariance
/// (population convention) is factored with escalating diagonal jitter when
/// it is not numerically positive definite.
pub fn fit_conditional_gaussian(train: &Dataset) -> Result<ConditionalGaussian> {
    let n = train.len();
    let p = train.input_dim();
    let d = train.output_dim();
    if n <= p + 1 {
        return Err(Error::InvalidData(format!(
            "need more than {} training rows for {p} features, got {n}",
            p + 1
        )));
    }
    let x = DMatrix::from_row_slice(n, p, train.x.as_slice().expect("standard layout"));
    let y = DMatrix::from_row_slice(n, d, train.y.as_slice().expect("standard layout"));
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    let mut xc = x.clone();
    for mut r in xc.row_iter_mut() {
        r -= &x_mean;
    }
    let mut yc = y.clone();
    for mut r in yc.row_iter_mut() {
        r -= &y_mean;
    }

    // coef_t is p × d.
    let coef_t = if p == 0 {
        DMatrix::zeros(0, d)
    } else {
        let gram = xc.transpose() * &xc;
        let cross = xc.transpose() * &yc;
        let mut ridge = RIDGE;
        loop {
            let regularized = &gram + DMatrix::identity(p, p) * ridge;
            if let Some(chol) = regularized.cholesky() {
                break chol.solve(&cross);
            }
            if ridge > 1.0 {
                return Err(Error::Numerical("normal equations are singular".into()));
            }
            ridge *= 10.0;
            log::warn!("design matrix is ill-conditioned, increasing ridge to {ridge:e}");
        }
    };
    let intercept = &y_mean - &x_mean * &coef_t;
    let residuals = &yc - &xc * &coef_t;
    let cov = residuals.transpose() * &residuals / n as f64;

    let floor = JITTER_START.sqrt();
    let chol = match cov.clone().cholesky().map(|c| c.l()) {
        Some(l) if l.diagonal().min() >= floor => l,
        _ => {
            let mut jitter = JITTER_START;
            loop {
                if let Some(c) = (&cov + DMatrix::identity(d, d) * jitter).cholesky() {
                    log::warn!("residual covariance needed jitter {jitter:e}");
                    break c.l();
                }
                jitter *= 10.0;
                if jitter > JITTER_MAX * (1.0 + 1e-9) {
                    return Err(Error::Numerical("residual covariance is not positive definite".into()));
                }
            }
        }
    };

    let mut coef = vec![0.0; d * p];
    for i in 0..d {
        for j in 0..p {
            coef[i * p + j] = coef_t[(j, i)];
        }
    }
    let mut chol_rows = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            chol_rows[i * d + j] = chol[(i, j)];
        }
    }
    ConditionalGaussian::new(p, d, coef, intercept.iter().copied().collect(), chol_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use ndarray::Array2;
    use rand::Rng;

    fn linear_data(n: usize, noise: &[f64], seed: u64) -> Dataset {
        // y = A x + b + noise with A = [[1, -2], [0.5, 3], [0, 1]], b = [0.1, -1, 2]
        let a = [[1.0, -2.0], [0.5, 3.0], [0.0, 1.0]];
        let b = [0.1, -1.0, 2.0];
        let mut rng = RngStream::new(seed).rng();
        let mut x = Array2::zeros((n, 2));
        let mut y = Array2::zeros((n, 3));
        for i in 0..n {
            for j in 0..2 {
                x[[i, j]] = rng.random::<f64>() * 4.0 - 2.0;
            }
            let z: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for k in 0..3 {
                // Correlated noise: L = lower-triangular from `noise`.
                let e = match k {
                    0 => noise[0] * z[0],
                    1 => noise[1] * z[0] + noise[2] * z[1],
                    _ => noise[3] * z[0] + noise[4] * z[1] + noise[5] * z[2],
                };
                y[[i, k]] = a[k][0] * x[[i, 0]] + a[k][1] * x[[i, 1]] + b[k] + e;
            }
        }
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn noiseless_regression_is_recovered() {
        let data = linear_data(200, &[0.0; 6], 1);
        let model = fit_conditional_gaussian(&data).unwrap();
        let expected = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        for (a, b) in model.coef().iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        for (a, b) in model.intercept().iter().zip([0.1, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-8);
        }
        let l = model.cholesky_factor();
        for i in 0..3 {
            assert!(l[i * 3 + i] > 0.0 && l[i * 3 + i] < 1e-3, "jitter floor");
        }
    }

    #[test]
    fn intercept_only_model() {
        let y = ndarray::array![[1.0, 0.0], [3.0, 2.0], [2.0, 4.0], [2.0, 2.0]];
        let data = Dataset::new(Array2::zeros((4, 0)), y).unwrap();
        let model = fit_conditional_gaussian(&data).unwrap();
        assert_eq!(model.intercept(), &[2.0, 2.0]);
        let cov = model.covariance();
        // population covariance of the columns
        assert!((cov[0] - 0.5).abs() < 1e-12);
        assert!((cov[1] - 0.5).abs() < 1e-12);
        assert!((cov[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residual_covariance_is_consistent() {
        let noise = [1.0, 0.5, 0.8, -0.3, 0.2, 0.6];
        let data = linear_data(50_000, &noise, 2);
        let model = fit_conditional_gaussian(&data).unwrap();
        let l = [[noise[0], 0.0, 0.0], [noise[1], noise[2], 0.0], [noise[3], noise[4], noise[5]]];
        let mut truth = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                truth[i * 3 + j] = (0..3).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        let est = model.covariance();
        let diff: f64 = est.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 0.05, "relative Frobenius error {}", diff / norm);
    }

    #[test]
    fn too_few_rows() {
        let data = Dataset::new(Array2::zeros((3, 2)), Array2::zeros((3, 1))).unwrap();
        assert!(matches!(fit_conditional_gaussian(&data), Err(Error::InvalidData(_))));
    }

    #[test]
    fn density_at_mode_of_standard_normal() {
        let model = ConditionalGaussian::standard(1, 1);
        let f = model.density(&[0.7], &[0.0]).unwrap();
        assert!((f - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn latent_map_contracts() {
        let model = ConditionalGaussian::new(
            1,
            2,
            vec![2.0, -1.0],
            vec![0.5, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let x = [1.5];
        let mu = model.mean(&x);
        assert_eq!(model.latent_forward(&x, &[0.0, 0.0]).unwrap(), mu);
        let y = model.latent_forward(&x, &[3.0, 4.0]).unwrap();
        assert_eq!(y, vec![mu[0] + 3.0, mu[1] + 4.0]);

        let skew = ConditionalGaussian::new(1, 2, vec![2.0, -1.0], vec![0.5, 1.0], vec![0.7, 0.0, -0.4, 1.3])
            .unwrap();
        let mut rng = RngStream::new(3).rng();
        for _ in 0..100 {
            let y: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
            let back = skew.latent_forward(&x, &skew.latent_inverse(&x, &y).unwrap()).unwrap();
            assert!(back.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn marginal_quantiles() {
        let model = ConditionalGaussian::new(1, 1, vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert!((model.marginal_quantile(&[2.0], 0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((model.marginal_quantile(&[2.0], 0, 0.9).unwrap() - (2.0 + 1.281_551_565_544_600_4)).abs() < 1e-12);
        assert!(model.marginal_quantile(&[2.0], 0, 1.0).is_err());
        assert!(model.marginal_quantile(&[2.0], 1, 0.5).is_err());
    }

    #[test]
    fn sampler_mean_and_entropy() {
        let model = ConditionalGaussian::new(1, 2, vec![1.0, 0.0], vec![0.0, 2.0], vec![1.5, 0.0, 0.3, 0.4])
            .unwrap();
        let x = [1.0];
        let n = 100_000;
        let draws = model.sample(&x, n, &mut RngStream::new(9).rng()).unwrap();
        let mu = model.mean(&x);
        let sds = [1.5, (0.09f64 + 0.16).sqrt()];
        for i in 0..2 {
            let mean = draws.column(i).sum() / n as f64;
            assert!((mean - mu[i]).abs() < 3.0 * sds[i] / (n as f64).sqrt());
        }
        // Mean negative log density estimates the entropy.
        let m = 10_000;
        let logs: Vec<f64> =
            (0..m).map(|i| -model.log_density(&x, &draws.row(i).to_vec()).unwrap()).collect();
        let mean = logs.iter().sum::<f64>() / m as f64;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((mean - model.entropy()).abs() < 3.0 * (var / m as f64).sqrt());
        assert!(model.sample(&x, 0, &mut RngStream::new(1).rng()).unwrap().is_empty());
    }
}
