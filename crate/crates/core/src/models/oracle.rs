use super::mixture::DiagonalMixture;
use super::{check_dims, check_level, Capabilities, ConditionalModel};
use crate::datagen::{ToyProcess, TOY_OUTPUT_DIM};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// The true conditional law of a toy process, expressed in the standardized
/// coordinates the generators emit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyOracle {
    pub process: ToyProcess,
}

impl ToyOracle {
    pub fn new(process: ToyProcess) -> Self {
        Self { process }
    }

    pub fn mixture_at(&self, x: &[f64]) -> Result<DiagonalMixture> {
        check_dims(self, x, None)?;
        let s = self.process.scaling();
        let x_raw = x[0] * s.x_scale + s.x_mean;
        let (weights, mut means, mut stds) = self.process.raw_mixture(x_raw)?;
        for (i, (m, sd)) in means.iter_mut().zip(stds.iter_mut()).enumerate() {
            let c = i % TOY_OUTPUT_DIM;
            *m = (*m - s.y_mean[c]) / s.y_scale[c];
            *sd /= s.y_scale[c];
        }
        DiagonalMixture::new(TOY_OUTPUT_DIM, &weights, means, stds)
    }
}

impl ConditionalModel for ToyOracle {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        TOY_OUTPUT_DIM
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
        if i >= TOY_OUTPUT_DIM {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{unimodal_arc, UNIMODAL_SIGMA};
    use crate::rng::RngStream;
    use std::f64::consts::PI;

    /// Appendix formula evaluated term by term in raw coordinates, then
    /// carried to standardized coordinates by the Jacobian of the scaling.
    fn unimodal_reference_density(x_std: f64, y_std: [f64; 2]) -> f64 {
        let s = ToyProcess::Unimodal.scaling();
        let x = x_std * s.x_scale + s.x_mean;
        let y = [y_std[0] * s.y_scale[0] + s.y_mean[0], y_std[1] * s.y_scale[1] + s.y_mean[1]];
        let k = 200;
        let sigma = 0.2f64;
        let mut total = 0.0;
        for j in 1..=k {
            let a = (j - 1) as f64 * PI / (k - 1) as f64;
            let mu = [(1.3 - x) * a.cos(), (1.3 - x) * (0.5 - a.sin())];
            let q = ((y[0] - mu[0]).powi(2) + (y[1] - mu[1]).powi(2)) / (sigma * sigma);
            total += (-0.5 * q).exp() / (2.0 * PI * sigma * sigma);
        }
        total / k as f64 * s.y_scale[0] * s.y_scale[1]
    }

    #[test]
    fn unimodal_density_matches_direct_mixture_sum() {
        let oracle = ToyOracle::new(ToyProcess::Unimodal);
        for &(x, y) in &[(0.0, [0.0, 0.0]), (-1.2, [1.0, -0.5]), (1.5, [-0.3, 0.8]), (0.4, [2.5, 2.5])] {
            let ours = oracle.density(&[x], &y).unwrap();
            let reference = unimodal_reference_density(x, y);
            assert!((ours - reference).abs() <= 1e-12 * reference.max(1e-300), "{ours} vs {reference}");
        }
        assert_eq!(unimodal_arc().len(), 200);
        assert_eq!(UNIMODAL_SIGMA, 0.2);
    }

    #[test]
    fn bimodal_density_matches_formula() {
        let oracle = ToyOracle::new(ToyProcess::Bimodal);
        let s = ToyProcess::Bimodal.scaling();
        let (x_std, y_std) = (0.3, [0.9, 1.1]);
        let x = x_std * s.x_scale + s.x_mean;
        let y = [y_std[0] * s.y_scale[0], y_std[1] * s.y_scale[1]];
        let iso = |c: f64, var: f64| {
            let q = ((y[0] - c).powi(2) + (y[1] - c).powi(2)) / var;
            (-0.5 * q).exp() / (2.0 * PI * var)
        };
        let raw = 0.5 * iso(4.0, x) + 0.5 * iso(-4.0, 1.0 / x);
        let expected = raw * s.y_scale[0] * s.y_scale[1];
        let ours = oracle.density(&[x_std], &y_std).unwrap();
        assert!((ours - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn density_integrates_to_one() {
        // Importance sampling with a wide Gaussian proposal.
        let oracle = ToyOracle::new(ToyProcess::Unimodal);
        let mut rng = RngStream::new(8).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let scale = 2.0;
        let n = 200_000;
        let mut total = 0.0;
        for _ in 0..n {
            let y: [f64; 2] = [scale * rng.sample::<f64, _>(StandardNormal), scale * rng.sample::<f64, _>(StandardNormal)];
            let q = (y[0] * y[0] + y[1] * y[1]) / (scale * scale);
            let proposal = (-0.5 * q).exp() / (2.0 * PI * scale * scale);
            total += oracle.density(&[0.5], &y).unwrap() / proposal;
        }
        let integral = total / n as f64;
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
    }

    #[test]
    fn quantiles_and_latent_map_are_consistent() {
        let oracle = ToyOracle::new(ToyProcess::Bimodal);
        let x = [-0.4];
        let draws = oracle.sample(&x, 20_000, &mut RngStream::new(2).rng()).unwrap();
        for (i, level) in [(0, 0.1), (1, 0.5), (1, 0.9)] {
            let q = oracle.marginal_quantile(&x, i, level).unwrap();
            let frac = draws.column(i).iter().filter(|v| **v <= q).count() as f64 / 20_000.0;
            assert!((frac - level).abs() < 0.015, "level {level}: {frac}");
        }
        let y = [0.3, -0.2];
        let back = oracle.latent_forward(&x, &oracle.latent_inverse(&x, &y).unwrap()).unwrap();
        assert!((back[0] - y[0]).abs() < 1e-10 && (back[1] - y[1]).abs() < 1e-10);
    }
}
