use super::{Capabilities, ConditionalModel};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use ndarray::{Array2, ArrayView2};

/// Restricts a model to a subset of its capabilities, e.g. to reproduce a
/// density-only or sampler-only base predictor.
#[derive(Debug, Clone)]
pub struct CapabilityMask<M> {
    inner: M,
    allowed: Capabilities,
}

impl<M: ConditionalModel> CapabilityMask<M> {
    pub fn new(inner: M, allowed: Capabilities) -> Self {
        Self { inner, allowed }
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: ConditionalModel> ConditionalModel for CapabilityMask<M> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities().intersect(self.allowed)
    }

    fn log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if !self.capabilities().density {
            return Err(Error::MissingCapability("density"));
        }
        self.inner.log_density(x, y)
    }

    fn log_density_batch(&self, x: &[f64], ys: ArrayView2<f64>) -> Result<Vec<f64>> {
        if !self.capabilities().density {
            return Err(Error::MissingCapability("density"));
        }
        self.inner.log_density_batch(x, ys)
    }

    fn sample(&self, x: &[f64], count: usize, rng: &mut StreamRng) -> Result<Array2<f64>> {
        if !self.capabilities().sampler {
            return Err(Error::MissingCapability("sampler"));
        }
        self.inner.sample(x, count, rng)
    }

    fn marginal_quantile(&self, x: &[f64], i: usize, level: f64) -> Result<f64> {
        if !self.capabilities().marginal_quantiles {
            return Err(Error::MissingCapability("marginal quantiles"));
        }
        self.inner.marginal_quantile(x, i, level)
    }

    fn latent_forward(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if !self.capabilities().invertible_map {
            return Err(Error::MissingCapability("invertible map"));
        }
        self.inner.latent_forward(x, z)
    }

    fn latent_inverse(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if !self.capabilities().invertible_map {
            return Err(Error::MissingCapability("invertible map"));
        }
        self.inner.latent_inverse(x, y)
    }
}
