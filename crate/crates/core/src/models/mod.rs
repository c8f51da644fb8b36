//! Base predictors.
//!
//! Conformity scores consume up to four capabilities of a conditional model
//! `Y | X = x`: density evaluation, sampling, per-output marginal quantiles
//! and an invertible latent map `Q(z; x)`. Every model advertises what it
//! supports through [`Capabilities`]; scores declare what they require and a
//! run fails fast when the two do not match.

mod document;
mod gaussian;
mod knn_kde;
mod mask;
mod mixture;
mod oracle;

pub use document::{ModelDocument, SavedModel, MODEL_SCHEMA};
pub use gaussian::{fit_conditional_gaussian, ConditionalGaussian};
pub use knn_kde::{fit_knn_kde, knn_kde_validation_nll, KnnKde, DEFAULT_NEIGHBORS};
pub use mask::CapabilityMask;
pub use mixture::{DiagonalMixture, Mixture1d};
pub use oracle::ToyOracle;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Capabilities {
    pub density: bool,
    pub sampler: bool,
    pub marginal_quantiles: bool,
    pub invertible_map: bool,
}

impl Capabilities {
    pub const NONE: Self =
        Self { density: false, sampler: false, marginal_quantiles: false, invertible_map: false };
    pub const ALL: Self =
        Self { density: true, sampler: true, marginal_quantiles: true, invertible_map: true };

    pub fn density() -> Self {
        Self { density: true, ..Self::NONE }
    }

    pub fn sampler() -> Self {
        Self { sampler: true, ..Self::NONE }
    }

    pub fn invertible_map() -> Self {
        Self { invertible_map: true, ..Self::NONE }
    }

    pub fn union(self, other: Self) -> Self {
        Self {
            density: self.density || other.density,
            sampler: self.sampler || other.sampler,
            marginal_quantiles: self.marginal_quantiles || other.marginal_quantiles,
            invertible_map: self.invertible_map || other.invertible_map,
        }
    }

    pub fn intersect(self, other: Self) -> Self {
        Self {
            density: self.density && other.density,
            sampler: self.sampler && other.sampler,
            marginal_quantiles: self.marginal_quantiles && other.marginal_quantiles,
            invertible_map: self.invertible_map && other.invertible_map,
        }
    }

    /// Names of the capabilities in `required` that `self` lacks.
    pub fn missing(&self, required: &Capabilities) -> Vec<&'static str> {
        let mut out = Vec::new();
        if required.density && !self.density {
            out.push("density");
        }
        if required.sampler && !self.sampler {
            out.push("sampler");
        }
        if required.marginal_quantiles && !self.marginal_quantiles {
            out.push("marginal quantiles");
        }
        if required.invertible_map && !self.invertible_map {
            out.push("invertible map");
        }
        out
    }

    pub fn satisfies(&self, required: &Capabilities) -> bool {
        self.missing(required).is_empty()
    }
}

/// A fitted conditional distribution of `Y ∈ R^d` given `X = x ∈ R^p`.
///
/// Every capability has a default implementation returning
/// [`Error::MissingCapability`]; models override what they support and
/// report it in [`ConditionalModel::capabilities`].
pub trait ConditionalModel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    fn log_density(&self, _x: &[f64], _y: &[f64]) -> Result<f64> {
        Err(Error::MissingCapability("density"))
    }

    fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.log_density(x, y)?.exp())
    }

    /// Log densities of every row of `ys` at the same input.
    fn log_density_batch(&self, x: &[f64], ys: ArrayView2<f64>) -> Result<Vec<f64>> {
        ys.rows().into_iter().map(|y| self.log_density(x, &y.to_vec())).collect()
    }

    /// `count` i.i.d. draws from `Y | X = x`, one per row.
    fn sample(&self, _x: &[f64], _count: usize, _rng: &mut StreamRng) -> Result<Array2<f64>> {
        Err(Error::MissingCapability("sampler"))
    }

    /// Quantile at `level` of output `i` under `Y_i | X = x`.
    fn marginal_quantile(&self, _x: &[f64], _i: usize, _level: f64) -> Result<f64> {
        Err(Error::MissingCapability("marginal quantiles"))
    }

    /// `Q(z; x)`: maps a standard normal latent point to output space.
    fn latent_forward(&self, _x: &[f64], _z: &[f64]) -> Result<Vec<f64>> {
        Err(Error::MissingCapability("invertible map"))
    }

    /// `Q^{-1}(y; x)`.
    fn latent_inverse(&self, _x: &[f64], _y: &[f64]) -> Result<Vec<f64>> {
        Err(Error::MissingCapability("invertible map"))
    }
}

macro_rules! forward_model {
    ($wrapper:ident) => {
        impl<M: ConditionalModel + ?Sized> ConditionalModel for $wrapper<M> {
            fn input_dim(&self) -> usize {
                (**self).input_dim()
            }

            fn output_dim(&self) -> usize {
                (**self).output_dim()
            }

            fn capabilities(&self) -> Capabilities {
                (**self).capabilities()
            }

            fn log_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
                (**self).log_density(x, y)
            }

            fn log_density_batch(&self, x: &[f64], ys: ArrayView2<f64>) -> Result<Vec<f64>> {
                (**self).log_density_batch(x, ys)
            }

            fn sample(&self, x: &[f64], count: usize, rng: &mut StreamRng) -> Result<Array2<f64>> {
                (**self).sample(x, count, rng)
            }

            fn marginal_quantile(&self, x: &[f64], i: usize, level: f64) -> Result<f64> {
                (**self).marginal_quantile(x, i, level)
            }

            fn latent_forward(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
                (**self).latent_forward(x, z)
            }

            fn latent_inverse(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
                (**self).latent_inverse(x, y)
            }
        }
    };
}

forward_model!(Box);
forward_model!(Arc);

/// Number of draws used when a marginal quantile has to be estimated from
/// samples.
pub const EMPIRICAL_QUANTILE_SAMPLES: usize = 100;

/// The `⌊L·level⌋`-th order statistic (1-based, clamped to `1..=L`) of `draws`.
pub fn empirical_quantile(draws: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {level}")));
    }
    if draws.is_empty() {
        return Err(Error::InvalidData("no draws to take a quantile of".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((sorted.len() as f64 * level).floor() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Lower and upper marginal quantiles of every output at `x`.
///
/// Uses the model's own quantile function when available and otherwise the
/// empirical order statistics of `fallback_samples` draws.
pub fn marginal_intervals(
    model: &dyn ConditionalModel,
    x: &[f64],
    lower_level: f64,
    upper_level: f64,
    fallback_samples: usize,
    rng: &mut StreamRng,
) -> Result<Vec<(f64, f64)>> {
    let d = model.output_dim();
    if model.capabilities().marginal_quantiles {
        return (0..d)
            .map(|i| {
                Ok((
                    model.marginal_quantile(x, i, lower_level)?,
                    model.marginal_quantile(x, i, upper_level)?,
                ))
            })
            .collect();
    }
    if !model.capabilities().sampler {
        return Err(Error::MissingCapability("marginal quantiles"));
    }
    let draws = model.sample(x, fallback_samples, rng)?;
    (0..d)
        .map(|i| {
            let column = draws.column(i).to_vec();
            Ok((empirical_quantile(&column, lower_level)?, empirical_quantile(&column, upper_level)?))
        })
        .collect()
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {level}")))
    }
}

pub(crate) fn check_dims(model: &dyn ConditionalModel, x: &[f64], y: Option<&[f64]>) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::InvalidData(format!(
            "input has dimension {} but the model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if let Some(y) = y {
        if y.len() != model.output_dim() {
            return Err(Error::InvalidData(format!(
                "output has dimension {} but the model expects {}",
                y.len(),
                model.output_dim()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_quantile_order_statistic() {
        assert_eq!(empirical_quantile(&[4.0, 2.0, 3.0, 1.0], 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[4.0, 2.0, 3.0, 1.0], 0.1).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&[4.0, 2.0, 3.0, 1.0], 0.99).unwrap(), 3.0);
        assert!(empirical_quantile(&[1.0], 1.0).is_err());
        assert!(empirical_quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn capability_algebra() {
        let have = Capabilities { density: true, sampler: true, ..Capabilities::NONE };
        assert!(have.satisfies(&Capabilities::density()));
        assert_eq!(have.missing(&Capabilities::ALL), vec!["marginal quantiles", "invertible map"]);
        assert_eq!(have.intersect(Capabilities::sampler()), Capabilities::sampler());
        assert_eq!(Capabilities::NONE.union(have), have);
    }
}
