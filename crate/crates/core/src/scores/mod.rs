//! Conformity scores.
//!
//! A score is evaluated in two steps. [`ConformityScore::prepare`] builds
//! everything that depends on the input alone (sample sets, marginal
//! intervals, reference score distributions) from a per-input random stream;
//! [`ConformityScore::score`] then evaluates any number of candidate outputs
//! against that frozen state. Reusing one state for scoring and for
//! membership tests keeps every Monte-Carlo region internally consistent.

mod copula;
mod density;
mod latent;
mod marginal;
mod method;
mod sample;
mod wrappers;

pub use copula::{calibrate_copula_cpts, CopulaCalibration, CopulaConfig, DEFAULT_COPULA_SPLIT};
pub use density::{DrCp, MaxKernelDensity};
pub use latent::LCp;
pub use marginal::{cqr_scores, MCp};
pub use method::{
    calibrate, calibration_scores, CalibratedMethod, Calibration, MethodConfig, MethodId, PointRegion,
};
pub use sample::{HdPcp, Pcp, Stdqr};
pub use wrappers::{Affine, Cp2, Ecdf};

use crate::error::{Error, Result};
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Monte-Carlo sample sizes: `L` draws define sample-based regions, `K`
/// draws estimate conditional score distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloParams {
    pub region_samples: usize,
    pub cdf_samples: usize,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self { region_samples: 100, cdf_samples: 100 }
    }
}

impl MonteCarloParams {
    pub fn new(region_samples: usize, cdf_samples: usize) -> Result<Self> {
        let p = Self { region_samples, cdf_samples };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_samples == 0 || self.cdf_samples == 0 {
            return Err(Error::InvalidConfig("Monte-Carlo sample counts L and K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Input-dependent quantities cached by [`ConformityScore::prepare`].
#[derive(Debug, Clone, PartialEq)]
pub enum PointState {
    Empty,
    /// Output-space points whose union of balls forms the region.
    Samples(Array2<f64>),
    /// Per-output `(lower, upper)` marginal quantiles.
    Intervals(Vec<(f64, f64)>),
    /// Sorted base scores of `K` fresh draws, plus the base score's own state.
    Reference { inner: Box<PointState>, sorted: Vec<f64> },
    /// Base state and the conditional threshold `τ̂ₓ` of the CP² wrapper.
    Scaled { inner: Box<PointState>, tau: f64 },
}

fn state_mismatch() -> Error {
    Error::InvalidConfig("point state was prepared by a different score".into())
}

impl PointState {
    pub fn samples(&self) -> Result<&Array2<f64>> {
        match self {
            PointState::Samples(s) => Ok(s),
            _ => Err(state_mismatch()),
        }
    }

    pub fn intervals(&self) -> Result<&[(f64, f64)]> {
        match self {
            PointState::Intervals(v) => Ok(v),
            _ => Err(state_mismatch()),
        }
    }
}

pub trait ConformityScore: Send + Sync {
    fn name(&self) -> String;

    /// Capabilities the base model must provide.
    fn requirements(&self) -> Capabilities;

    /// Names of unmet requirements; empty when `available` suffices.
    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        available.missing(&self.requirements())
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState>;

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], state: &PointState, y: &[f64]) -> Result<f64>;

    /// Scores of every row of `ys` at the same input.
    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        ys.rows()
            .into_iter()
            .map(|y| match y.as_slice() {
                Some(y) => self.score(model, x, state, y),
                None => self.score(model, x, state, &y.to_vec()),
            })
            .collect()
    }
}

impl<S: ConformityScore + ?Sized> ConformityScore for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn requirements(&self) -> Capabilities {
        (**self).requirements()
    }

    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        (**self).missing(available)
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        (**self).prepare(model, x, stream)
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        (**self).score(model, x, state, y)
    }

    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        (**self).score_batch(model, x, state, ys)
    }
}

/// Fails with [`Error::MissingCapability`] naming the first unmet requirement.
pub fn check_requirements(score: &dyn ConformityScore, model: &dyn ConditionalModel) -> Result<()> {
    match score.missing(&model.capabilities()).first() {
        Some(name) => Err(Error::MissingCapability(name)),
        None => Ok(()),
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Squared Euclidean distance from `y` to the nearest row of `points`.
pub(crate) fn min_squared_distance(points: &Array2<f64>, y: &[f64]) -> f64 {
    points
        .rows()
        .into_iter()
        .map(|p| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}
