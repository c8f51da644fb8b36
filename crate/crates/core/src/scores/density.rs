use super::{check_requirements, min_squared_distance, ConformityScore, MonteCarloParams, PointState};
use crate::error::{Error, Result};
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;
use crate::special::LN_SQRT_2PI;
use ndarray::ArrayView2;

/// Negative predictive density, `s(x, y) = −f̂(y | x)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DrCp;

fn negative_density(log_density: f64) -> Result<f64> {
    if log_density.is_nan() {
        return Err(Error::InvalidModel("density evaluated to NaN".into()));
    }
    if log_density == f64::INFINITY {
        return Err(Error::InvalidModel("density evaluated to +inf".into()));
    }
    // Underflow in the far tail is a legitimate zero density.
    Ok(-log_density.exp())
}

impl ConformityScore for DrCp {
    fn name(&self) -> String {
        "dr_cp".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::density()
    }

    fn prepare(&self, model: &dyn ConditionalModel, _x: &[f64], _stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        Ok(PointState::Empty)
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], _state: &PointState, y: &[f64]) -> Result<f64> {
        negative_density(model.log_density(x, y)?)
    }

    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        _state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        model.log_density_batch(x, ys)?.into_iter().map(negative_density).collect()
    }
}

/// DR-CP with the surrogate density `f̂_max(y | x) = max_l N(y; Ỹ⁽ˡ⁾, I)`
/// built from the same `L` draws PCP uses, so both produce the same regions.
#[derive(Debug, Clone, Copy)]
pub struct MaxKernelDensity {
    pub region_samples: usize,
}

impl MaxKernelDensity {
    pub fn new(params: MonteCarloParams) -> Self {
        Self { region_samples: params.region_samples }
    }
}

impl ConformityScore for MaxKernelDensity {
    fn name(&self) -> String {
        "dr_cp_max_kernel".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::sampler()
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        Ok(PointState::Samples(model.sample(x, self.region_samples, &mut stream.rng())?))
    }

    fn score(&self, _model: &dyn ConditionalModel, _x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        let d2 = min_squared_distance(state.samples()?, y);
        Ok(-(-0.5 * d2 - y.len() as f64 * LN_SQRT_2PI).exp())
    }
}
