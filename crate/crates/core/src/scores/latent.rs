use super::{check_requirements, ConformityScore, PointState};
use crate::error::Result;
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;

/// Latent-space norm `‖Q̂⁻¹(y; x)‖`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LCp;

impl ConformityScore for LCp {
    fn name(&self) -> String {
        "l_cp".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities::invertible_map()
    }

    fn prepare(&self, model: &dyn ConditionalModel, _x: &[f64], _stream: &RngStream) -> Result<PointState> {
        check_requirements(self, model)?;
        Ok(PointState::Empty)
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], _state: &PointState, y: &[f64]) -> Result<f64> {
        let z = model.latent_inverse(x, y)?;
        Ok(z.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}
