use super::{check_alpha, ConformityScore, PointState};
use crate::error::{Error, Result};
use crate::models::{marginal_intervals, Capabilities, ConditionalModel, EMPIRICAL_QUANTILE_SAMPLES};
use crate::rng::RngStream;

/// Per-output CQR scores `max(l̂ᵢ − yᵢ, yᵢ − ûᵢ)`.
pub fn cqr_scores(intervals: &[(f64, f64)], y: &[f64]) -> Vec<f64> {
    intervals.iter().zip(y).map(|(&(lo, hi), &v)| (lo - v).max(v - hi)).collect()
}

/// Maximum over outputs of the CQR interval scores, with equal-tailed
/// marginal quantiles at levels `α/2` and `1 − α/2`.
#[derive(Debug, Clone, Copy)]
pub struct MCp {
    pub lower_level: f64,
    pub upper_level: f64,
    pub fallback_samples: usize,
}

impl MCp {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { lower_level: alpha / 2.0, upper_level: 1.0 - alpha / 2.0, fallback_samples: EMPIRICAL_QUANTILE_SAMPLES })
    }

    pub fn with_levels(lower_level: f64, upper_level: f64) -> Result<Self> {
        if !(0.0 < lower_level && lower_level < upper_level && upper_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile levels must satisfy 0 < {lower_level} < {upper_level} < 1"
            )));
        }
        Ok(Self { lower_level, upper_level, fallback_samples: EMPIRICAL_QUANTILE_SAMPLES })
    }

    pub fn intervals(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<Vec<(f64, f64)>> {
        let mut rng = stream.rng();
        marginal_intervals(model, x, self.lower_level, self.upper_level, self.fallback_samples, &mut rng)
    }
}

impl ConformityScore for MCp {
    fn name(&self) -> String {
        "m_cp".into()
    }

    fn requirements(&self) -> Capabilities {
        Capabilities { marginal_quantiles: true, ..Capabilities::NONE }
    }

    /// Marginal quantiles can also be read off samples.
    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        if available.marginal_quantiles || available.sampler {
            Vec::new()
        } else {
            vec!["marginal quantiles"]
        }
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        Ok(PointState::Intervals(self.intervals(model, x, stream)?))
    }

    fn score(&self, _model: &dyn ConditionalModel, _x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        Ok(cqr_scores(state.intervals()?, y).into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CapabilityMask, ConditionalGaussian};

    #[test]
    fn max_of_interval_scores() {
        let m = ConditionalGaussian::standard(1, 2);
        let state = PointState::Intervals(vec![(0.0, 1.0), (0.0, 1.0)]);
        let s = MCp::new(0.2).unwrap();
        assert!((s.score(&m, &[0.0], &state, &[0.5, 0.9]).unwrap() + 0.1).abs() < 1e-15);
        assert_eq!(s.score(&m, &[0.0], &state, &[1.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn equal_tailed_levels() {
        let s = MCp::new(0.2).unwrap();
        assert!((s.lower_level - 0.1).abs() < 1e-15 && (s.upper_level - 0.9).abs() < 1e-15);
        let m = ConditionalGaussian::standard(1, 1);
        let iv = s.intervals(&m, &[0.0], &RngStream::new(0)).unwrap();
        assert!((iv[0].1 - 1.281_551_565_544_600_4).abs() < 1e-12);
        assert!((iv[0].0 + iv[0].1).abs() < 1e-12);
    }

    #[test]
    fn falls_back_to_samples() {
        let sampler_only = CapabilityMask::new(ConditionalGaussian::standard(1, 2), Capabilities::sampler());
        let s = MCp::new(0.2).unwrap();
        assert!(s.missing(&sampler_only.capabilities()).is_empty());
        assert_eq!(s.missing(&Capabilities::density()), vec!["marginal quantiles"]);
        let iv = s.intervals(&sampler_only, &[0.0], &RngStream::new(5)).unwrap();
        assert!(iv.iter().all(|(lo, hi)| lo < hi));
    }
}
