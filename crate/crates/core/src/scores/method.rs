use super::copula::{calibrate_copula_cpts, CopulaCalibration, CopulaConfig};
use super::{
    check_requirements, Affine, ConformityScore, Cp2, DrCp, Ecdf, HdPcp, LCp, MCp, MonteCarloParams, Pcp,
    PointState, Stdqr,
};
use crate::calibration::{conformal_quantile, region_contains, CalibrationResult};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Registered multi-output conformal methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    MCp,
    CopulaCpts,
    DrCp,
    CHdr,
    Pcp,
    HdPcp,
    Stdqr,
    CPcp,
    LCp,
    Cp2Pcp,
}

impl MethodId {
    pub const ALL: [MethodId; 10] = [
        MethodId::MCp,
        MethodId::CopulaCpts,
        MethodId::DrCp,
        MethodId::CHdr,
        MethodId::Pcp,
        MethodId::HdPcp,
        MethodId::Stdqr,
        MethodId::CPcp,
        MethodId::LCp,
        MethodId::Cp2Pcp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodId::MCp => "m_cp",
            MethodId::CopulaCpts => "copula_cpts",
            MethodId::DrCp => "dr_cp",
            MethodId::CHdr => "c_hdr",
            MethodId::Pcp => "pcp",
            MethodId::HdPcp => "hd_pcp",
            MethodId::Stdqr => "stdqr",
            MethodId::CPcp => "c_pcp",
            MethodId::LCp => "l_cp",
            MethodId::Cp2Pcp => "cp2_pcp",
        }
    }

    /// Whether calibration follows the plain split-conformal quantile.
    pub fn is_split_conformal(&self) -> bool {
        *self != MethodId::CopulaCpts
    }

    /// Whether the method only reads marginal quantiles, whose sampling cost
    /// is excluded from its timings when they come from a sampler.
    pub fn uses_marginal_quantiles(&self) -> bool {
        matches!(self, MethodId::MCp | MethodId::CopulaCpts)
    }

    /// The conformity score, or `None` for CopulaCPTS.
    pub fn score(&self, alpha: f64, config: &MethodConfig) -> Result<Option<Box<dyn ConformityScore>>> {
        config.monte_carlo.validate()?;
        let mc = config.monte_carlo;
        let base: Box<dyn ConformityScore> = match self {
            MethodId::MCp => Box::new(MCp::new(alpha)?),
            MethodId::CopulaCpts => return Ok(None),
            MethodId::DrCp => Box::new(DrCp),
            MethodId::CHdr => Box::new(Ecdf::new(DrCp, mc.cdf_samples)?),
            MethodId::Pcp => Box::new(Pcp::new(mc)),
            MethodId::HdPcp => Box::new(HdPcp::new(mc, alpha)?),
            MethodId::Stdqr => Box::new(Stdqr::new(mc, alpha)?),
            MethodId::CPcp => Box::new(Ecdf::new(Pcp::new(mc), mc.cdf_samples)?),
            MethodId::LCp => Box::new(LCp),
            MethodId::Cp2Pcp => Box::new(Cp2::new(Pcp::new(mc), mc.cdf_samples, alpha)?),
        };
        if config.score_scale == 1.0 && config.score_shift == 0.0 {
            Ok(Some(base))
        } else {
            Ok(Some(Box::new(Affine::new(base, config.score_scale, config.score_shift)?)))
        }
    }

    /// Unmet model capabilities, empty when the method can run.
    pub fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        match self.score(0.5, &MethodConfig::default()) {
            Ok(Some(score)) => score.missing(available),
            _ => MCp::new(0.5).expect("valid alpha").missing(available),
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub monte_carlo: MonteCarloParams,
    pub copula: CopulaConfig,
    /// Every score `s` is replaced by `score_scale·s + score_shift`.
    pub score_scale: f64,
    pub score_shift: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self { monte_carlo: MonteCarloParams::default(), copula: CopulaConfig::default(), score_scale: 1.0, score_shift: 0.0 }
    }
}

impl MethodConfig {
    pub fn with_transform(mut self, scale: f64, shift: f64) -> Self {
        self.score_scale = scale;
        self.score_shift = shift;
        self
    }
}

/// Conformity scores of every point of `data`; point `j` is prepared with
/// `stream.child(j)`.
pub fn calibration_scores(
    score: &dyn ConformityScore,
    model: &dyn ConditionalModel,
    data: &Dataset,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    check_requirements(score, model)?;
    (0..data.len())
        .into_par_iter()
        .map(|j| {
            let x = data.x_row(j);
            let state = score.prepare(model, x, &stream.child(j as u64))?;
            let s = score.score(model, x, &state, data.y_row(j))?;
            if s.is_nan() || s.is_infinite() {
                return Err(Error::Numerical(format!("{} score of calibration point {j} is {s}", score.name())));
            }
            Ok(s)
        })
        .collect()
}

pub enum Calibration {
    Split { score: Box<dyn ConformityScore>, result: CalibrationResult },
    Copula(CopulaCalibration),
}

/// A method with its calibrated threshold(s).
pub struct CalibratedMethod {
    pub id: MethodId,
    pub alpha: f64,
    pub calibration: Calibration,
}

/// Calibrates `id` on `cal`. Point `j` uses `stream.child(j)`.
pub fn calibrate(
    id: MethodId,
    config: &MethodConfig,
    model: &dyn ConditionalModel,
    cal: &Dataset,
    alpha: f64,
    stream: &RngStream,
) -> Result<CalibratedMethod> {
    let calibration = match id.score(alpha, config)? {
        Some(score) => {
            let scores = calibration_scores(score.as_ref(), model, cal, stream)?;
            Calibration::Split { result: conformal_quantile(&scores, alpha)?, score }
        }
        None => {
            let missing = id.missing(&model.capabilities());
            if let Some(name) = missing.first() {
                return Err(Error::MissingCapability(name));
            }
            let copula = CopulaConfig { score_scale: config.score_scale, score_shift: config.score_shift, ..config.copula };
            Calibration::Copula(calibrate_copula_cpts(model, cal, alpha, copula, stream)?)
        }
    };
    Ok(CalibratedMethod { id, alpha, calibration })
}

impl CalibratedMethod {
    /// The split-conformal threshold `q̂`, if the method has one.
    pub fn q_hat(&self) -> Option<f64> {
        match &self.calibration {
            Calibration::Split { result, .. } => Some(result.q_hat),
            Calibration::Copula(_) => None,
        }
    }

    pub fn split_result(&self) -> Option<&CalibrationResult> {
        match &self.calibration {
            Calibration::Split { result, .. } => Some(result),
            Calibration::Copula(_) => None,
        }
    }

    pub fn copula(&self) -> Option<&CopulaCalibration> {
        match &self.calibration {
            Calibration::Copula(c) => Some(c),
            Calibration::Split { .. } => None,
        }
    }

    /// The prediction region at `x`, with its input-dependent state drawn
    /// from `stream`.
    pub fn region<'a>(
        &'a self,
        model: &'a dyn ConditionalModel,
        x: &[f64],
        stream: &RngStream,
    ) -> Result<PointRegion<'a>> {
        let state = match &self.calibration {
            Calibration::Split { score, .. } => score.prepare(model, x, stream)?,
            Calibration::Copula(c) => PointState::Intervals(c.mcp().intervals(model, x, stream)?),
        };
        Ok(PointRegion { method: self, model, x: x.to_vec(), state })
    }

    /// Membership of each `(x, y)` pair of `data`; point `j` uses
    /// `stream.child(j)`.
    pub fn memberships(&self, model: &dyn ConditionalModel, data: &Dataset, stream: &RngStream) -> Result<Vec<bool>> {
        (0..data.len())
            .into_par_iter()
            .map(|j| self.region(model, data.x_row(j), &stream.child(j as u64))?.contains(data.y_row(j)))
            .collect()
    }
}

/// `R̂(x)` for one input.
pub struct PointRegion<'a> {
    method: &'a CalibratedMethod,
    model: &'a dyn ConditionalModel,
    x: Vec<f64>,
    state: PointState,
}

impl PointRegion<'_> {
    pub fn state(&self) -> &PointState {
        &self.state
    }

    /// Conformity score of `y` (for CopulaCPTS, the largest per-output
    /// margin `sᵢ − tᵢ`, negative inside the region).
    pub fn score(&self, y: &[f64]) -> Result<f64> {
        match &self.method.calibration {
            Calibration::Split { score, .. } => score.score(self.model, &self.x, &self.state, y),
            Calibration::Copula(c) => {
                let s = c.scores(self.state.intervals()?, y);
                Ok(s.iter().zip(&c.thresholds).map(|(s, t)| s - t).fold(f64::NEG_INFINITY, f64::max))
            }
        }
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        match &self.method.calibration {
            Calibration::Split { score, result } => {
                Ok(region_contains(score.score(self.model, &self.x, &self.state, y)?, result.q_hat))
            }
            Calibration::Copula(c) => Ok(c.contains(self.state.intervals()?, y)),
        }
    }

    pub fn contains_batch(&self, ys: ArrayView2<f64>) -> Result<Vec<bool>> {
        match &self.method.calibration {
            Calibration::Split { score, result } => Ok(score
                .score_batch(self.model, &self.x, &self.state, ys)?
                .into_iter()
                .map(|s| region_contains(s, result.q_hat))
                .collect()),
            Calibration::Copula(c) => {
                let intervals = self.state.intervals()?;
                Ok(ys.rows().into_iter().map(|y| c.contains(intervals, &y.to_vec())).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CapabilityMask, ConditionalGaussian};
    use ndarray::Array2;
    use rand::Rng;

    fn gaussian_data(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed).rng();
        let x = Array2::from_shape_fn((n, 1), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(m.name().parse::<MethodId>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("nope".parse::<MethodId>().is_err());
    }

    #[test]
    fn score_names_match_registry() {
        for m in MethodId::ALL.into_iter().filter(MethodId::is_split_conformal) {
            let s = m.score(0.2, &MethodConfig::default()).unwrap().unwrap();
            assert_eq!(s.name(), m.name());
        }
    }

    #[test]
    fn capability_gates() {
        let density_only = Capabilities::density();
        assert!(MethodId::DrCp.missing(&density_only).is_empty());
        assert_eq!(MethodId::Pcp.missing(&density_only), vec!["sampler"]);
        assert_eq!(MethodId::CHdr.missing(&density_only), vec!["sampler"]);
        assert_eq!(MethodId::LCp.missing(&density_only), vec!["invertible map"]);
        assert_eq!(MethodId::CopulaCpts.missing(&density_only), vec!["marginal quantiles"]);
        let sampler_only = Capabilities::sampler();
        assert!(MethodId::MCp.missing(&sampler_only).is_empty());
        assert!(MethodId::CPcp.missing(&sampler_only).is_empty());
        assert_eq!(MethodId::HdPcp.missing(&sampler_only), vec!["density"]);
        for m in MethodId::ALL {
            assert!(m.missing(&Capabilities::ALL).is_empty());
        }
    }

    #[test]
    fn calibrate_then_cover() {
        let model = ConditionalGaussian::standard(1, 2);
        let cal = gaussian_data(300, 1);
        let test = gaussian_data(3000, 2);
        for m in MethodId::ALL {
            let c = calibrate(m, &MethodConfig::default(), &model, &cal, 0.2, &RngStream::new(10)).unwrap();
            let inside = c.memberships(&model, &test, &RngStream::new(11)).unwrap();
            let cov = inside.iter().filter(|b| **b).count() as f64 / inside.len() as f64;
            assert!((cov - 0.8).abs() < 0.08, "{m}: {cov}");
        }
    }

    #[test]
    fn masked_model_fails_fast() {
        let model = CapabilityMask::new(ConditionalGaussian::standard(1, 2), Capabilities::density());
        let cal = gaussian_data(20, 1);
        let err = calibrate(MethodId::Pcp, &MethodConfig::default(), &model, &cal, 0.2, &RngStream::new(0));
        assert!(matches!(err, Err(Error::MissingCapability("sampler"))));
    }

    #[test]
    fn batch_and_single_membership_agree() {
        let model = ConditionalGaussian::standard(1, 2);
        let cal = gaussian_data(100, 3);
        let probes = gaussian_data(50, 4);
        for m in MethodId::ALL {
            let c = calibrate(m, &MethodConfig::default(), &model, &cal, 0.2, &RngStream::new(1)).unwrap();
            let r = c.region(&model, &[0.3], &RngStream::new(2)).unwrap();
            let batch = r.contains_batch(probes.y.view()).unwrap();
            for (j, b) in batch.iter().enumerate() {
                assert_eq!(*b, r.contains(probes.y_row(j)).unwrap());
            }
        }
    }
}
