//! Synthetic heteroscedastic processes with known conditional laws, plus the
//! Gaussian-ball scenario used to validate region-size estimation.
//!
//! Both toy processes have `p = 1`, `d = 2` and are standardized with their
//! exact population moments, so the generated data and the oracle model
//! ([`crate::models::ToyOracle`]) live in the same coordinates.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::marginal_coverage;
use crate::models::ConditionalModel;
use crate::rng::{phase, RngStream, StreamRng};
use crate::scores::{calibrate, MethodConfig, MethodId};
use crate::special::{chi2_quantile, ln_ball_volume};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

pub const UNIMODAL_COMPONENTS: usize = 200;
pub const UNIMODAL_SIGMA: f64 = 0.2;
pub const BIMODAL_CENTER: f64 = 4.0;
pub const TOY_OUTPUT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyProcess {
    /// `X ~ U(0,1)`, `Y | x ~ (1/k) Σ_j N((1.3 − x) μ_j, σ² I)` with the
    /// `μ_j` spread along an arc.
    Unimodal,
    /// `X ~ U(0.5, 2)`, `Y | x ~ ½ N(4·1, x I) + ½ N(−4·1, I/x)`.
    Bimodal,
}

impl std::str::FromStr for ToyProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimodal" => Ok(Self::Unimodal),
            "bimodal" => Ok(Self::Bimodal),
            other => Err(Error::InvalidConfig(format!("unknown toy process '{other}'"))),
        }
    }
}

/// Affine constants mapping raw toy coordinates to standardized ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyScaling {
    pub x_mean: f64,
    pub x_scale: f64,
    pub y_mean: [f64; 2],
    pub y_scale: [f64; 2],
}

/// Arc centres `μ_j = (cos a_j, 0.5 − sin a_j)`, `a_j = (j − 1)π/(k − 1)`.
pub fn unimodal_arc() -> &'static [[f64; 2]] {
    static ARC: OnceLock<Vec<[f64; 2]>> = OnceLock::new();
    ARC.get_or_init(|| {
        let k = UNIMODAL_COMPONENTS;
        (0..k)
            .map(|j| {
                let a = j as f64 * PI / (k - 1) as f64;
                [a.cos(), 0.5 - a.sin()]
            })
            .collect()
    })
}

/// Raw-coordinate mixture at a raw input: `(weights, means, stds)`, means and
/// stds component-major.
pub(crate) type RawMixture = (Vec<f64>, Vec<f64>, Vec<f64>);

impl ToyProcess {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Unimodal => "unimodal",
            Self::Bimodal => "bimodal",
        }
    }

    /// Support of the raw input.
    pub fn x_range(&self) -> (f64, f64) {
        match self {
            Self::Unimodal => (0.0, 1.0),
            Self::Bimodal => (0.5, 2.0),
        }
    }

    /// Exact population moments of the raw process.
    pub fn scaling(&self) -> ToyScaling {
        let (lo, hi) = self.x_range();
        let x_mean = 0.5 * (lo + hi);
        let x_scale = (hi - lo) / 12f64.sqrt();
        match self {
            Self::Unimodal => {
                // c = 1.3 − X with X ~ U(0,1)
                let c1 = 0.8;
                let c2 = (1.3f64.powi(3) - 0.3f64.powi(3)) / 3.0;
                let arc = unimodal_arc();
                let k = arc.len() as f64;
                let mut y_mean = [0.0; 2];
                let mut y_scale = [0.0; 2];
                for i in 0..2 {
                    let m1 = arc.iter().map(|m| m[i]).sum::<f64>() / k;
                    let m2 = arc.iter().map(|m| m[i] * m[i]).sum::<f64>() / k;
                    y_mean[i] = c1 * m1;
                    let second = c2 * m2 + UNIMODAL_SIGMA * UNIMODAL_SIGMA;
                    y_scale[i] = (second - y_mean[i] * y_mean[i]).sqrt();
                }
                ToyScaling { x_mean, x_scale, y_mean, y_scale }
            }
            Self::Bimodal => {
                // E[Y_i²] = 16 + ½E[X] + ½E[1/X], E[1/X] = ln(4)/1.5
                let inv_mean = (hi / lo).ln() / (hi - lo);
                let second = BIMODAL_CENTER * BIMODAL_CENTER + 0.5 * x_mean + 0.5 * inv_mean;
                ToyScaling { x_mean, x_scale, y_mean: [0.0; 2], y_scale: [second.sqrt(); 2] }
            }
        }
    }

    pub(crate) fn raw_mixture(&self, x_raw: f64) -> Result<RawMixture> {
        match self {
            Self::Unimodal => {
                let c = 1.3 - x_raw;
                let arc = unimodal_arc();
                let means = arc.iter().flat_map(|m| [c * m[0], c * m[1]]).collect();
                Ok((vec![1.0; arc.len()], means, vec![UNIMODAL_SIGMA; 2 * arc.len()]))
            }
            Self::Bimodal => {
                if !(x_raw > 0.0) {
                    return Err(Error::InvalidData(format!(
                        "bimodal process is undefined at raw input {x_raw}"
                    )));
                }
                let up = x_raw.sqrt();
                let down = 1.0 / up;
                Ok((
                    vec![0.5, 0.5],
                    vec![BIMODAL_CENTER, BIMODAL_CENTER, -BIMODAL_CENTER, -BIMODAL_CENTER],
                    vec![up, up, down, down],
                ))
            }
        }
    }

    fn draw_raw(&self, rng: &mut StreamRng) -> (f64, [f64; 2]) {
        let (lo, hi) = self.x_range();
        let x = lo + (hi - lo) * rng.random::<f64>();
        let y = match self {
            Self::Unimodal => {
                let arc = unimodal_arc();
                let j = rng.random_range(0..arc.len());
                let c = 1.3 - x;
                [
                    c * arc[j][0] + UNIMODAL_SIGMA * rng.sample::<f64, _>(StandardNormal),
                    c * arc[j][1] + UNIMODAL_SIGMA * rng.sample::<f64, _>(StandardNormal),
                ]
            }
            Self::Bimodal => {
                let (center, sd) =
                    if rng.random::<bool>() { (BIMODAL_CENTER, x.sqrt()) } else { (-BIMODAL_CENTER, 1.0 / x.sqrt()) };
                [
                    center + sd * rng.sample::<f64, _>(StandardNormal),
                    center + sd * rng.sample::<f64, _>(StandardNormal),
                ]
            }
        };
        (x, y)
    }

    /// `n` i.i.d. pairs, standardized when `standardize` is set.
    pub fn generate(&self, n: usize, stream: &RngStream, standardize: bool) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidConfig("cannot generate an empty dataset".into()));
        }
        let s = if standardize {
            self.scaling()
        } else {
            ToyScaling { x_mean: 0.0, x_scale: 1.0, y_mean: [0.0; 2], y_scale: [1.0; 2] }
        };
        let mut rng = stream.rng();
        let mut x = Array2::zeros((n, 1));
        let mut y = Array2::zeros((n, 2));
        for i in 0..n {
            let (xr, yr) = self.draw_raw(&mut rng);
            x[[i, 0]] = (xr - s.x_mean) / s.x_scale;
            for c in 0..2 {
                y[[i, c]] = (yr[c] - s.y_mean[c]) / s.y_scale[c];
            }
        }
        Dataset::new(x, y)
    }
}

/// Standardized sample of the unimodal process.
pub fn gen_unimodal(n: usize, stream: &RngStream) -> Result<Dataset> {
    ToyProcess::Unimodal.generate(n, stream, true)
}

/// Standardized sample of the bimodal process.
pub fn gen_bimodal(n: usize, stream: &RngStream) -> Result<Dataset> {
    ToyProcess::Bimodal.generate(n, stream, true)
}

/// Standard normal outputs with the ball `{‖y‖ ≤ r}` of probability `1 − α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallScenario {
    pub dim: usize,
    pub alpha: f64,
    pub radius: f64,
    pub log_volume: f64,
}

impl BallScenario {
    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().map(|v| v * v).sum::<f64>() <= self.radius * self.radius
    }
}

pub fn ball_scenario(dim: usize, alpha: f64) -> Result<BallScenario> {
    if dim == 0 {
        return Err(Error::InvalidConfig("ball scenario needs d ≥ 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let radius = chi2_quantile(dim as f64, 1.0 - alpha).sqrt();
    Ok(BallScenario { dim, alpha, radius, log_volume: ln_ball_volume(dim, radius) })
}

/// Law of the coverage conditional on the calibration set:
/// `Beta(k_α, n_cal + 1 − k_α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageLaw {
    pub a: f64,
    pub b: f64,
}

impl CoverageLaw {
    pub fn new(n_cal: usize, alpha: f64) -> Self {
        let k = crate::calibration::k_alpha(n_cal, alpha).min(n_cal + 1) as f64;
        Self { a: k, b: (n_cal + 1) as f64 - k }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        self.a * self.b / (s * s * (s + 1.0))
    }
}

/// Settings of one coverage-law replication study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaHarness {
    pub process: ToyProcess,
    pub n_cal: usize,
    pub n_test: usize,
    pub alpha: f64,
    pub replications: usize,
    pub method: MethodId,
    pub method_config: MethodConfig,
}

/// Test coverage of `method` over independent replications, each with a
/// fresh calibration set and a fresh test set. Replication `r` draws
/// everything from `stream.child(r)`.
pub fn coverage_beta_harness(
    harness: &BetaHarness,
    model: &dyn ConditionalModel,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    (0..harness.replications)
        .map(|r| {
            let rep = stream.child(r as u64);
            let data = rep.child(phase::DATA);
            let cal = harness.process.generate(harness.n_cal, &data.child(0), true)?;
            let test = harness.process.generate(harness.n_test, &data.child(1), true)?;
            let method = calibrate(
                harness.method,
                &harness.method_config,
                model,
                &cal,
                harness.alpha,
                &rep.child(phase::CALIBRATION),
            )?;
            marginal_coverage(&method.memberships(model, &test, &rep.child(phase::TEST))?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_constants() {
        assert_eq!(UNIMODAL_COMPONENTS, 200);
        assert_eq!(UNIMODAL_SIGMA, 0.2);
        let arc = unimodal_arc();
        assert_eq!(arc[0], [1.0, 0.5]);
        assert!((arc[199][0] + 1.0).abs() < 1e-15);
        assert!((arc[199][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standardized_outputs_have_zero_mean_unit_variance() {
        for process in [ToyProcess::Unimodal, ToyProcess::Bimodal] {
            let data = process.generate(100_000, &RngStream::new(17), true).unwrap();
            for col in data.x.columns().into_iter().chain(data.y.columns()) {
                let n = col.len() as f64;
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 0.02, "{process:?} mean {mean}");
                assert!((var - 1.0).abs() < 0.02, "{process:?} var {var}");
            }
        }
    }

    #[test]
    fn raw_supports() {
        let data = ToyProcess::Bimodal.generate(2000, &RngStream::new(1), false).unwrap();
        assert!(data.x.iter().all(|v| (0.5..2.0).contains(v)));
        let data = ToyProcess::Unimodal.generate(2000, &RngStream::new(1), false).unwrap();
        assert!(data.x.iter().all(|v| (0.0..1.0).contains(v)));
        assert!(ToyProcess::Unimodal.generate(0, &RngStream::new(1), true).is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let a = gen_unimodal(50, &RngStream::new(4)).unwrap();
        let b = gen_unimodal(50, &RngStream::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ball_scenarios() {
        let one = ball_scenario(1, 0.2).unwrap();
        assert!((one.radius - 1.281_551_565_544_600_4).abs() < 1e-9);
        assert!((one.log_volume.exp() - 2.563_103_131_089_201).abs() < 1e-8);
        let two = ball_scenario(2, 0.2).unwrap();
        assert!((two.radius.powi(2) + 2.0 * 0.2f64.ln()).abs() < 1e-10);
        assert!((two.log_volume.exp() - PI * -2.0 * 0.2f64.ln()).abs() < 1e-9);
        for d in 1..10 {
            assert!(ball_scenario(d, 0.2).unwrap().contains(&vec![0.0; d]));
        }
        assert!(ball_scenario(0, 0.2).is_err());
    }

    #[test]
    fn harness_mean_matches_beta_law() {
        use crate::models::ToyOracle;
        let harness = BetaHarness {
            process: ToyProcess::Unimodal,
            n_cal: 19,
            n_test: 400,
            alpha: 0.2,
            replications: 200,
            method: MethodId::DrCp,
            method_config: MethodConfig::default(),
        };
        let cov = coverage_beta_harness(&harness, &ToyOracle::new(ToyProcess::Unimodal), &RngStream::new(3)).unwrap();
        let law = CoverageLaw::new(19, 0.2);
        let mean = cov.iter().sum::<f64>() / cov.len() as f64;
        // Test-set noise adds variance on top of the Beta law.
        let var = law.variance() + law.mean() * (1.0 - law.mean()) / 400.0;
        assert!((mean - law.mean()).abs() <= 3.0 * (var / 200.0).sqrt(), "{mean}");
    }

    #[test]
    fn degenerate_alpha_gives_full_coverage() {
        use crate::models::ToyOracle;
        let harness = BetaHarness {
            process: ToyProcess::Bimodal,
            n_cal: 9,
            n_test: 100,
            alpha: 0.05,
            replications: 3,
            method: MethodId::LCp,
            method_config: MethodConfig::default(),
        };
        assert_eq!(CoverageLaw::new(9, 0.05).a, 10.0);
        let cov = coverage_beta_harness(&harness, &ToyOracle::new(ToyProcess::Bimodal), &RngStream::new(0)).unwrap();
        assert!(cov.iter().all(|c| *c == 1.0));
    }

    #[test]
    fn beta_law_moments() {
        let law = CoverageLaw::new(199, 0.2);
        assert_eq!((law.a, law.b), (160.0, 40.0));
        assert!((law.mean() - 0.8).abs() < 1e-15);
        assert!((law.variance() - 160.0 * 40.0 / (200.0f64.powi(2) * 201.0)).abs() < 1e-18);
        assert!((law.variance() - 7.96e-4).abs() < 1e-6);
    }
}
