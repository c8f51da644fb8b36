use super::{ConformityScore, PointState};
use crate::error::{Error, Result};
use crate::models::{Capabilities, ConditionalModel};
use crate::rng::RngStream;
use ndarray::ArrayView2;

/// Monte-Carlo conditional CDF of a base score,
/// `(1/K) #{k : s(x, Ŷ⁽ᵏ⁾) ≤ s(x, y)}` with `Ŷ⁽ᵏ⁾ ~ F̂_{Y|x}`.
///
/// The base score is prepared on child stream 0 and the `K` reference draws
/// come from child stream 1, so wrapping never perturbs the base's samples.
pub struct Ecdf<S> {
    pub inner: S,
    pub cdf_samples: usize,
}

impl<S: ConformityScore> Ecdf<S> {
    pub fn new(inner: S, cdf_samples: usize) -> Result<Self> {
        if cdf_samples == 0 {
            return Err(Error::InvalidConfig("the CDF wrapper needs K ≥ 1 draws".into()));
        }
        Ok(Self { inner, cdf_samples })
    }
}

/// Base state (child 0) and base scores of `K` draws (child 1) at `x`.
fn reference_scores<S: ConformityScore>(
    inner: &S,
    count: usize,
    model: &dyn ConditionalModel,
    x: &[f64],
    stream: &RngStream,
) -> Result<(PointState, Vec<f64>)> {
    let state = inner.prepare(model, x, &stream.child(0))?;
    let draws = model.sample(x, count, &mut stream.child(1).rng())?;
    let mut scores = inner.score_batch(model, x, &state, draws.view())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("base score evaluated to NaN on a reference draw".into()));
    }
    scores.sort_by(f64::total_cmp);
    Ok((state, scores))
}

fn ecdf(sorted: &[f64], value: f64) -> f64 {
    sorted.partition_point(|s| *s <= value) as f64 / sorted.len() as f64
}

impl<S: ConformityScore> ConformityScore for Ecdf<S> {
    fn name(&self) -> String {
        match self.inner.name().as_str() {
            "dr_cp" => "c_hdr".into(),
            "pcp" => "c_pcp".into(),
            other => format!("cdf({other})"),
        }
    }

    fn requirements(&self) -> Capabilities {
        self.inner.requirements().union(Capabilities::sampler())
    }

    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        let mut out = self.inner.missing(available);
        if !available.sampler && !out.contains(&"sampler") {
            out.push("sampler");
        }
        out
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        let (inner, sorted) = reference_scores(&self.inner, self.cdf_samples, model, x, stream)?;
        Ok(PointState::Reference { inner: Box::new(inner), sorted })
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        let PointState::Reference { inner, sorted } = state else {
            return Err(Error::InvalidConfig("point state was prepared by a different score".into()));
        };
        Ok(ecdf(sorted, self.inner.score(model, x, inner, y)?))
    }

    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        let PointState::Reference { inner, sorted } = state else {
            return Err(Error::InvalidConfig("point state was prepared by a different score".into()));
        };
        Ok(self.inner.score_batch(model, x, inner, ys)?.into_iter().map(|s| ecdf(sorted, s)).collect())
    }
}

/// Rank of the CP² conditional threshold: `⌊K(1 − α)⌋`.
pub fn cp2_rank(cdf_samples: usize, alpha: f64) -> usize {
    let raw = cdf_samples as f64 * (1.0 - alpha);
    (raw + raw * 1e-12).floor() as usize
}

/// Conditional rescaling `s(x, y) / τ̂ₓ`, where `τ̂ₓ` is the `⌊K(1 − α)⌋`-th
/// smallest base score over `K` draws at `x`.
pub struct Cp2<S> {
    pub inner: S,
    pub cdf_samples: usize,
    pub alpha: f64,
}

impl<S: ConformityScore> Cp2<S> {
    pub fn new(inner: S, cdf_samples: usize, alpha: f64) -> Result<Self> {
        super::check_alpha(alpha)?;
        if cp2_rank(cdf_samples, alpha) == 0 {
            return Err(Error::InvalidConfig(format!(
                "CP² threshold rank ⌊K(1 − α)⌋ is zero for K = {cdf_samples}, alpha = {alpha}"
            )));
        }
        Ok(Self { inner, cdf_samples, alpha })
    }
}

impl<S: ConformityScore> ConformityScore for Cp2<S> {
    fn name(&self) -> String {
        format!("cp2_{}", self.inner.name())
    }

    fn requirements(&self) -> Capabilities {
        self.inner.requirements().union(Capabilities::sampler())
    }

    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        let mut out = self.inner.missing(available);
        if !available.sampler && !out.contains(&"sampler") {
            out.push("sampler");
        }
        out
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        let (inner, sorted) = reference_scores(&self.inner, self.cdf_samples, model, x, stream)?;
        let tau = sorted[cp2_rank(self.cdf_samples, self.alpha) - 1];
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::DegenerateThreshold(format!("CP² threshold τ̂ₓ = {tau} is not positive and finite")));
        }
        Ok(PointState::Scaled { inner: Box::new(inner), tau })
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        let PointState::Scaled { inner, tau } = state else {
            return Err(Error::InvalidConfig("point state was prepared by a different score".into()));
        };
        Ok(self.inner.score(model, x, inner, y)? / tau)
    }

    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        let PointState::Scaled { inner, tau } = state else {
            return Err(Error::InvalidConfig("point state was prepared by a different score".into()));
        };
        Ok(self.inner.score_batch(model, x, inner, ys)?.into_iter().map(|s| s / tau).collect())
    }
}

/// Strictly increasing transform `a·s + b` of a base score; the base state is
/// used unchanged.
pub struct Affine<S> {
    pub inner: S,
    pub scale: f64,
    pub shift: f64,
}

impl<S: ConformityScore> Affine<S> {
    pub fn new(inner: S, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::InvalidConfig(format!("affine transform needs scale > 0, got {scale}")));
        }
        Ok(Self { inner, scale, shift })
    }
}

impl<S: ConformityScore> ConformityScore for Affine<S> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn requirements(&self) -> Capabilities {
        self.inner.requirements()
    }

    fn missing(&self, available: &Capabilities) -> Vec<&'static str> {
        self.inner.missing(available)
    }

    fn prepare(&self, model: &dyn ConditionalModel, x: &[f64], stream: &RngStream) -> Result<PointState> {
        self.inner.prepare(model, x, stream)
    }

    fn score(&self, model: &dyn ConditionalModel, x: &[f64], state: &PointState, y: &[f64]) -> Result<f64> {
        Ok(self.scale * self.inner.score(model, x, state, y)? + self.shift)
    }

    fn score_batch(
        &self,
        model: &dyn ConditionalModel,
        x: &[f64],
        state: &PointState,
        ys: ArrayView2<f64>,
    ) -> Result<Vec<f64>> {
        let base = self.inner.score_batch(model, x, state, ys)?;
        Ok(base.into_iter().map(|s| self.scale * s + self.shift).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConditionalGaussian;
    use crate::scores::{DrCp, MonteCarloParams, Pcp};

    #[test]
    fn ecdf_counts_with_ties_included() {
        let sorted = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(ecdf(&sorted, 0.25), 0.5);
        assert_eq!(ecdf(&sorted, 0.0), 0.0);
        assert_eq!(ecdf(&sorted, 1.0), 1.0);
        assert_eq!(ecdf(&sorted, 0.2), 0.5);
        assert_eq!(ecdf(&[0.5; 3], 0.5), 1.0);
    }

    #[test]
    fn c_hdr_of_standard_normal_matches_analytic_hpd() {
        let m = ConditionalGaussian::standard(1, 1);
        let s = Ecdf::new(DrCp, 100_000).unwrap();
        let state = s.prepare(&m, &[0.0], &RngStream::new(12)).unwrap();
        let v = s.score(&m, &[0.0], &state, &[0.5]).unwrap();
        // P(|Z| ≤ 0.5)
        assert!((v - 0.382_924_922_548_026).abs() < 0.005, "{v}");
        assert_eq!(s.score(&m, &[0.0], &state, &[0.0]).unwrap(), 0.0);
        assert_eq!(s.name(), "c_hdr");
    }

    #[test]
    fn ecdf_range_is_a_grid() {
        let m = ConditionalGaussian::standard(1, 2);
        let k = 7;
        let s = Ecdf::new(Pcp::new(MonteCarloParams::new(5, k).unwrap()), k).unwrap();
        let state = s.prepare(&m, &[0.0], &RngStream::new(1)).unwrap();
        for y in [[0.0, 0.0], [0.3, -1.0], [2.0, 2.0], [9.0, 0.0]] {
            let v = s.score(&m, &[0.0], &state, &y).unwrap() * k as f64;
            assert!((v - v.round()).abs() < 1e-12 && (0.0..=k as f64).contains(&v));
        }
        let single = Ecdf::new(Pcp::new(MonteCarloParams::new(5, 1).unwrap()), 1).unwrap();
        let st = single.prepare(&m, &[0.0], &RngStream::new(2)).unwrap();
        let v = single.score(&m, &[0.0], &st, &[0.4, 0.4]).unwrap();
        assert!(v == 0.0 || v == 1.0);
    }

    #[test]
    fn cp2_divides_by_conditional_threshold() {
        let m = ConditionalGaussian::standard(1, 2);
        let s = Cp2::new(Pcp::new(MonteCarloParams::default()), 100, 0.2).unwrap();
        let state = s.prepare(&m, &[0.0], &RngStream::new(4)).unwrap();
        let PointState::Scaled { inner, tau } = &state else { panic!() };
        let base = Pcp::new(MonteCarloParams::default());
        let y = [0.7, -0.2];
        let b = base.score(&m, &[0.0], inner, &y).unwrap();
        assert!((s.score(&m, &[0.0], &state, &y).unwrap() - b / tau).abs() < 1e-15);
        assert_eq!(cp2_rank(100, 0.2), 80);
        assert!(Cp2::new(Pcp::new(MonteCarloParams::default()), 1, 0.2).is_err());
    }

    #[test]
    fn cp2_rejects_nonpositive_threshold() {
        // DR-CP scores are negative, so τ̂ₓ ≤ 0.
        let m = ConditionalGaussian::standard(1, 1);
        let s = Cp2::new(DrCp, 10, 0.2).unwrap();
        assert!(matches!(s.prepare(&m, &[0.0], &RngStream::new(0)), Err(Error::DegenerateThreshold(_))));
    }

    #[test]
    fn affine_is_applied_after_the_base() {
        let m = ConditionalGaussian::standard(1, 1);
        let s = Affine::new(DrCp, 2.0, 1.0).unwrap();
        let v = s.score(&m, &[0.0], &PointState::Empty, &[0.0]).unwrap();
        assert!((v - (1.0 - 2.0 * 0.398_942_280_401_432_7)).abs() < 1e-15);
        assert!(Affine::new(DrCp, 0.0, 1.0).is_err());
    }
}
