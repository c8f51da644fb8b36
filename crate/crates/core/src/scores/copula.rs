//! CopulaCPTS: per-output CQR scores combined through an empirical copula.
//!
//! The calibration set is split in two. The first part gives each output's
//! empirical score CDF `F̂ᵢ`; on the second part we choose per-output
//! thresholds `tᵢ` on the quantile grid of `F̂ᵢ` so that the product region
//! `{y : sᵢ(x, yᵢ) < tᵢ ∀i}` covers at least `1 − α` of the points, with the
//! smallest mean rectangle volume we can reach.
//!
//! The search is deterministic. It starts from the smallest common grid
//! index that reaches the target coverage, then repeatedly takes the best
//! volume-reducing move that keeps coverage: lowering one threshold by a grid
//! step, or lowering one and raising another by the least amount that
//! restores coverage.

use super::marginal::{cqr_scores, MCp};
use super::check_alpha;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::rng::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

pub const DEFAULT_COPULA_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaConfig {
    /// Fraction of the calibration set used to estimate the `F̂ᵢ`.
    pub split: f64,
    /// Strictly increasing map `a·s + b` applied to every per-output score.
    /// Margins are mapped back before computing volumes, so the returned
    /// region does not depend on it.
    pub score_scale: f64,
    pub score_shift: f64,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        Self { split: DEFAULT_COPULA_SPLIT, score_scale: 1.0, score_shift: 0.0 }
    }
}

impl CopulaConfig {
    fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidConfig(format!("copula split must lie in (0, 1), got {}", self.split)));
        }
        if !(self.score_scale > 0.0 && self.score_scale.is_finite() && self.score_shift.is_finite()) {
            return Err(Error::InvalidConfig("copula score transform needs a positive finite scale".into()));
        }
        Ok(())
    }

    fn transform(&self, s: f64) -> f64 {
        self.score_scale * s + self.score_shift
    }

    fn margin(&self, t: f64) -> f64 {
        (t - self.score_shift) / self.score_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaCalibration {
    pub alpha: f64,
    pub config: CopulaConfig,
    pub quantile_levels: (f64, f64),
    /// `tᵢ` on the (transformed) score scale; `+inf` admits every output.
    pub thresholds: Vec<f64>,
    /// `F̂ᵢ(tᵢ⁻)`, the cal-1 fraction strictly below each threshold.
    pub levels: Vec<f64>,
    pub cal1_size: usize,
    pub cal2_size: usize,
    pub cal2_coverage: f64,
    /// `|coverage − (1 − α)|` on cal-2.
    pub loss: f64,
}

impl CopulaCalibration {
    pub fn mcp(&self) -> MCp {
        MCp::with_levels(self.quantile_levels.0, self.quantile_levels.1).expect("validated at calibration")
    }

    /// Transformed per-output scores of `y` against `intervals`.
    pub fn scores(&self, intervals: &[(f64, f64)], y: &[f64]) -> Vec<f64> {
        cqr_scores(intervals, y).into_iter().map(|s| self.config.transform(s)).collect()
    }

    pub fn contains(&self, intervals: &[(f64, f64)], y: &[f64]) -> bool {
        self.scores(intervals, y).iter().zip(&self.thresholds).all(|(s, t)| s < t)
    }
}

pub fn copula_loss(coverage: f64, alpha: f64) -> f64 {
    (coverage - (1.0 - alpha)).abs()
}

/// Mean rectangle volume, compared first by the number of unbounded sides.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Volume {
    unbounded: usize,
    mean: f64,
}

impl Volume {
    fn less_than(&self, other: &Volume) -> bool {
        match self.unbounded.cmp(&other.unbounded) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.mean < other.mean,
        }
    }
}

/// Search state over per-output grid indices; index `n1` means `+inf`.
struct Search<'a> {
    grids: Vec<Vec<f64>>,
    cal2_scores: &'a [Vec<f64>],
    cal2_widths: &'a [Vec<f64>],
    config: CopulaConfig,
    need: usize,
}

impl Search<'_> {
    fn n1(&self) -> usize {
        self.grids[0].len()
    }

    fn threshold(&self, i: usize, index: usize) -> f64 {
        self.grids[i].get(index).copied().unwrap_or(f64::INFINITY)
    }

    fn covered(&self, idx: &[usize]) -> usize {
        let t: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| self.threshold(i, j)).collect();
        self.cal2_scores.iter().filter(|s| s.iter().zip(&t).all(|(a, b)| a < b)).count()
    }

    fn feasible(&self, idx: &[usize]) -> bool {
        self.covered(idx) >= self.need
    }

    fn volume(&self, idx: &[usize]) -> Volume {
        let margins: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| self.config.margin(self.threshold(i, j))).collect();
        let unbounded = margins.iter().filter(|m| m.is_infinite()).count();
        let total: f64 = self
            .cal2_widths
            .iter()
            .map(|w| {
                w.iter()
                    .zip(&margins)
                    .filter(|(_, m)| m.is_finite())
                    .map(|(w, m)| (w + 2.0 * m).max(0.0))
                    .product::<f64>()
            })
            .sum();
        Volume { unbounded, mean: total / self.cal2_widths.len() as f64 }
    }

    /// Smallest common index reaching the coverage target.
    fn symmetric_start(&self) -> Vec<usize> {
        let d = self.grids.len();
        let (mut lo, mut hi) = (0, self.n1());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.feasible(&vec![mid; d]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        vec![lo; d]
    }

    /// Least index for output `j` (at or above `from`) that restores coverage.
    fn least_feasible(&self, idx: &[usize], j: usize, from: usize) -> Option<usize> {
        let mut probe = idx.to_vec();
        probe[j] = self.n1();
        if !self.feasible(&probe) {
            return None;
        }
        let (mut lo, mut hi) = (from, self.n1());
        while lo < hi {
            let mid = (lo + hi) / 2;
            probe[j] = mid;
            if self.feasible(&probe) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }

    fn improve(&self, mut idx: Vec<usize>) -> Vec<usize> {
        let d = idx.len();
        let mut current = self.volume(&idx);
        loop {
            let mut best: Option<(Vec<usize>, Volume)> = None;
            let consider = |candidate: Vec<usize>, best: &mut Option<(Vec<usize>, Volume)>| {
                let v = self.volume(&candidate);
                if v.less_than(&current) && best.as_ref().is_none_or(|(_, b)| v.less_than(b)) {
                    *best = Some((candidate, v));
                }
            };
            for i in 0..d {
                if idx[i] == 0 {
                    continue;
                }
                let mut candidate = idx.clone();
                candidate[i] -= 1;
                if self.feasible(&candidate) {
                    consider(candidate, &mut best);
                }
            }
            if best.is_none() && d > 1 {
                for i in 0..d {
                    if idx[i] == 0 {
                        continue;
                    }
                    for j in 0..d {
                        if j == i {
                            continue;
                        }
                        let mut candidate = idx.clone();
                        candidate[i] -= 1;
                        if let Some(k) = self.least_feasible(&candidate, j, idx[j] + 1) {
                            candidate[j] = k;
                            consider(candidate, &mut best);
                        }
                    }
                }
            }
            match best {
                Some((next, v)) => {
                    idx = next;
                    current = v;
                }
                None => return idx,
            }
        }
    }
}

/// Chooses per-output thresholds from transformed scores.
///
/// `cal1_scores` and `cal2_scores` hold one `d`-vector of transformed scores
/// per point; `cal2_widths` the matching `ûᵢ − l̂ᵢ`. Returns the grid indices
/// of the optimum together with the thresholds.
pub(crate) fn optimize_thresholds(
    cal1_scores: &[Vec<f64>],
    cal2_scores: &[Vec<f64>],
    cal2_widths: &[Vec<f64>],
    alpha: f64,
    config: CopulaConfig,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let d = cal1_scores.first().map_or(0, Vec::len);
    if d == 0 || cal2_scores.is_empty() {
        return Err(Error::InvalidConfig("CopulaCPTS needs nonempty cal-1 and cal-2 parts".into()));
    }
    let grids: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut g: Vec<f64> = cal1_scores.iter().map(|s| s[i]).collect();
            g.sort_by(f64::total_cmp);
            g
        })
        .collect();
    let n2 = cal2_scores.len();
    let need = (0..=n2).find(|&c| c as f64 / n2 as f64 >= 1.0 - alpha).unwrap_or(n2);
    let search = Search { grids, cal2_scores, cal2_widths, config, need };
    let idx = search.improve(search.symmetric_start());
    let thresholds = idx.iter().enumerate().map(|(i, &j)| search.threshold(i, j)).collect();
    Ok((idx, thresholds))
}

/// Calibrates CopulaCPTS on `cal`, preparing point `j` with `stream.child(j)`.
pub fn calibrate_copula_cpts(
    model: &dyn ConditionalModel,
    cal: &Dataset,
    alpha: f64,
    config: CopulaConfig,
    stream: &RngStream,
) -> Result<CopulaCalibration> {
    check_alpha(alpha)?;
    config.validate()?;
    let n = cal.len();
    let n1 = (n as f64 * config.split).floor() as usize;
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidConfig(format!(
            "calibration set of {n} points is too small to split at {}",
            config.split
        )));
    }
    let mcp = MCp::new(alpha)?;
    let per_point: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let intervals = mcp.intervals(model, cal.x_row(j), &stream.child(j as u64))?;
            let scores = cqr_scores(&intervals, cal.y_row(j)).into_iter().map(|s| config.transform(s)).collect();
            let widths = intervals.iter().map(|(lo, hi)| hi - lo).collect();
            Ok((scores, widths))
        })
        .collect::<Result<_>>()?;
    if per_point.iter().any(|(s, w)| s.iter().chain(w).any(|v| !v.is_finite())) {
        return Err(Error::Numerical("non-finite CQR score during CopulaCPTS calibration".into()));
    }
    let (cal1, cal2) = per_point.split_at(n1);
    let cal1_scores: Vec<Vec<f64>> = cal1.iter().map(|(s, _)| s.clone()).collect();
    let cal2_scores: Vec<Vec<f64>> = cal2.iter().map(|(s, _)| s.clone()).collect();
    let cal2_widths: Vec<Vec<f64>> = cal2.iter().map(|(_, w)| w.clone()).collect();
    let (idx, thresholds) = optimize_thresholds(&cal1_scores, &cal2_scores, &cal2_widths, alpha, config)?;
    let covered = cal2_scores.iter().filter(|s| s.iter().zip(&thresholds).all(|(a, t)| a < t)).count();
    let cal2_coverage = covered as f64 / cal2_scores.len() as f64;
    Ok(CopulaCalibration {
        alpha,
        config,
        quantile_levels: (mcp.lower_level, mcp.upper_level),
        levels: idx.iter().map(|&j| j as f64 / n1 as f64).collect(),
        thresholds,
        cal1_size: n1,
        cal2_size: n - n1,
        cal2_coverage,
        loss: copula_loss(cal2_coverage, alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConditionalGaussian;
    use ndarray::Array2;
    use rand::Rng;

    fn random_scores(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed).rng();
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
    }

    fn coverage(scores: &[Vec<f64>], t: &[f64]) -> f64 {
        scores.iter().filter(|s| s.iter().zip(t).all(|(a, b)| a < b)).count() as f64 / scores.len() as f64
    }

    #[test]
    fn loss_when_everything_is_covered() {
        assert!((copula_loss(1.0, 0.2) - 0.2).abs() < 1e-15);
        assert_eq!(copula_loss(0.8, 0.2), 0.0);
    }

    #[test]
    fn achieved_coverage_meets_target() {
        for seed in 0..20 {
            let cal1 = random_scores(60, 3, seed);
            let cal2 = random_scores(57, 3, seed + 100);
            let widths = vec![vec![1.0, 2.0, 0.5]; 57];
            for alpha in [0.05, 0.2, 0.5] {
                let (_, t) = optimize_thresholds(&cal1, &cal2, &widths, alpha, CopulaConfig::default()).unwrap();
                assert!(coverage(&cal2, &t) >= 1.0 - alpha, "seed {seed} alpha {alpha}");
            }
        }
    }

    #[test]
    fn search_never_increases_volume_over_symmetric_start() {
        let cal1 = random_scores(80, 2, 1);
        let cal2 = random_scores(80, 2, 2);
        let widths: Vec<Vec<f64>> = (0..80).map(|j| vec![1.0 + j as f64 / 80.0, 3.0]).collect();
        let grids: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                let mut g: Vec<f64> = cal1.iter().map(|s| s[i]).collect();
                g.sort_by(f64::total_cmp);
                g
            })
            .collect();
        let need = 64;
        let search = Search { grids, cal2_scores: &cal2, cal2_widths: &widths, config: CopulaConfig::default(), need };
        let start = search.symmetric_start();
        assert_eq!(start[0], start[1]);
        let end = search.improve(start.clone());
        assert!(search.feasible(&end));
        assert!(!search.volume(&start).less_than(&search.volume(&end)));
        // The symmetric start is minimal among common indices.
        if start[0] > 0 {
            assert!(!search.feasible(&[start[0] - 1, start[0] - 1]));
        }
    }

    #[test]
    fn identical_outputs_keep_the_symmetric_solution() {
        // With one output duplicated, any common level already covers the
        // same points in both, so no trade can help.
        let base = random_scores(40, 1, 3);
        let cal1: Vec<Vec<f64>> = base.iter().map(|s| vec![s[0], s[0]]).collect();
        let other = random_scores(40, 1, 4);
        let cal2: Vec<Vec<f64>> = other.iter().map(|s| vec![s[0], s[0]]).collect();
        let widths = vec![vec![1.0, 1.0]; 40];
        let (idx, _) = optimize_thresholds(&cal1, &cal2, &widths, 0.2, CopulaConfig::default()).unwrap();
        assert_eq!(idx[0], idx[1]);
    }

    #[test]
    fn affine_score_transform_gives_the_same_region() {
        let cal1 = random_scores(70, 2, 5);
        let cal2 = random_scores(70, 2, 6);
        let widths: Vec<Vec<f64>> = (0..70).map(|j| vec![1.0 + (j % 7) as f64 / 7.0, 0.5]).collect();
        let plain = optimize_thresholds(&cal1, &cal2, &widths, 0.2, CopulaConfig::default()).unwrap();
        let cfg = CopulaConfig { score_scale: 2.0, score_shift: 1.0, ..CopulaConfig::default() };
        let map = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|s| s.iter().map(|x| 2.0 * x + 1.0).collect()).collect() };
        let moved = optimize_thresholds(&map(&cal1), &map(&cal2), &widths, 0.2, cfg).unwrap();
        assert_eq!(plain.0, moved.0);
    }

    #[test]
    fn calibration_on_gaussian_model() {
        let m = ConditionalGaussian::standard(1, 2);
        let mut rng = RngStream::new(7).rng();
        let n = 400;
        let x = Array2::zeros((n, 1));
        let y = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let cal = Dataset::new(x, y).unwrap();
        let c = calibrate_copula_cpts(&m, &cal, 0.2, CopulaConfig::default(), &RngStream::new(1)).unwrap();
        assert_eq!((c.cal1_size, c.cal2_size), (200, 200));
        assert!(c.cal2_coverage >= 0.8);
        assert!((c.loss - (c.cal2_coverage - 0.8).abs()).abs() < 1e-15);
        let tiny = cal.select(&[0]).unwrap();
        assert!(calibrate_copula_cpts(&m, &tiny, 0.2, CopulaConfig::default(), &RngStream::new(1)).is_err());
    }
}
