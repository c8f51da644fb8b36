//! The split-conformal threshold.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Threshold computed from calibration scores at miscoverage level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    /// `⌈(n_cal + 1)(1 − alpha)⌉`.
    pub k_alpha: usize,
    /// The `k_alpha`-th smallest of the scores augmented with `+∞`.
    pub q_hat: f64,
    pub sorted_scores: Vec<f64>,
}

impl CalibrationResult {
    pub fn n_cal(&self) -> usize {
        self.sorted_scores.len()
    }

    /// Expected marginal coverage `k_alpha / (n_cal + 1)` for tie-free scores.
    pub fn nominal_coverage(&self) -> f64 {
        self.k_alpha as f64 / (self.n_cal() + 1) as f64
    }

    pub fn contains(&self, score: f64) -> bool {
        region_contains(score, self.q_hat)
    }
}

/// `⌈(n + 1)(1 − alpha)⌉`, robust to representation error in `1 − alpha`.
pub fn k_alpha(n_cal: usize, alpha: f64) -> usize {
    let raw = (n_cal + 1) as f64 * (1.0 - alpha);
    ((raw - raw * 1e-12).ceil() as usize).max(1)
}

pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite calibration score {bad}")));
    }
    let mut sorted_scores = scores.to_vec();
    sorted_scores.sort_by(f64::total_cmp);
    let k = k_alpha(sorted_scores.len(), alpha);
    let q_hat = if k <= sorted_scores.len() { sorted_scores[k - 1] } else { f64::INFINITY };
    Ok(CalibrationResult { alpha, k_alpha: k, q_hat, sorted_scores })
}

/// Membership rule of a split-conformal region: inclusive at the threshold.
pub fn region_contains(score: f64, q_hat: f64) -> bool {
    score <= q_hat
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nine_scores_at_alpha_point_two() {
        let scores: Vec<f64> = (1..=9).map(f64::from).collect();
        let r = conformal_quantile(&scores, 0.2).unwrap();
        assert_eq!(r.k_alpha, 8);
        assert_eq!(r.q_hat, 8.0);
    }

    #[test]
    fn ties_return_the_common_value() {
        for &alpha in &[0.05, 0.2, 0.5, 0.9] {
            assert_eq!(conformal_quantile(&[1.5; 20], alpha).unwrap().q_hat, 1.5);
        }
    }

    #[test]
    fn empty_scores_give_infinite_threshold() {
        let r = conformal_quantile(&[], 0.2).unwrap();
        assert_eq!(r.k_alpha, 1);
        assert_eq!(r.q_hat, f64::INFINITY);
    }

    #[test]
    fn small_alpha_can_exceed_the_sample() {
        let r = conformal_quantile(&[1.0, 2.0, 3.0], 0.1).unwrap();
        assert_eq!(r.k_alpha, 4);
        assert!(r.q_hat.is_infinite());
    }

    #[test]
    fn k_alpha_exact_products() {
        assert_eq!(k_alpha(199, 0.2), 160);
        assert_eq!(k_alpha(9, 0.2), 8);
        assert_eq!(k_alpha(99, 0.1), 90);
        assert_eq!(k_alpha(100, 0.1), 91);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(conformal_quantile(&[1.0, f64::NAN], 0.2), Err(Error::InvalidData(_))));
        assert!(matches!(conformal_quantile(&[1.0, f64::INFINITY], 0.2), Err(Error::InvalidData(_))));
        assert!(conformal_quantile(&[1.0], 0.0).is_err());
        assert!(conformal_quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn membership_is_inclusive() {
        assert!(region_contains(0.5, 0.5));
        assert!(!region_contains(0.5001, 0.5));
        assert!(region_contains(1e9, f64::INFINITY));
    }

    proptest! {
        #[test]
        fn quantile_is_monotone_in_alpha(
            scores in proptest::collection::vec(-50.0f64..50.0, 0..80),
            a in 0.01f64..0.99,
            b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let q_lo = conformal_quantile(&scores, lo).unwrap().q_hat;
            let q_hi = conformal_quantile(&scores, hi).unwrap().q_hat;
            prop_assert!(q_lo >= q_hi);
        }

        #[test]
        fn threshold_is_an_order_statistic(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..80),
            alpha in 0.01f64..0.99,
        ) {
            let r = conformal_quantile(&scores, alpha).unwrap();
            let below = scores.iter().filter(|&&s| s <= r.q_hat).count();
            prop_assert!(below >= r.k_alpha.min(scores.len()));
            if r.q_hat.is_finite() {
                prop_assert!(scores.contains(&r.q_hat));
                let strictly_below = scores.iter().filter(|&&s| s < r.q_hat).count();
                prop_assert!(strictly_below < r.k_alpha);
            }
        }
    }
}
