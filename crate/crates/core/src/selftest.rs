//! Acceptance checks, runnable from the CLI and from the test suite.
//!
//! Each check returns a [`CriterionOutcome`]; a check that cannot be carried
//! out at all returns an error instead.

use crate::calibration::conformal_quantile;
use crate::data::Dataset;
use crate::datagen::{ball_scenario, coverage_beta_harness, BetaHarness, CoverageLaw, ToyProcess};
use crate::error::{Error, Result};
use crate::metrics::{cec_x, cluster_count, estimate_region_size, kmeans_pp, marginal_coverage, CecConfig};
use crate::models::{fit_conditional_gaussian, ConditionalGaussian, ConditionalModel, ToyOracle};
use crate::rng::{phase, RngStream};
use crate::scores::{
    calibrate, calibration_scores, CalibratedMethod, ConformityScore, Ecdf, MCp, MaxKernelDensity, MethodConfig,
    MethodId, MonteCarloParams, Pcp,
};
use crate::stats::{cd_summary, friedman_test, holm_correction, ks_test_uniform, wilcoxon_signed_rank, RankMatrix};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use std::fmt;

const ALPHA: f64 = 0.2;

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.title, self.detail)
    }
}

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "beta coverage law"),
    (2, "cdf score uniformity"),
    (3, "max-kernel equivalences"),
    (4, "monotone transform invariance"),
    (5, "volume estimator"),
    (6, "conditional coverage ordering"),
    (7, "geometry contracts"),
    (8, "statistics"),
    (9, "copula coverage"),
];

pub fn run_criterion(id: u8) -> Result<CriterionOutcome> {
    match id {
        1 => beta_coverage(),
        2 => cdf_uniformity(),
        3 => max_kernel_equivalence(),
        4 => transform_invariance(),
        5 => volume_estimator(),
        6 => conditional_coverage_ordering(),
        7 => geometry_contracts(),
        8 => statistics(),
        9 => copula_coverage(),
        _ => Err(Error::InvalidConfig(format!("no acceptance criterion {id}; valid ids are 1 to 9"))),
    }
}

fn outcome(id: u8, passed: bool, detail: String) -> CriterionOutcome {
    let title = CRITERIA[id as usize - 1].1;
    CriterionOutcome { id, title, passed, detail }
}

fn oracle() -> ToyOracle {
    ToyOracle::new(ToyProcess::Unimodal)
}

fn unimodal(n: usize, stream: &RngStream) -> Result<Dataset> {
    ToyProcess::Unimodal.generate(n, stream, true)
}

/// Mean and unbiased variance.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Oracle unimodal model, 199 calibration points, 500 replications of 2000
/// test points: mean coverage within 0.8 ± 0.006 and replication variance
/// within a factor 2 of the Beta(160, 40) variance.
pub fn beta_coverage() -> Result<CriterionOutcome> {
    let model = oracle();
    let law = CoverageLaw::new(199, ALPHA);
    let mut passed = true;
    let mut parts = Vec::new();
    for method in [MethodId::DrCp, MethodId::LCp, MethodId::Pcp] {
        let method_config =
            MethodConfig { monte_carlo: MonteCarloParams::new(20, 100)?, ..MethodConfig::default() };
        let harness = BetaHarness {
            process: ToyProcess::Unimodal,
            n_cal: 199,
            n_test: 2000,
            alpha: ALPHA,
            replications: 500,
            method,
            method_config,
        };
        let coverages = coverage_beta_harness(&harness, &model, &RngStream::new(101))?;
        let (mean, var) = mean_var(&coverages);
        let ratio = var / law.variance();
        let ok = (mean - 0.8).abs() <= 0.006 && (0.5..=2.0).contains(&ratio);
        passed &= ok;
        parts.push(format!("{method} mean={mean:.4} var={var:.3e} (x{ratio:.2})"));
    }
    Ok(outcome(1, passed, format!("Beta var {:.3e}; {}", law.variance(), parts.join(", "))))
}

/// Calibration points per seed for the uniformity check.
pub const UNIFORMITY_POINTS: usize = 100;

/// c_hdr and c_pcp with K = 10⁴ reference draws on the oracle: the KS test
/// against U(0, 1) passes at 1% in at least 95 of 100 seeds.
pub fn cdf_uniformity() -> Result<CriterionOutcome> {
    let model = oracle();
    let config = MethodConfig { monte_carlo: MonteCarloParams::new(100, 10_000)?, ..MethodConfig::default() };
    let mut passed = true;
    let mut parts = Vec::new();
    for method in [MethodId::CHdr, MethodId::CPcp] {
        let score = method.score(ALPHA, &config)?.expect("split-conformal method");
        let mut passes = 0;
        for seed in 0..100u64 {
            let stream = RngStream::new(seed).child(phase::PROBE);
            let data = unimodal(UNIFORMITY_POINTS, &stream.child(phase::DATA))?;
            let scores = calibration_scores(score.as_ref(), &model, &data, &stream.child(phase::CALIBRATION))?;
            if ks_test_uniform(&scores)?.p_value >= 0.01 {
                passes += 1;
            }
        }
        passed &= passes >= 95;
        parts.push(format!("{method} {passes}/100"));
    }
    Ok(outcome(2, passed, parts.join(", ")))
}

/// Memberships of two scores calibrated and evaluated on the same streams.
fn paired_memberships(
    a: &dyn ConformityScore,
    b: &dyn ConformityScore,
    model: &dyn ConditionalModel,
    cal: &Dataset,
    probes: &Dataset,
    stream: &RngStream,
) -> Result<usize> {
    let cal_stream = stream.child(phase::CALIBRATION);
    let qa = conformal_quantile(&calibration_scores(a, model, cal, &cal_stream)?, ALPHA)?.q_hat;
    let qb = conformal_quantile(&calibration_scores(b, model, cal, &cal_stream)?, ALPHA)?.q_hat;
    let test = stream.child(phase::TEST);
    let mismatches = (0..probes.len())
        .into_par_iter()
        .map(|j| {
            let (x, y) = (probes.x_row(j), probes.y_row(j));
            let s = test.child(j as u64);
            let in_a = a.score(model, x, &a.prepare(model, x, &s)?, y)? <= qa;
            let in_b = b.score(model, x, &b.prepare(model, x, &s)?, y)? <= qb;
            Ok(usize::from(in_a != in_b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mismatches.into_iter().sum())
}

/// PCP against DR-CP on the max-kernel density, and C-PCP against C-HDR on
/// the same density, with shared sample streams: identical decisions on
/// 1000 probes.
pub fn max_kernel_equivalence() -> Result<CriterionOutcome> {
    let model = oracle();
    let params = MonteCarloParams::default();
    let stream = RngStream::new(303);
    let cal = unimodal(500, &stream.child(phase::DATA).child(0))?;
    let probes = unimodal(1000, &stream.child(phase::DATA).child(1))?;
    let plain = paired_memberships(&Pcp::new(params), &MaxKernelDensity::new(params), &model, &cal, &probes, &stream)?;
    let wrapped = paired_memberships(
        &Ecdf::new(Pcp::new(params), params.cdf_samples)?,
        &Ecdf::new(MaxKernelDensity::new(params), params.cdf_samples)?,
        &model,
        &cal,
        &probes,
        &stream,
    )?;
    Ok(outcome(
        3,
        plain == 0 && wrapped == 0,
        format!("pcp vs dr_cp(max kernel): {plain} mismatches; c_pcp vs c_hdr(max kernel): {wrapped} mismatches"),
    ))
}

fn memberships_of(
    id: MethodId,
    config: &MethodConfig,
    model: &dyn ConditionalModel,
    cal: &Dataset,
    probes: &Dataset,
    stream: &RngStream,
) -> Result<Vec<bool>> {
    let method = calibrate(id, config, model, cal, ALPHA, &stream.child(phase::CALIBRATION))?;
    method.memberships(model, probes, &stream.child(phase::TEST))
}

/// Replacing every score `s` by `2s + 1` leaves all decisions unchanged on
/// 1000 probes, for every method.
pub fn transform_invariance() -> Result<CriterionOutcome> {
    let model = oracle();
    let stream = RngStream::new(404);
    let cal = unimodal(500, &stream.child(phase::DATA).child(0))?;
    let probes = unimodal(1000, &stream.child(phase::DATA).child(1))?;
    let base = MethodConfig::default();
    let shifted = base.with_transform(2.0, 1.0);
    let mut total = 0;
    let mut parts = Vec::new();
    for id in MethodId::ALL {
        let a = memberships_of(id, &base, &model, &cal, &probes, &stream)?;
        let b = memberships_of(id, &shifted, &model, &cal, &probes, &stream)?;
        let mismatches = a.iter().zip(&b).filter(|(p, q)| p != q).count();
        total += mismatches;
        if mismatches > 0 {
            parts.push(format!("{id}: {mismatches}"));
        }
    }
    let detail = if parts.is_empty() {
        format!("{} methods, 0 mismatches", MethodId::ALL.len())
    } else {
        format!("mismatches {}", parts.join(", "))
    };
    Ok(outcome(4, total == 0, detail))
}

/// Importance-sampling volume of the 80% ball under N(0, I_d) with 10⁴
/// draws: log error at most 0.15 in at least 9 of 10 seeds, for each d.
pub fn volume_estimator() -> Result<CriterionOutcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for d in [1usize, 2, 4, 8] {
        let ball = ball_scenario(d, ALPHA)?;
        let model = ConditionalGaussian::standard(1, d);
        let mut hits = 0;
        let mut worst: f64 = 0.0;
        for seed in 0..10u64 {
            let stream = RngStream::new(seed).child(phase::VOLUME).child(d as u64);
            let v = estimate_region_size(&model, &[0.0], 10_000, &stream, |ys| {
                Ok(ys.rows().into_iter().map(|y| ball.contains(&y.to_vec())).collect())
            })?;
            let err = (v.ln() - ball.log_volume).abs();
            worst = worst.max(err);
            if err <= 0.15 {
                hits += 1;
            }
        }
        passed &= hits >= 9;
        parts.push(format!("d={d} {hits}/10 (max err {worst:.3})"));
    }
    Ok(outcome(5, passed, parts.join(", ")))
}

/// Averages CEC-X over 10 seeds on the unimodal toy with the oracle and
/// 5000 test points; expects c_hdr and l_cp below dr_cp, c_pcp below pcp.
pub fn conditional_coverage_ordering() -> Result<CriterionOutcome> {
    let model = oracle();
    let methods = [MethodId::DrCp, MethodId::CHdr, MethodId::LCp, MethodId::Pcp, MethodId::CPcp];
    let config = MethodConfig::default();
    let cec = CecConfig::default();
    let mut sums = [0.0; 5];
    let seeds = 10;
    for seed in 0..seeds {
        let stream = RngStream::new(600 + seed);
        let data = stream.child(phase::DATA);
        let cal = unimodal(2048, &data.child(0))?;
        let test = unimodal(5000, &data.child(1))?;
        let val = unimodal(2000, &data.child(2))?;
        let clusters = cluster_count(cec.clusters, test.len(), val.len());
        let partition =
            kmeans_pp(val.x.view(), clusters, &mut stream.child(phase::CLUSTERING).rng(), cec.max_iter)?;
        for (k, &id) in methods.iter().enumerate() {
            let covered = memberships_of(id, &config, &model, &cal, &test, &stream)?;
            sums[k] += cec_x(test.x.view(), &covered, &partition, ALPHA)?;
        }
    }
    let m: Vec<f64> = sums.iter().map(|s| s / seeds as f64).collect();
    let passed = m[1] < m[0] && m[2] < m[0] && m[4] < m[3];
    let detail = methods.iter().zip(&m).map(|(id, v)| format!("{id}={v:.3e}")).collect::<Vec<_>>().join(", ");
    Ok(outcome(6, passed, detail))
}

/// Random probes with `x` from the toy process and `y` uniform on a box.
fn box_probes(n: usize, half_width: f64, stream: &RngStream) -> Result<Dataset> {
    let data = unimodal(n, &stream.child(0))?;
    let mut rng = stream.child(1).rng();
    let y = Array2::from_shape_fn(data.y.dim(), |_| rng.random_range(-half_width..half_width));
    Dataset::new(data.x, y)
}

fn geometry_mismatches<F>(
    method: &CalibratedMethod,
    model: &dyn ConditionalModel,
    probes: &Dataset,
    stream: &RngStream,
    rule: F,
) -> Result<(usize, usize)>
where
    F: Fn(&crate::scores::PointState, &[f64], &[f64]) -> Result<bool> + Sync,
{
    let counts = (0..probes.len())
        .into_par_iter()
        .map(|j| {
            let (x, y) = (probes.x_row(j), probes.y_row(j));
            let region = method.region(model, x, &stream.child(j as u64))?;
            let expected = rule(region.state(), x, y)?;
            Ok((usize::from(region.contains(y)? != expected), usize::from(expected)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.into_iter().fold((0, 0), |(m, i), (a, b)| (m + a, i + b)))
}

/// M-CP is a hyperrectangle, L-CP with the conditional Gaussian an
/// ellipsoid and PCP a union of balls: exact agreement on 10⁴ probes each.
pub fn geometry_contracts() -> Result<CriterionOutcome> {
    let stream = RngStream::new(707);
    let data = stream.child(phase::DATA);
    let cal = unimodal(1000, &data.child(0))?;
    let probes = box_probes(10_000, 3.0, &data.child(1))?;
    let config = MethodConfig::default();
    let cal_stream = stream.child(phase::CALIBRATION);
    let test_stream = stream.child(phase::TEST);
    let oracle = oracle();

    let mcp = calibrate(MethodId::MCp, &config, &oracle, &cal, ALPHA, &cal_stream)?;
    let q = mcp.q_hat().unwrap_or(f64::INFINITY);
    let rect = geometry_mismatches(&mcp, &oracle, &probes, &test_stream, |state, _, y| {
        let intervals = state.intervals()?;
        Ok(intervals.iter().zip(y).all(|((lo, hi), v)| lo - q <= *v && *v <= hi + q))
    })?;

    let gaussian = fit_conditional_gaussian(&unimodal(2000, &data.child(2))?)?;
    let lcp = calibrate(MethodId::LCp, &config, &gaussian, &cal, ALPHA, &cal_stream)?;
    let q = lcp.q_hat().unwrap_or(f64::INFINITY);
    let d = gaussian.output_dim();
    let sigma = nalgebra::DMatrix::from_row_slice(d, d, &gaussian.covariance());
    let sigma_inv = sigma.try_inverse().ok_or_else(|| Error::InvalidModel("singular covariance".into()))?;
    let ellipse = geometry_mismatches(&lcp, &gaussian, &probes, &test_stream, |_, x, y| {
        let mu = gaussian.mean(x);
        let r = nalgebra::DVector::from_iterator(d, y.iter().zip(&mu).map(|(a, b)| a - b));
        Ok((r.transpose() * &sigma_inv * &r)[(0, 0)] <= q * q)
    })?;

    let pcp = calibrate(MethodId::Pcp, &config, &oracle, &cal, ALPHA, &cal_stream)?;
    let q = pcp.q_hat().unwrap_or(f64::INFINITY);
    let balls = geometry_mismatches(&pcp, &oracle, &probes, &test_stream, |state, _, y| {
        let samples = state.samples()?;
        Ok(samples.rows().into_iter().any(|c| c.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= q))
    })?;

    let show = |(m, inside): (usize, usize)| format!("{m} mismatches ({inside} inside)");
    Ok(outcome(
        7,
        rect.0 + ellipse.0 + balls.0 == 0,
        format!("of 10000 probes: rectangle {}, ellipsoid {}, balls {}", show(rect), show(ellipse), show(balls)),
    ))
}

/// Exact Wilcoxon p for five positive differences, the Friedman statistic
/// of a fixed 3-method ordering over 10 datasets, and Holm on {0.01, 0.04}.
pub fn statistics() -> Result<CriterionOutcome> {
    let w = wilcoxon_signed_rank(&[1.5, 2.0, 3.5, 4.0, 6.0], &[0.0; 5])?;
    let values = Array2::from_shape_fn((10, 3), |(i, j)| (j + 1) as f64 + 0.01 * i as f64);
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let matrix = RankMatrix::new(names("d", 10), names("m", 3), values)?;
    let f = friedman_test(&matrix)?;
    let holm = holm_correction(&[0.01, 0.04], 0.05)?;
    // The summary must agree with the raw test.
    let summary = cd_summary(&matrix, 0.05)?;
    let passed = (w.p_value - 0.0625).abs() < 1e-12
        && w.exact
        && (f.statistic - 20.0).abs() < 1e-9
        && holm.reject == vec![true, true]
        && summary.friedman == f;
    Ok(outcome(
        8,
        passed,
        format!("wilcoxon p={} friedman={} holm={:?}", w.p_value, f.statistic, holm.reject),
    ))
}

/// CopulaCPTS on the oracle: cal-2 coverage at least 0.8 by direct count in
/// every seed, and test coverage averaged over 10 seeds within 0.8 ± 0.03.
pub fn copula_coverage() -> Result<CriterionOutcome> {
    let model = oracle();
    let config = MethodConfig::default();
    let mut all_cal2 = true;
    let mut coverages = Vec::new();
    let mut worst_cal2: f64 = 1.0;
    for seed in 0..10u64 {
        let stream = RngStream::new(900 + seed);
        let data = stream.child(phase::DATA);
        let cal = unimodal(2048, &data.child(0))?;
        let test = unimodal(5000, &data.child(1))?;
        let cal_stream = stream.child(phase::CALIBRATION);
        let method = calibrate(MethodId::CopulaCpts, &config, &model, &cal, ALPHA, &cal_stream)?;
        let copula = method.copula().expect("copula calibration");
        let mcp = MCp::with_levels(copula.quantile_levels.0, copula.quantile_levels.1)?;
        let n1 = copula.cal1_size;
        let mut covered = 0usize;
        for j in n1..cal.len() {
            let intervals = mcp.intervals(&model, cal.x_row(j), &cal_stream.child(j as u64))?;
            if copula.contains(&intervals, cal.y_row(j)) {
                covered += 1;
            }
        }
        let n2 = cal.len() - n1;
        // covered / n2 ≥ 4/5 in integers.
        all_cal2 &= 5 * covered >= 4 * n2;
        worst_cal2 = worst_cal2.min(covered as f64 / n2 as f64);
        coverages.push(marginal_coverage(&method.memberships(&model, &test, &stream.child(phase::TEST))?)?);
    }
    let mean = coverages.iter().sum::<f64>() / coverages.len() as f64;
    let (lo, hi) = coverages.iter().fold((1.0f64, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    Ok(outcome(
        9,
        all_cal2 && (mean - 0.8).abs() <= 0.03,
        format!("min cal-2 coverage {worst_cal2:.4}, test coverage mean {mean:.4} (range {lo:.4} to {hi:.4})"),
    ))
}

/// Runs every criterion; a check that errors counts as a failure.
pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .map(|&(id, title)| {
            run_criterion(id).unwrap_or_else(|e| CriterionOutcome {
                id,
                title,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}
