use super::TestResult;
use crate::error::{Error, Result};

/// `sup |F̂ₙ(u) − u|` of a sample against the uniform law on `[0, 1]`.
pub fn ks_statistic_uniform(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidData("KS statistic of an empty sample".into()));
    }
    if let Some(bad) = sample.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidData(format!("value {bad} outside the unit interval")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let above = (i + 1) as f64 / n - u;
        let below = u - i as f64 / n;
        d.max(above).max(below)
    }))
}

/// `P(Dₙ < d)` for the two-sided statistic, by the matrix method of
/// Marsaglia, Tsang and Wang.
pub fn kolmogorov_cdf(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let k = (nf * d).floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..=i.min(m - 1) {
            if i + 1 >= j {
                let mut f = 1.0;
                for g in 1..=(i + 1 - j) {
                    f *= g as f64;
                }
                hm[i * m + j] /= f;
            }
        }
    }
    // H^n with a running power-of-ten exponent to avoid overflow.
    let (q, exp) = matrix_power(&hm, m, n);
    let mut s = q[(k - 1) * m + (k - 1)];
    let mut e = exp;
    for i in 1..=n {
        s *= i as f64 / nf;
        if s < 1e-140 {
            s *= 1e140;
            e -= 140;
        }
    }
    (s * 10f64.powi(e)).clamp(0.0, 1.0)
}

fn matrix_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i * m + l];
            if ail != 0.0 {
                for j in 0..m {
                    c[i * m + j] += ail * b[l * m + j];
                }
            }
        }
    }
    c
}

fn matrix_power(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e) = matrix_power(a, m, n / 2);
    let mut v = matrix_mul(&half, &half, m);
    let mut e = 2 * e;
    if n % 2 == 1 {
        v = matrix_mul(a, &v, m);
    }
    if v[(m / 2) * m + m / 2] > 1e140 {
        v.iter_mut().for_each(|x| *x *= 1e-140);
        e += 140;
    }
    (v, e)
}

/// One-sample two-sided KS test against `U(0, 1)` with the exact null law.
pub fn ks_test_uniform(sample: &[f64]) -> Result<TestResult> {
    let d = ks_statistic_uniform(sample)?;
    let p = 1.0 - kolmogorov_cdf(sample.len(), d);
    Ok(TestResult { statistic: d, p_value: p.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Kolmogorov's limit law with Stephens' finite-sample scaling.
    fn stephens_sf(n: usize, d: f64) -> f64 {
        let sn = (n as f64).sqrt();
        let t = (sn + 0.12 + 0.11 / sn) * d;
        2.0 * (1..200).map(|k| {
            let k = k as f64;
            (if k as u64 % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * k * k * t * t).exp()
        }).sum::<f64>()
    }

    #[test]
    fn single_observation_closed_form() {
        // D₁ = max(U, 1 − U), so P(D₁ < d) = 2d − 1 on [1/2, 1].
        for &d in &[0.55, 0.7, 0.9, 0.99] {
            assert!((kolmogorov_cdf(1, d) - (2.0 * d - 1.0)).abs() < 1e-12, "d={d}");
        }
        assert_eq!(kolmogorov_cdf(1, 0.4), 0.0);
    }

    #[test]
    fn two_observations_by_integration() {
        // Midpoint-rule integral of the indicator over the unit square.
        let d = 0.6;
        let g = 2000;
        let mut inside = 0.0;
        for i in 0..g {
            for j in 0..g {
                let u = (i as f64 + 0.5) / g as f64;
                let v = (j as f64 + 0.5) / g as f64;
                if ks_statistic_uniform(&[u, v]).unwrap() < d {
                    inside += 1.0;
                }
            }
        }
        let grid = inside / (g * g) as f64;
        assert!((kolmogorov_cdf(2, d) - grid).abs() < 2e-3, "{} vs {grid}", kolmogorov_cdf(2, d));
    }

    #[test]
    fn agrees_with_asymptotic_law() {
        for &(n, d) in &[(100, 0.1607), (100, 0.12), (400, 0.05), (50, 0.2)] {
            let exact = 1.0 - kolmogorov_cdf(n, d);
            let approx = stephens_sf(n, d);
            assert!((exact - approx).abs() < 5e-3, "n={n} d={d}: {exact} vs {approx}");
        }
        for &(n, d, p) in &[(100, 0.12, 0.103_303_749), (400, 0.05, 0.261_212_446), (50, 0.2, 0.031_438_778)] {
            assert!((1.0 - kolmogorov_cdf(n, d) - p).abs() < 1e-6, "n={n} d={d}");
        }
        // Tabulated 1% critical value for n = 100.
        assert!((1.0 - kolmogorov_cdf(100, 0.1608) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn statistic_of_a_grid() {
        let d = ks_statistic_uniform(&[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        assert!(ks_statistic_uniform(&[1.5]).is_err());
    }
}
