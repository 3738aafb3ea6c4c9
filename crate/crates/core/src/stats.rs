//! Small Monte Carlo summaries: binomial intervals, order-statistic
//! quantiles and Kolmogorov–Smirnov distances.

/// Wilson score interval for a proportion; `successes` may be fractional
/// (expected decisions of randomized tests).
pub fn wilson(successes: f64, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes <= 0.0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes >= nf { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// `z` for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// An empirical upper-`ε` quantile with a distribution-free interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Half-width of the interval divided by its `z`.
    pub stderr: f64,
}

/// The `⌈(1−ε)M⌉`-th order statistic (1-based) of `sorted`, with the
/// interval spanned by the order statistics `z·sqrt(Mε(1−ε))` ranks away.
pub fn upper_quantile(sorted: &[f64], eps: f64, z: f64) -> QuantileEstimate {
    let m = sorted.len();
    assert!(m > 0, "quantile of an empty sample");
    let mf = m as f64;
    let k = ((1.0 - eps) * mf).ceil().clamp(1.0, mf) as usize;
    let spread = z * (mf * eps * (1.0 - eps)).sqrt();
    let lo = (k as f64 - spread).floor().clamp(1.0, mf) as usize;
    let hi = (k as f64 + spread).ceil().clamp(1.0, mf) as usize;
    let (ci_lo, ci_hi) = (sorted[lo - 1], sorted[hi - 1]);
    QuantileEstimate {
        value: sorted[k - 1],
        ci_lo,
        ci_hi,
        stderr: (ci_hi - ci_lo) / (2.0 * z),
    }
}

/// `(mean, standard error)`.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `sup |F_n − F|` for a sorted sample against a CDF that is continuous
/// except possibly for atoms, supplied as `(F(x), F(x−))`.
pub fn ks_statistic<F: Fn(f64) -> (f64, f64)>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let (f, f_left) = cdf(sorted[i]);
        d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - f_left).abs());
        i = j;
    }
    d
}

/// Asymptotic Kolmogorov p-value of distance `d` at effective size `n`.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov `(distance, p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    (d, ks_pvalue(d, na * nb / (na + nb)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use rand::Rng;

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson(50.0, 1000, Z95);
        assert!(lo < 0.05 && hi > 0.05);
        assert!(hi - lo < 0.03);
        let (lo, hi) = wilson(0.0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn order_statistic_convention() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        // ⌈0.95·100⌉ = 95
        assert_eq!(upper_quantile(&xs, 0.05, 3.0).value, 95.0);
        assert_eq!(upper_quantile(&xs, 0.5, 3.0).value, 50.0);
        let q = upper_quantile(&xs, 0.05, 3.0);
        assert!(q.ci_lo < 95.0 && q.ci_hi > 95.0);
    }

    #[test]
    fn uniform_quantile_interval_covers() {
        let mut rng = substream(1, Purpose::Calibration, 0);
        let mut xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        let q = upper_quantile(&xs, 0.1, 3.0);
        assert!(q.ci_lo <= 0.9 && 0.9 <= q.ci_hi);
        assert!((q.stderr - (0.09f64 / 10_000.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn ks_uniform() {
        let mut rng = substream(2, Purpose::Calibration, 0);
        let mut xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        let d = ks_statistic(&xs, |x| (x, x));
        assert!(ks_pvalue(d, 5000.0) > 1e-3);
        let d_bad = ks_statistic(&xs, |x| (x * x, x * x));
        assert!(ks_pvalue(d_bad, 5000.0) < 1e-6);
        let ys: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_two_sample(&xs, &ys).1 > 1e-3);
        let zs: Vec<f64> = ys.iter().map(|y| y * 0.8).collect();
        assert!(ks_two_sample(&xs, &zs).1 < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_point() {
        // P(K > 1.3581) ≈ 0.05 for the limiting distribution
        let p = ks_pvalue(1.3581 / 1e6f64.sqrt(), 1e6);
        assert!((p - 0.05).abs() < 1e-3, "{p}");
    }
}
