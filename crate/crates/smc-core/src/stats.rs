//! Summary statistics and goodness-of-fit tests used by diagnostics and tests.

use alloc::vec::Vec;

use crate::special::chi2_sf;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_error(x: &[f64]) -> f64 {
    libm::sqrt(variance(x) / x.len() as f64)
}

/// Standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    assert!(b >= 1, "fewer samples than batches");
    let means: Vec<f64> = (0..batches).map(|k| mean(&x[k * b..(k + 1) * b])).collect();
    libm::sqrt(variance(&means) / batches as f64)
}

pub fn lag1_autocorr(x: &[f64]) -> f64 {
    let m = mean(x);
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(mean - truth) / se`.
pub fn z_score(x: &[f64], truth: f64) -> f64 {
    (mean(x) - truth) / std_error(x)
}

/// Asymptotic Kolmogorov tail probability `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = libm::exp(-2.0 * kf * kf * lambda * lambda);
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test: `(D, p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = libm::sqrt(ne);
    (d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d))
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = a.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (k, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    let sq = libm::sqrt(n);
    (d, kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d))
}

/// Pearson chi-squared goodness of fit: `(statistic, p-value)`.
pub fn chi2_test(observed: &[u64], expected_prob: &[f64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (o, p) in observed.iter().zip(expected_prob) {
        let e = *p * total as f64;
        if e > 0.0 {
            stat += (*o as f64 - e) * (*o as f64 - e) / e;
            dof += 1;
        }
    }
    (stat, chi2_sf(stat, (dof - 1) as f64))
}
