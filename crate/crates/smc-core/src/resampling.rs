//! Ancestor selection, effective sample size and the adaptive-resampling rule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Result, SmcError};
use crate::rng::{tag, Address, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResamplingScheme {
    Multinomial,
    Stratified,
    Systematic,
}

impl ResamplingScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "multinomial" => Some(Self::Multinomial),
            "stratified" => Some(Self::Stratified),
            "systematic" => Some(Self::Systematic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Multinomial => "multinomial",
            Self::Stratified => "stratified",
            Self::Systematic => "systematic",
        }
    }
}

/// Resample when the ESS of the previous weights drops below `threshold`.
/// A threshold of zero never resamples; a threshold of at least N always does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptivePolicy {
    pub threshold: f64,
}

impl AdaptivePolicy {
    pub fn never() -> Self {
        AdaptivePolicy { threshold: 0.0 }
    }
    pub fn always() -> Self {
        AdaptivePolicy { threshold: f64::INFINITY }
    }
    /// Threshold as a fraction of N.
    pub fn fraction(f: f64, n: usize) -> Self {
        AdaptivePolicy { threshold: f * n as f64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Resample,
    Skip,
}

pub fn ess(wbar: &[f64]) -> f64 {
    1.0 / wbar.iter().map(|w| w * w).sum::<f64>()
}

pub fn adaptive_decision(ess_value: f64, n: usize, policy: AdaptivePolicy) -> Decision {
    if policy.threshold >= n as f64 || ess_value < policy.threshold {
        Decision::Resample
    } else {
        Decision::Skip
    }
}

/// Per-particle log multiplier `log(N W̄_i)` carried on skipped steps.
pub fn skip_correction(prev_wbar: &[f64]) -> Vec<f64> {
    let n = prev_wbar.len() as f64;
    prev_wbar.iter().map(|w| libm::log(n * w)).collect()
}

/// Cumulative sums with the last entry forced to 1.
pub fn cumulative(wbar: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = wbar.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SmcError::DegenerateWeights { step: 0 });
    }
    let mut c = Vec::with_capacity(wbar.len());
    let mut s = 0.0;
    for w in wbar {
        s += w / total;
        c.push(s);
    }
    *c.last_mut().unwrap() = 1.0;
    Ok(c)
}

/// Smallest index `a` with `u < cum[a]`.
#[inline]
pub fn search(cum: &[f64], u: f64) -> usize {
    let idx = cum.partition_point(|&c| c <= u);
    idx.min(cum.len() - 1)
}

/// Inverse-CDF selection for sorted points `u_0 <= u_1 <= ...` in one pass.
fn select_sorted(cum: &[f64], points: impl Iterator<Item = f64>, out: &mut [usize]) {
    let mut j = 0;
    for (slot, u) in out.iter_mut().zip(points) {
        while j + 1 < cum.len() && cum[j] <= u {
            j += 1;
        }
        *slot = j;
    }
}

pub fn multinomial(wbar: &[f64], mut uniform: impl FnMut(usize) -> f64, out: &mut [usize]) -> Result<()> {
    let cum = cumulative(wbar)?;
    for (i, a) in out.iter_mut().enumerate() {
        *a = search(&cum, uniform(i));
    }
    Ok(())
}

pub fn stratified(wbar: &[f64], mut uniform: impl FnMut(usize) -> f64, out: &mut [usize]) -> Result<()> {
    let cum = cumulative(wbar)?;
    let n = out.len() as f64;
    select_sorted(&cum, (0..out.len()).map(|i| (i as f64 + uniform(i)) / n), out);
    Ok(())
}

pub fn systematic(wbar: &[f64], u: f64, out: &mut [usize]) -> Result<()> {
    let cum = cumulative(wbar)?;
    let n = out.len() as f64;
    select_sorted(&cum, (0..out.len()).map(|i| (i as f64 + u) / n), out);
    Ok(())
}

/// Draws `out.len()` ancestors using uniforms at `(RESAMPLE, t, i, 0)`.
/// Systematic resampling uses the single uniform at `(RESAMPLE, t, 0, 0)`.
pub fn resample(scheme: ResamplingScheme, wbar: &[f64], stream: &SeedStream, t: u32, out: &mut [usize]) -> Result<()> {
    let u = |i: usize| stream.uniform(Address::new(tag::RESAMPLE, t, i as u32, 0));
    match scheme {
        ResamplingScheme::Multinomial => multinomial(wbar, u, out),
        ResamplingScheme::Stratified => stratified(wbar, u, out),
        ResamplingScheme::Systematic => systematic(wbar, u(0), out),
    }
}

/// Resampling conditioned on the ancestor of `slot` being `k`, as needed by
/// conditional SMC. The remaining N−1 ancestors are drawn from the conditional
/// law of the scheme given that one of its N points falls in bin `k`.
pub fn conditional_resample(
    scheme: ResamplingScheme,
    wbar: &[f64],
    k: usize,
    slot: usize,
    stream: &SeedStream,
    t: u32,
    out: &mut [usize],
) -> Result<()> {
    let n = out.len();
    let u = |i: usize, j: u32| stream.uniform(Address::new(tag::RESAMPLE, t, i as u32, j));
    let cum = cumulative(wbar)?;
    match scheme {
        ResamplingScheme::Multinomial => {
            for (i, a) in out.iter_mut().enumerate() {
                *a = if i == slot { k } else { search(&cum, u(i, 0)) };
            }
        }
        ResamplingScheme::Stratified | ResamplingScheme::Systematic => {
            let nf = n as f64;
            let lo = if k == 0 { 0.0 } else { cum[k - 1] * nf };
            let hi = cum[k] * nf;
            let lens: Vec<f64> = (0..n)
                .map(|j| {
                    let a = lo.max(j as f64);
                    let b = hi.min(j as f64 + 1.0);
                    (b - a).max(0.0)
                })
                .collect();
            let total: f64 = lens.iter().sum();
            if !(total > 0.0) {
                return Err(SmcError::InvalidReference);
            }
            let lcum = cumulative(&lens)?;
            let jstar = search(&lcum, stream.uniform(Address::new(tag::RESAMPLE_REF, t, 1, 0)));
            let a = lo.max(jstar as f64);
            let v = a + stream.uniform(Address::new(tag::RESAMPLE_REF, t, 2, 0)) * lens[jstar] - jstar as f64;
            let v = v.clamp(0.0, 1.0 - f64::EPSILON);
            let mut positions = vec![0.0; n];
            for (j, p) in positions.iter_mut().enumerate() {
                *p = if j == jstar || scheme == ResamplingScheme::Systematic {
                    (j as f64 + v) / nf
                } else {
                    (j as f64 + u(j, 0)) / nf
                };
            }
            let mut idx = vec![0usize; n];
            select_sorted(&cum, positions.iter().copied(), &mut idx);
            idx[jstar] = k;
            let mut free = idx.iter().enumerate().filter(|(j, _)| *j != jstar).map(|(_, a)| *a);
            for (i, a) in out.iter_mut().enumerate() {
                *a = if i == slot { k } else { free.next().unwrap() };
            }
        }
    }
    Ok(())
}

/// Offspring counts `#{i : a_i = j}`.
pub fn offspring_counts(ancestors: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0usize; n];
    for &a in ancestors {
        c[a] += 1;
    }
    c
}
