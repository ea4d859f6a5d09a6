use smc_core::empirical::WeightedEmpirical;
use smc_core::logspace::{log_sum_exp, normalize_log_weights, LogValue};
use smc_core::resampling::{
    adaptive_decision, conditional_resample, ess, multinomial, offspring_counts, resample, skip_correction, systematic, AdaptivePolicy,
    Decision, ResamplingScheme,
};
use smc_core::rng::{tag, Address, SeedStream};
use smc_core::{stats, SmcError};

mod common;
use common::{mean, se};

#[test]
fn log_sum_exp_examples() {
    assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
    assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
    assert_eq!(LogValue::from_linear(2.0).add(LogValue::from_linear(3.0)).linear().round(), 5.0);
    assert!((LogValue::from_linear(2.0).mul(LogValue::from_linear(3.0)).linear() - 6.0).abs() < 1e-12);
}

#[test]
fn normalize_examples() {
    let (w, l) = normalize_log_weights(&[0.0, 0.0]).unwrap();
    assert_eq!(w, vec![0.5, 0.5]);
    assert_eq!(l, 0.0);
    let (w, l) = normalize_log_weights(&[3f64.ln(), 0.0]).unwrap();
    assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
    assert!((l - 2f64.ln()).abs() < 1e-15);
    assert!(matches!(normalize_log_weights(&[f64::NEG_INFINITY; 2]), Err(SmcError::DegenerateWeights { .. })));
}

#[test]
fn ess_and_policy() {
    assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
    assert_eq!(ess(&[0.0, 1.0, 0.0]), 1.0);
    assert!((ess(&[0.5, 0.25, 0.25]) - 1.0 / 0.375).abs() < 1e-12);
    let half = AdaptivePolicy::fraction(0.5, 10);
    assert_eq!(adaptive_decision(10.0, 10, half), Decision::Skip);
    assert_eq!(adaptive_decision(1.0, 10, half), Decision::Resample);
    assert_eq!(adaptive_decision(1.0, 10, AdaptivePolicy::never()), Decision::Skip);
    assert_eq!(adaptive_decision(10.0, 10, AdaptivePolicy { threshold: 10.0 }), Decision::Resample);
}

#[test]
fn skip_multipliers() {
    assert!(skip_correction(&[0.25; 4]).iter().all(|v| v.abs() < 1e-15));
    let m = skip_correction(&[0.75, 0.25]);
    assert!((m[0] - 1.5f64.ln()).abs() < 1e-15 && (m[1] - 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn resampling_hand_traces() {
    let mut out = [0usize; 1];
    systematic(&[1.0], 0.3, &mut out).unwrap();
    assert_eq!(out, [0]);
    for u in [0.0001, 0.3, 0.5, 0.9999] {
        let mut a = [0usize; 10];
        systematic(&[0.7, 0.3], u, &mut a).unwrap();
        assert_eq!(offspring_counts(&a, 2), vec![7, 3]);
    }
    let mut a = [9usize; 1];
    multinomial(&[0.5, 0.5], |_| 0.25, &mut a).unwrap();
    assert_eq!(a, [0]);
}

fn counts_for(scheme: ResamplingScheme, w: &[f64], n: usize, reps: u32, seed: u64) -> Vec<Vec<usize>> {
    let s = SeedStream::new(seed);
    let mut out = vec![0usize; n];
    (0..reps)
        .map(|r| {
            resample(scheme, w, &s.fork(tag::REPLICATE, r, 0), 1, &mut out).unwrap();
            offspring_counts(&out, w.len())
        })
        .collect()
}

#[test]
fn offspring_counts_unbiased_and_ordered() {
    let w = [0.6, 0.3, 0.1];
    let n = 30;
    let mut vars = Vec::new();
    for scheme in [ResamplingScheme::Systematic, ResamplingScheme::Stratified, ResamplingScheme::Multinomial] {
        let c = counts_for(scheme, &w, n, 20_000, 1);
        for k in 0..3 {
            let x: Vec<f64> = c.iter().map(|v| v[k] as f64).collect();
            let sd = se(&x);
            let target = n as f64 * w[k];
            assert!((mean(&x) - target).abs() <= 3.0 * sd.max(1e-12), "{scheme:?} bin {k}");
        }
        let x: Vec<f64> = c.iter().map(|v| v[2] as f64).collect();
        vars.push(stats::variance(&x));
    }
    assert!(vars[0] <= vars[1] && vars[1] <= vars[2], "{vars:?}");
}

#[test]
fn systematic_counts_are_floor_or_ceil() {
    let s = SeedStream::new(2);
    let mut out = vec![0usize; 17];
    for r in 0..500u32 {
        let raw: Vec<f64> = (0..5).map(|k| s.uniform(Address::new(tag::USER, r, k, 0)) + 0.01).collect();
        let tot: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / tot).collect();
        resample(ResamplingScheme::Systematic, &w, &s.fork(tag::REPLICATE, r, 0), 1, &mut out).unwrap();
        for (k, c) in offspring_counts(&out, 5).into_iter().enumerate() {
            let e = 17.0 * w[k];
            assert!(c == e.floor() as usize || c == e.ceil() as usize);
        }
    }
}

#[test]
fn conditional_resampling_pins_the_slot() {
    let w = [0.1, 0.2, 0.3, 0.4];
    let s = SeedStream::new(4);
    for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Stratified, ResamplingScheme::Systematic] {
        for r in 0..200u32 {
            let mut out = vec![0usize; 4];
            conditional_resample(scheme, &w, 1, 3, &s.fork(tag::REPLICATE, r, 0), 2, &mut out).unwrap();
            assert_eq!(out[3], 1);
        }
    }
}

#[test]
fn empirical_examples() {
    let e = WeightedEmpirical::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
    assert_eq!(e.expectation(|x| *x), 2.0);
    let e = WeightedEmpirical::new(vec![5.0, 9.0], vec![1.0, 0.0]).unwrap();
    assert_eq!(e.expectation(|x| *x), 5.0);
    assert_eq!(e.expectation(|_| 3.0), 3.0);
}

#[test]
fn chi2_and_ks_sanity() {
    let (_, p) = stats::chi2_test(&[100, 100, 100], &[1.0 / 3.0; 3]);
    assert!(p > 0.99);
    let (_, p) = stats::chi2_test(&[200, 50, 50], &[1.0 / 3.0; 3]);
    assert!(p < 1e-6);
}
