use smc_core::csmc::CsmcConfig;
use smc_core::engine::{run_smc, Bootstrap, Guided, SmcConfig};
use smc_core::models::{GaussianJointOracle, NonMarkovGauss};
use smc_core::parallel::{independent_smc, ipmcmc_index_update, ipmcmc_run, island_pf, iw_aggregate, IpmcmcConfig, IslandConfig, Sequential};
use smc_core::proposals::OptimalProposal;
use smc_core::resampling::{AdaptivePolicy, ResamplingScheme};
use smc_core::rng::{tag, SeedStream};
use smc_core::stats::{batch_means_se, chi2_test};

mod common;
use common::{kalman, mean, se};

fn example(t: usize, seed: u64) -> NonMarkovGauss {
    NonMarkovGauss::running_example(t, &SeedStream::new(seed))
}

#[test]
fn aggregate_by_hand() {
    assert!((iw_aggregate(&[0.0, 0.0], &[1.0, 3.0]).unwrap() - 2.0).abs() < 1e-15);
    let v = iw_aggregate(&[0.0, 2f64.ln()], &[3.0, 6.0]).unwrap();
    assert!((v - 5.0).abs() < 1e-14);
    assert_eq!(iw_aggregate(&[f64::NEG_INFINITY, 0.0], &[100.0, 1.0]).unwrap(), 1.0);
    assert!(iw_aggregate(&[0.0], &[1.0, 2.0]).is_err());
    assert!(iw_aggregate(&[], &[]).is_err());
}

#[test]
fn one_island_is_plain_smc() {
    let m = example(12, 1);
    let k = Bootstrap(&m);
    let s = SeedStream::new(2);
    let cfg = IslandConfig::new(1, SmcConfig::new(20));
    let isl = island_pf(&k, &cfg, &Sequential, &s).unwrap();
    let plain = run_smc(&k, SmcConfig::new(20), &s.fork(tag::ISLAND, 0, 0)).unwrap();
    assert!((isl.log_z - plain.log_z()).abs() < 1e-10);
    assert_eq!(isl.systems[0].log_weights(), plain.log_weights());
}

#[test]
fn zero_outer_threshold_is_importance_weighted_aggregation() {
    let m = example(10, 3);
    let k = Bootstrap(&m);
    let s = SeedStream::new(4);
    let inner = SmcConfig::new(5);
    let cfg = IslandConfig::new(5, inner).with_outer(AdaptivePolicy::never());
    let isl = island_pf(&k, &cfg, &Sequential, &s).unwrap();
    assert!(isl.resampled.iter().all(|r| !r));
    assert_eq!(isl.comm.state_copies, 0);
    let runs = independent_smc(&k, inner, 5, &Sequential, &s).unwrap();
    let lz: Vec<f64> = runs.iter().map(|r| r.log_z()).collect();
    let est: Vec<f64> = runs.iter().map(|r| r.expectation(|x| x[0])).collect();
    assert_eq!(isl.estimate(|x| x[0]), iw_aggregate(&lz, &est).unwrap());
    let pooled = smc_core::log_sum_exp(&lz).unwrap() - 5f64.ln();
    assert!((isl.log_z - pooled).abs() < 1e-10);
}

#[test]
fn island_normalizer_is_unbiased() {
    let m = example(10, 5);
    let truth = kalman(&m).0;
    let k = Guided::new(&m, OptimalProposal(&m));
    for outer in [AdaptivePolicy::fraction(0.5, 5), AdaptivePolicy::always()] {
        let cfg = IslandConfig::new(5, SmcConfig::new(5)).with_outer(outer);
        let r: Vec<f64> = (0..3000u32)
            .map(|i| (island_pf(&k, &cfg, &Sequential, &SeedStream::new(6).fork(tag::REPLICATE, i, 0)).unwrap().log_z - truth).exp())
            .collect();
        assert!((mean(&r) - 1.0).abs() <= 3.0 * se(&r), "{outer:?}: {} ± {}", mean(&r), se(&r));
    }
}

#[test]
fn outer_resampling_counts_copies() {
    let m = example(10, 7);
    let cfg = IslandConfig::new(6, SmcConfig::new(4)).with_outer(AdaptivePolicy::always());
    let isl = island_pf(&Bootstrap(&m), &cfg, &Sequential, &SeedStream::new(8)).unwrap();
    assert_eq!(isl.comm.scalars, 60);
    assert!(isl.resampled[1..].iter().all(|r| *r));
    assert!(isl.comm.state_copies > 0);
    assert_eq!(isl.logz_trace.len(), 10);
}

#[test]
fn index_update_matches_node_weights() {
    let log_z = [1f64.ln(), 2f64.ln(), 3f64.ln()];
    let s = SeedStream::new(9);
    let mut counts = [0u64; 3];
    for sweep in 0..30_000u32 {
        let mut c = [0usize];
        ipmcmc_index_update(&log_z, &mut c, &s, sweep).unwrap();
        counts[c[0]] += 1;
    }
    let (_, p) = chi2_test(&counts, &[1.0 / 6.0, 1.0 / 3.0, 0.5]);
    assert!(p > 0.001, "{counts:?} p = {p}");
}

#[test]
fn index_update_keeps_slots_distinct() {
    let s = SeedStream::new(10);
    for sweep in 0..500u32 {
        let mut c = [0usize, 1, 2];
        ipmcmc_index_update(&[0.0, 5.0, -1.0, 2.0, 0.3], &mut c, &s, sweep).unwrap();
        assert!(c[0] != c[1] && c[1] != c[2] && c[0] != c[2], "{c:?}");
    }
    let mut c = [0usize, 1];
    assert!(ipmcmc_index_update(&[0.0, f64::NEG_INFINITY], &mut c, &s, 0).is_err());
}

#[test]
fn ipmcmc_pooled_means_match_smoothing_means() {
    let m = example(10, 11);
    let oracle = GaussianJointOracle::new(&m).unwrap();
    let cfg = IpmcmcConfig { nodes: 4, conditional: 2, csmc: CsmcConfig::new(10).with_scheme(ResamplingScheme::Systematic) };
    let states = ipmcmc_run(&Bootstrap(&m), &cfg, 3000, &Sequential, &SeedStream::new(12)).unwrap();
    for t in [1usize, 10] {
        let x: Vec<f64> = states[states.len() / 10..].iter().map(|st| st.refs.iter().map(|r| r[t - 1]).sum::<f64>() / 2.0).collect();
        let want = oracle.marginal(t, 0).0;
        assert!((mean(&x) - want).abs() <= 3.0 * batch_means_se(&x, 20), "t={t}: {} vs {want}", mean(&x));
    }
    assert!(states.iter().all(|s| s.node_ess() >= 1.0 - 1e-12 && s.node_ess() <= 4.0 + 1e-12));
}
