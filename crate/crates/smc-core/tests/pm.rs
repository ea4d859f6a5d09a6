use smc_core::engine::{run_smc, Bootstrap, Guided, SmcConfig};
use smc_core::proposals::OptimalProposal;
use smc_core::models::{GaussianJointOracle, NonMarkovGauss, SyntheticExpModel};
use smc_core::parallel::Sequential;
use smc_core::pm::{
    acceptance_probability, crank_nicolson_seed, mh_run, pimh_run, pmmh_run, poisson_estimator, poisson_rw_kernel, proper_weighting_check, run_nsmc,
    NestedSmcKernel,
};
use smc_core::resampling::{AdaptivePolicy, ResamplingScheme};
use smc_core::rng::{tag, SeedStream};
use smc_core::special::norm_logpdf;
use smc_core::stats::{batch_means_se, variance};

mod common;
use common::{kalman, mean, se};

const SYS: ResamplingScheme = ResamplingScheme::Systematic;

fn example(t: usize, seed: u64) -> NonMarkovGauss {
    NonMarkovGauss::running_example(t, &SeedStream::new(seed))
}

fn log_prior(th: &[f64]) -> f64 {
    th.iter().map(|v| norm_logpdf(*v, 0.0, 1.0)).sum()
}

#[test]
fn acceptance_probability_edges() {
    assert_eq!(acceptance_probability(0.3), 1.0);
    assert_eq!(acceptance_probability(f64::NAN), 0.0);
    assert_eq!(acceptance_probability(f64::NEG_INFINITY), 0.0);
    assert!((acceptance_probability(-1.0) - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn mh_targets_standard_normal() {
    let c = mh_run(|x| -0.5 * x[0] * x[0], 2.4, &[3.0], 40_000, &SeedStream::new(1));
    let full = c.series(0);
    let x = &full[full.len() / 10..];
    assert!(mean(x).abs() <= 3.0 * batch_means_se(x, 20), "{} {}", mean(x), batch_means_se(x, 20));
    assert!((variance(x) - 1.0).abs() < 0.05);
    let a = c.acceptance_rate();
    assert!(a > 0.2 && a < 0.7, "{a}");
}

#[test]
fn pmmh_with_exact_likelihood_is_mh() {
    let m = example(8, 2);
    let ll = |th: &[f64]| kalman(&m.with_params(m.phi, th[0].exp(), m.beta, th[1].exp()).unwrap()).0;
    let s = SeedStream::new(3);
    let a = mh_run(|th| log_prior(th) + ll(th), 0.5f64.sqrt(), &[0.0, 0.0], 500, &s);
    let b = pmmh_run(log_prior, |th, _| Ok(ll(th)), 0.5f64.sqrt(), &[0.0, 0.0], 500, None, &s).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.accepted, b.accepted);
}

/// Posterior means of `(log q, log r)` for one observation `y ~ N(0, q + r)`.
fn quadrature_means(y: f64) -> [f64; 2] {
    let h = 0.02;
    let (mut z, mut m0, mut m1) = (0.0, 0.0, 0.0);
    for i in 0..600 {
        for k in 0..600 {
            let (a, b) = (-6.0 + h * (i as f64 + 0.5), -6.0 + h * (k as f64 + 0.5));
            let w = (log_prior(&[a, b]) + norm_logpdf(y, 0.0, a.exp() + b.exp())).exp();
            z += w;
            m0 += w * a;
            m1 += w * b;
        }
    }
    [m0 / z, m1 / z]
}

#[test]
fn pmmh_and_mh_agree_with_quadrature() {
    let m = example(1, 4);
    let y = m.obs(1)[0];
    let oracle = quadrature_means(y);
    let exact = |th: &[f64]| log_prior(th) + norm_logpdf(y, 0.0, th[0].exp() + th[1].exp());
    let est = |th: &[f64], s: &SeedStream| {
        let mm = m.with_params(m.phi, th[0].exp(), m.beta, th[1].exp())?;
        Ok(run_smc(&Bootstrap(&mm), SmcConfig::new(10), s)?.log_z())
    };
    let sd = 0.5f64.sqrt();
    let a = mh_run(exact, sd, &[0.0, 0.0], 20_000, &SeedStream::new(5));
    let b = pmmh_run(log_prior, est, sd, &[0.0, 0.0], 20_000, None, &SeedStream::new(6)).unwrap();
    for k in 0..2 {
        let (fa, fb) = (a.series(k), b.series(k));
        let (xa, xb) = (&fa[fa.len() / 10..], &fb[fb.len() / 10..]);
        let (sa, sb) = (batch_means_se(xa, 20), batch_means_se(xb, 20));
        let comb = (sa * sa + sb * sb).sqrt();
        assert!((mean(xa) - mean(xb)).abs() <= 3.0 * comb, "θ{k}: mh {} pmmh {} se {comb}", mean(xa), mean(xb));
        assert!((mean(xa) - oracle[k]).abs() <= 3.0 * sa, "θ{k}: mh {} oracle {}", mean(xa), oracle[k]);
        assert!((mean(xb) - oracle[k]).abs() <= 3.0 * sb, "θ{k}: pmmh {} oracle {}", mean(xb), oracle[k]);
    }
}

#[test]
fn pimh_matches_smoothing_means() {
    let m = example(5, 7);
    let oracle = GaussianJointOracle::new(&m).unwrap();
    let c = pimh_run(&Bootstrap(&m), SmcConfig::new(20), 4000, &SeedStream::new(8)).unwrap();
    assert_eq!(c.dim, 5);
    for t in [1usize, 5] {
        let full = c.series(t - 1);
        let x = full[full.len() / 10..].to_vec();
        let want = oracle.marginal(t, 0).0;
        assert!((mean(&x) - want).abs() <= 3.0 * batch_means_se(&x, 20), "t={t}: {} vs {want}", mean(&x));
    }
}

#[test]
fn pimh_acceptance_grows_with_particles() {
    let m = example(10, 9);
    let rates: Vec<f64> = [5usize, 20, 100]
        .iter()
        .map(|&n| pimh_run(&Bootstrap(&m), SmcConfig::new(n), 300, &SeedStream::new(10)).unwrap().acceptance_rate())
        .collect();
    assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");
}

#[test]
fn poisson_estimator_is_unbiased() {
    let s = SeedStream::new(11);
    let v: Vec<f64> = (0..200_000u32)
        .map(|r| {
            let (sign, l) = poisson_estimator(|d| 1.0 + (d.uniform() - 0.5), 2.0, &mut s.draws(tag::REPLICATE, r, 0));
            sign * l.exp()
        })
        .collect();
    let e = std::f64::consts::E;
    assert!((mean(&v) - e).abs() <= 3.0 * se(&v), "{} vs {e}", mean(&v));
    // empty product
    let (sign, l) = poisson_estimator(|_| panic!("not called"), 1e-12, &mut s.draws(tag::USER, 0, 0));
    assert_eq!(sign, 1.0);
    assert!(l.abs() < 1e-11);
}

#[test]
fn poisson_estimator_reports_negative_sign() {
    let s = SeedStream::new(12);
    let neg = (0..1000u32).filter(|&r| poisson_estimator(|_| -1.0, 2.0, &mut s.draws(tag::REPLICATE, r, 0)).0 < 0.0).count();
    // P(κ odd) = (1 - e^{-4}) / 2
    assert!((neg as f64 / 1000.0 - 0.4908).abs() < 0.05, "{neg}");
}

fn synthetic() -> SyntheticExpModel {
    SyntheticExpModel::new(0.9, 1.0, 1.5, 0.5, vec![0.3, -0.5, 1.0, 0.2, -0.8])
}

#[test]
fn random_weight_smc_is_unbiased() {
    let m = synthetic();
    let truth = m.log_z().unwrap();
    let k = poisson_rw_kernel(&m, 2.0);
    let r: Vec<f64> = (0..4000u32)
        .map(|i| (run_smc(&k, SmcConfig::new(50), &SeedStream::new(13).fork(tag::REPLICATE, i, 0)).unwrap().log_z() - truth).exp())
        .collect();
    assert!((mean(&r) - 1.0).abs() <= 3.0 * se(&r), "{} ± {}", mean(&r), se(&r));
}

#[test]
fn nested_smc_normalizer_is_unbiased() {
    let m = NonMarkovGauss::running_example_dim(3, 4, &SeedStream::new(14));
    let truth = kalman(&m).0;
    let r: Vec<f64> =
        (0..500u32).map(|i| (run_nsmc(&m, 50, 20, SYS, &SeedStream::new(15).fork(tag::REPLICATE, i, 0)).unwrap().log_z() - truth).exp()).collect();
    assert!((mean(&r) - 1.0).abs() <= 3.0 * se(&r), "{} ± {}", mean(&r), se(&r));
    assert!(NestedSmcKernel::new(&m, 0).is_err());
}

#[test]
fn nested_outer_weight_variance_falls_with_inner_particles() {
    let m = NonMarkovGauss::running_example_dim(3, 4, &SeedStream::new(16));
    let k = |mm| NestedSmcKernel::new(&m, mm).unwrap();
    let v: Vec<f64> = [1usize, 10, 100]
        .iter()
        .map(|&mm| {
            let z: Vec<f64> = (0..300u32).map(|i| run_smc(&k(mm), SmcConfig::new(10), &SeedStream::new(17).fork(tag::REPLICATE, i, 0)).unwrap().log_z()).collect();
            variance(&z)
        })
        .collect();
    assert!(v[0] > v[1] && v[1] > v[2], "{v:?}");
}

#[test]
fn importance_pairs_are_properly_weighted() {
    let m = example(1, 18);
    let oracle = GaussianJointOracle::new(&m).unwrap();
    let z = oracle.log_z_final().exp();
    let (pm, pv) = oracle.marginal(1, 0);
    let sampler = |s: &SeedStream| {
        let sys = run_smc(&Bootstrap(&m), SmcConfig::new(5), s)?;
        Ok((sys.sample_trajectory(s).1, sys.log_z()))
    };
    let one = |_: &[f64]| 1.0;
    let id = |x: &[f64]| x[0];
    let sq = |x: &[f64]| x[0] * x[0];
    let fs: [&(dyn Fn(&[f64]) -> f64 + Sync); 3] = [&one, &id, &sq];
    let zs = proper_weighting_check(sampler, &fs, &[z, z * pm, z * (pv + pm * pm)], 20_000, &Sequential, &SeedStream::new(19)).unwrap();
    for (k, zz) in zs.iter().enumerate() {
        assert!(zz.abs() <= 3.0, "f{k}: z = {zz}");
    }
}

fn log_ratio_variances(run: impl Fn(&SeedStream) -> f64, reps: usize) -> (f64, f64) {
    let s = SeedStream::new(21);
    let mut corr = Vec::new();
    let mut indep = Vec::new();
    for i in 0..reps {
        let cur = s.fork(tag::PM_SEED, i as u32, 1);
        let base = run(&cur);
        corr.push(run(&crank_nicolson_seed(&cur, 0.9999, &s, i)) - base);
        indep.push(run(&crank_nicolson_seed(&cur, 0.0, &s, i)) - base);
    }
    (variance(&corr), variance(&indep))
}

#[test]
fn correlated_seeds_shrink_log_ratio_variance() {
    let m = example(10, 20);
    let k = Guided::new(&m, OptimalProposal(&m));
    let cfg = SmcConfig::new(20).with_policy(AdaptivePolicy { threshold: 10.0 });
    let (vc, vi) = log_ratio_variances(|s| run_smc(&k, cfg, s).unwrap().log_z(), 1000);
    assert!(vc <= 0.05 * vi, "correlated {vc} independent {vi}");
    // every-step resampling breaks the coupling more often; still a clear gain
    let (vc, vi) = log_ratio_variances(|s| run_smc(&Bootstrap(&m), SmcConfig::always(20, SYS), s).unwrap().log_z(), 300);
    assert!(vc <= 0.5 * vi, "bootstrap: correlated {vc} independent {vi}");
}
