use smc_core::adapt::{
    adaptive_gradient, amortized_fit, elbo_estimate, vsmc_gradient, vsmc_optimize, AffineGaussianFamily, AmortizerParams, OptimizerConfig,
    PARAMS_PER_STEP,
};
use smc_core::engine::{run_smc, Guided, SmcConfig};
use smc_core::models::NonMarkovGauss;
use smc_core::proposals::{OptimalProposal, PriorProposal};
use smc_core::resampling::ResamplingScheme;
use smc_core::rng::{tag, SeedStream};

mod common;
use common::{kalman, mean, se};

const SYS: ResamplingScheme = ResamplingScheme::Systematic;

fn example(t: usize, seed: u64) -> NonMarkovGauss {
    NonMarkovGauss::running_example(t, &SeedStream::new(seed))
}

#[test]
fn named_families_reproduce_their_proposals() {
    let m = example(12, 1);
    let s = SeedStream::new(2);
    let cfg = SmcConfig::always(40, SYS);
    let prior = elbo_estimate(&m, &AffineGaussianFamily::prior(&m), cfg, &s).unwrap();
    let want = run_smc(&Guided::new(&m, PriorProposal(&m)), cfg, &s).unwrap().log_z();
    assert!((prior - want).abs() < 1e-9, "{prior} {want}");
    let opt = elbo_estimate(&m, &AffineGaussianFamily::optimal(&m), cfg, &s).unwrap();
    let want = run_smc(&Guided::new(&m, OptimalProposal(&m)), cfg, &s).unwrap().log_z();
    assert!((opt - want).abs() < 1e-9, "{opt} {want}");
    // the tangent runner agrees with the engine on the estimate itself
    let g = vsmc_gradient(&m, &AffineGaussianFamily::prior(&m), 40, SYS, &s, None).unwrap();
    assert!((g.log_z - prior).abs() < 1e-9, "{} {prior}", g.log_z);
}

#[test]
fn gradient_matches_finite_differences_with_frozen_ancestors() {
    let m = example(10, 3);
    let pick = SeedStream::new(4);
    let h = 1e-6;
    for k in 0..10u32 {
        let mut d = pick.draws(tag::USER, k, 0);
        let mut fam = AffineGaussianFamily::optimal(&m);
        for v in fam.params.iter_mut() {
            *v += 0.2 * d.normal();
        }
        let s = pick.fork(tag::REPLICATE, k, 0);
        let base = vsmc_gradient(&m, &fam, 50, SYS, &s, None).unwrap();
        for e in [0, 1, 2, 3, 4, 7, 21, PARAMS_PER_STEP * 10 - 1] {
            let mut up = fam.clone();
            up.params[e] += h;
            let mut dn = fam.clone();
            dn.params[e] -= h;
            let fu = vsmc_gradient(&m, &up, 50, SYS, &s, Some(&base.ancestors)).unwrap().log_z;
            let fd = vsmc_gradient(&m, &dn, 50, SYS, &s, Some(&base.ancestors)).unwrap().log_z;
            let num = (fu - fd) / (2.0 * h);
            let rel = (num - base.grad[e]).abs() / base.grad[e].abs().max(1e-3);
            assert!(rel <= 1e-4, "λ#{k} param {e}: fd {num} vs {}", base.grad[e]);
        }
    }
}

#[test]
fn optimized_elbo_improves_on_prior_and_stays_below_log_z() {
    let m = example(10, 5);
    let truth = kalman(&m).0;
    let init = AffineGaussianFamily::prior(&m);
    let trace = vsmc_optimize(&m, &init, OptimizerConfig::new(2000), 50, SYS, &SeedStream::new(6)).unwrap();
    assert_eq!(trace.elbo.len(), 2000);
    let cfg = SmcConfig::always(50, SYS);
    let eval = |f: &AffineGaussianFamily| -> Vec<f64> {
        (0..400u32).map(|r| elbo_estimate(&m, f, cfg, &SeedStream::new(7).fork(tag::REPLICATE, r, 0)).unwrap()).collect()
    };
    let (a, b) = (eval(&init), eval(&trace.family));
    let gain: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
    assert!(mean(&gain) > 3.0 * se(&gain), "gain {} ± {}", mean(&gain), se(&gain));
    assert!(mean(&b) <= truth + 3.0 * se(&b), "{} vs log Z {truth}", mean(&b));
}

#[test]
fn default_schedule_is_robbins_monro() {
    let o = OptimizerConfig::new(10);
    assert!(o.a > 0.0 && o.b > 0.0);
    assert!(o.step(1) > o.step(2));
    assert!((o.step(0) - o.a / o.b).abs() < 1e-18);
}

#[test]
fn one_step_gradient_by_hand() {
    // T = 1, d = 1: log w = log N(x; 0, q) + log N(y; x, r) - log N(x; m, σ²)
    // with x = m + σ z, m = b y + c
    let m = NonMarkovGauss::new(0.9, 1.3, 0.5, 0.7, 1, vec![0.4]).unwrap();
    let mut fam = AffineGaussianFamily::prior(&m);
    fam.params.copy_from_slice(&[1.0, 0.2, -0.1, 0.0, -0.3]);
    let s = SeedStream::new(11);
    let got = vsmc_gradient(&m, &fam, 1, SYS, &s, None).unwrap();
    let z = s.draws(tag::PROPOSE, 1, 0).normal();
    let (y, sig) = (0.4, (-0.3f64).exp());
    let x = 0.2 * y - 0.1 + sig * z;
    let dlw_dx = -x / m.q + (y - x) / m.r;
    let want = [0.0, dlw_dx * y, dlw_dx, 0.0, dlw_dx * sig * z + 1.0];
    for e in 0..5 {
        assert!((got.grad[e] - want[e]).abs() < 1e-8, "{e}: {} vs {}", got.grad[e], want[e]);
    }
}

#[test]
fn inclusive_gradient_vanishes_at_exact_posterior() {
    // one step: the locally optimal proposal is the posterior
    let m = example(1, 8);
    let fam = AffineGaussianFamily::optimal(&m);
    let gs: Vec<Vec<f64>> = (0..2000u32)
        .map(|r| adaptive_gradient(&m, &fam, SmcConfig::new(20), &SeedStream::new(9).fork(tag::REPLICATE, r, 0)).unwrap())
        .collect();
    for e in 0..PARAMS_PER_STEP {
        let v: Vec<f64> = gs.iter().map(|g| g[e]).collect();
        assert!(mean(&v).abs() <= 3.0 * se(&v) + 1e-12, "param {e}: {} ± {}", mean(&v), se(&v));
    }
}

#[test]
fn amortizer_learns_the_one_step_posterior() {
    // β = 0, T = 1, q = r = 1: x | y ~ N(y / 2, 1 / 2)
    let template = NonMarkovGauss::new(0.9, 1.0, 0.0, 1.0, 20, vec![0.0; 20]).unwrap();
    let opt = OptimizerConfig { a: 0.05, b: 100.0, iterations: 4000 };
    let (p, losses) = amortized_fit(&template, AmortizerParams::prior(1.0), opt, &SeedStream::new(10)).unwrap();
    assert_eq!(losses.len(), 4000);
    assert!((p.w_mean[0] - 0.5).abs() < 0.03, "{p:?}");
    assert!(p.w_mean[2].abs() < 0.03, "{p:?}");
    assert!((p.w_logstd[2] - 0.5 * 0.5f64.ln()).abs() < 0.03, "{p:?}");
    assert!(mean(&losses[3000..]) < mean(&losses[..100]));
}
