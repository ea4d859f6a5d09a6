//! Inference-evaluation estimators: Gaussian Jeffreys divergence, the BREAD
//! bound from forward and reverse annealed importance sampling, the AIDE
//! bound from conditional-SMC meta-inference, and an unbiasedness harness.

use alloc::vec::Vec;

use crate::csmc::{run_csmc, CsmcConfig};
use crate::engine::{run_smc, Kernel, SmcConfig};
use crate::error::{Result, SmcError};
use crate::models::TemperedGaussModel;
use crate::parallel::{try_map, Executor};
use crate::rng::{tag, SeedStream};
use crate::stats;

/// Mean ratio to the truth with its standard error and z-score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarnessReport {
    pub mean: f64,
    pub se: f64,
    pub z: f64,
    pub reps: usize,
    /// `|z| <= 3`.
    pub pass: bool,
}

/// Report on `values / truth` against 1.
pub fn harness_report(values: &[f64], truth: f64) -> HarnessReport {
    let ratios: Vec<f64> = values.iter().map(|v| v / truth).collect();
    let mean = stats::mean(&ratios);
    let se = if ratios.len() > 1 { stats::std_error(&ratios) } else { 0.0 };
    let z = if se > 0.0 {
        (mean - 1.0) / se
    } else if mean == 1.0 {
        0.0
    } else {
        f64::INFINITY
    };
    HarnessReport { mean, se, z, reps: values.len(), pass: libm::fabs(z) <= 3.0 }
}

/// Runs `estimator` on `fork(REPLICATE, r, 0)` for `r < reps`.
pub fn unbiasedness_harness<F, E>(estimator: F, truth: f64, reps: usize, exec: &E, stream: &SeedStream) -> Result<HarnessReport>
where
    F: Fn(&SeedStream) -> Result<f64> + Sync,
    E: Executor,
{
    if !truth.is_finite() {
        return Err(SmcError::InvalidArgument("truth must be finite"));
    }
    let v = try_map(exec, reps, |r| estimator(&stream.fork(tag::REPLICATE, r as u32, 0)))?;
    Ok(harness_report(&v, truth))
}

/// `KL(1 || 2) + KL(2 || 1)` for univariate Gaussians.
pub fn jeffreys_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(SmcError::InvalidArgument("variances must be positive"));
    }
    let kl = |ma: f64, va: f64, mb: f64, vb: f64| 0.5 * (va / vb + (ma - mb) * (ma - mb) / vb - 1.0 + libm::log(vb / va));
    Ok(kl(m1, v1, m2, v2) + kl(m2, v2, m1, v1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceEstimate {
    pub estimate: f64,
    pub se: f64,
    pub reps: usize,
    pub forward: f64,
    pub reverse: f64,
}

impl DivergenceEstimate {
    fn from_terms(fwd: &[f64], rev: &[f64]) -> Self {
        let (f, r) = (stats::mean(fwd), stats::mean(rev));
        let v = |x: &[f64]| if x.len() > 1 { stats::variance(x) / x.len() as f64 } else { 0.0 };
        DivergenceEstimate { estimate: f + r, se: libm::sqrt(v(fwd) + v(rev)), reps: fwd.len(), forward: f, reverse: r }
    }
}

/// Log weight of one reverse AIS run: start at an exact posterior draw and
/// apply the Metropolis kernels in reverse temperature order.
pub fn reverse_ais_log_weight(model: &TemperedGaussModel, stream: &SeedStream) -> f64 {
    let t_len = model.horizon();
    let mut x = model.posterior_sample(&mut stream.draws(tag::ORACLE, 0, 0));
    let mut w = 0.0;
    for t in (2..=t_len).rev() {
        x = model.mh_move(t, x, &mut stream.draws(tag::PROPOSE, t as u32, 0));
        w += model.log_lik_at(t, x) - model.log_lik_at(t - 1, x);
    }
    w + model.log_lik_at(1, x)
}

/// BREAD for annealed importance sampling: forward term `-Σ log w̃` over
/// forward runs plus reverse term `Σ log w̃` over reverse runs. Rep `r` uses
/// `fork(REPLICATE, r, 0)` forward and `fork(REPLICATE, r, 1)` in reverse.
pub fn bread_bound<E: Executor>(model: &TemperedGaussModel, reps: usize, exec: &E, stream: &SeedStream) -> Result<DivergenceEstimate> {
    if reps == 0 {
        return Err(SmcError::InvalidArgument("need at least one replicate"));
    }
    let ais = model.ais();
    let fwd = try_map(exec, reps, |r| Ok(-run_smc(&ais, SmcConfig::sis(1), &stream.fork(tag::REPLICATE, r as u32, 0))?.log_z()))?;
    let rev = exec.map(reps, |r| reverse_ais_log_weight(model, &stream.fork(tag::REPLICATE, r as u32, 1)));
    Ok(DivergenceEstimate::from_terms(&fwd, &rev))
}

/// One side of AIDE: draw `x` from `from`'s SMC run, then pin it in a CSMC run
/// of `to`. Returns `log Ẑ_to(x) - log Ẑ_from`.
fn aide_term<A: Kernel + ?Sized, B: Kernel + ?Sized>(
    from: &A,
    from_cfg: &CsmcConfig,
    to: &B,
    to_cfg: &CsmcConfig,
    stream: &SeedStream,
) -> Result<f64> {
    let s1 = stream.fork(tag::REPLICATE, 0, 0);
    let sys = run_smc(from, from_cfg.smc_config(), &s1)?;
    let (_, x) = sys.sample_trajectory(&s1);
    let out = run_csmc(to, to_cfg, &x, &stream.fork(tag::REPLICATE, 0, 1))?;
    Ok(out.log_z - sys.log_z())
}

/// AIDE between an approximate sampler `q` and a gold-standard sampler `p`,
/// both SMC with CSMC meta-inference and one meta-run per sample. The forward
/// term averages `log Ẑ^p_csmc(x) - log Ẑ^q` over `x ~ q`; the reverse term
/// swaps the roles. Rep `r` uses `fork(REPLICATE, r, 0|1)`.
pub fn aide_bound<Q, P, E>(
    approx: &Q,
    approx_cfg: &CsmcConfig,
    gold: &P,
    gold_cfg: &CsmcConfig,
    reps: usize,
    exec: &E,
    stream: &SeedStream,
) -> Result<DivergenceEstimate>
where
    Q: Kernel + Sync + ?Sized,
    P: Kernel + Sync + ?Sized,
    E: Executor,
{
    if reps == 0 {
        return Err(SmcError::InvalidArgument("need at least one replicate"));
    }
    let terms = try_map(exec, reps, |r| {
        let f = aide_term(approx, approx_cfg, gold, gold_cfg, &stream.fork(tag::REPLICATE, r as u32, 0))?;
        let b = aide_term(gold, gold_cfg, approx, approx_cfg, &stream.fork(tag::REPLICATE, r as u32, 1))?;
        Ok((f, b))
    })?;
    let (fwd, rev): (Vec<f64>, Vec<f64>) = terms.into_iter().unzip();
    Ok(DivergenceEstimate::from_terms(&fwd, &rev))
}
