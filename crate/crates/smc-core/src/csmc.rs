//! Conditional SMC, ancestor sampling, iterated CSMC, the inverse-normalizer
//! harness and the expected-empirical-distribution density estimate.

use alloc::vec::Vec;

use crate::engine::{run_smc, Conditioning, Kernel, ParticleSystem, SmcConfig};
use crate::error::{Result, SmcError};
use crate::evaluate::{harness_report, HarnessReport};
use crate::logspace::log_sum_exp;
use crate::parallel::{try_map, Executor};
use crate::resampling::ResamplingScheme;
use crate::rng::{tag, SeedStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsmcConfig {
    pub n: usize,
    pub scheme: ResamplingScheme,
    pub ancestor_sampling: bool,
    /// Pinned slot; `None` means the last one.
    pub slot: Option<usize>,
}

impl CsmcConfig {
    pub fn new(n: usize) -> Self {
        CsmcConfig { n, scheme: ResamplingScheme::Systematic, ancestor_sampling: false, slot: None }
    }
    pub fn with_ancestor_sampling(mut self, on: bool) -> Self {
        self.ancestor_sampling = on;
        self
    }
    pub fn with_scheme(mut self, scheme: ResamplingScheme) -> Self {
        self.scheme = scheme;
        self
    }
    pub fn with_slot(mut self, slot: usize) -> Self {
        self.slot = Some(slot);
        self
    }
    pub fn smc_config(&self) -> SmcConfig {
        SmcConfig::always(self.n, self.scheme)
    }
    fn pinned(&self) -> usize {
        self.slot.unwrap_or(self.n - 1)
    }
}

#[derive(Clone, Debug)]
pub struct CsmcOutput {
    /// New retained path, drawn from the final weighted particles.
    pub path: Vec<f64>,
    pub log_z: f64,
    pub system: ParticleSystem,
}

fn csmc_pass<K: Kernel + ?Sized>(kernel: &K, cfg: &CsmcConfig, reference: &[f64], as_on: bool, stream: &SeedStream) -> Result<ParticleSystem> {
    let mut sys = ParticleSystem::for_kernel(kernel, cfg.smc_config())?;
    let cond = Conditioning { path: reference, slot: cfg.pinned(), ancestor_sampling: as_on };
    for _ in 0..kernel.horizon() {
        sys.step(kernel, stream, Some(&cond))?;
    }
    Ok(sys)
}

/// One conditional SMC sweep with `reference` (points, `T x point_dim`) pinned.
/// Without a splice score the kernel falls back to plain CSMC.
pub fn run_csmc<K: Kernel + ?Sized>(kernel: &K, cfg: &CsmcConfig, reference: &[f64], stream: &SeedStream) -> Result<CsmcOutput> {
    if cfg.n == 0 || cfg.pinned() >= cfg.n {
        return Err(SmcError::InvalidArgument("reference slot out of range"));
    }
    if reference.len() != kernel.horizon() * kernel.point_dim() {
        return Err(SmcError::InvalidArgument("reference has the wrong length"));
    }
    let sys = match csmc_pass(kernel, cfg, reference, cfg.ancestor_sampling, stream) {
        Err(SmcError::Unsupported(_)) if cfg.ancestor_sampling => {
            log::warn!("kernel has no splice score; ancestor sampling disabled");
            csmc_pass(kernel, cfg, reference, false, stream)?
        }
        r => r?,
    };
    let (_, path) = sys.sample_trajectory(stream);
    Ok(CsmcOutput { path, log_z: sys.log_z(), system: sys })
}

/// Retained paths of an iterated CSMC chain, one row per sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CsmcChain {
    pub path_len: usize,
    pub paths: Vec<f64>,
    pub log_z: Vec<f64>,
}

impl CsmcChain {
    pub fn sweeps(&self) -> usize {
        self.log_z.len()
    }
    pub fn path(&self, j: usize) -> &[f64] {
        &self.paths[j * self.path_len..(j + 1) * self.path_len]
    }
    /// Trace of path entry `k` over sweeps.
    pub fn series(&self, k: usize) -> Vec<f64> {
        (0..self.sweeps()).map(|j| self.paths[j * self.path_len + k]).collect()
    }
}

/// `sweeps` CSMC applications; sweep `j` uses `fork(SWEEP, j, 0)`. Without an
/// initial reference, one is drawn from an unconditional run on `fork(REFERENCE, 0, 0)`.
pub fn iterated_csmc<K: Kernel + ?Sized>(
    kernel: &K,
    cfg: &CsmcConfig,
    init: Option<&[f64]>,
    sweeps: usize,
    stream: &SeedStream,
) -> Result<CsmcChain> {
    let mut reference = match init {
        Some(r) => r.to_vec(),
        None => {
            let s = stream.fork(tag::REFERENCE, 0, 0);
            run_smc(kernel, cfg.smc_config(), &s)?.sample_trajectory(&s).1
        }
    };
    let len = reference.len();
    let mut paths = Vec::with_capacity(sweeps * len);
    let mut log_z = Vec::with_capacity(sweeps);
    for j in 0..sweeps {
        let out = run_csmc(kernel, cfg, &reference, &stream.fork(tag::SWEEP, j as u32, 0))?;
        reference = out.path;
        paths.extend_from_slice(&reference);
        log_z.push(out.log_z);
    }
    Ok(CsmcChain { path_len: len, paths, log_z })
}

/// `Z / Ẑ` for `reps` CSMC runs with references from `sample_ref`; rep `r`
/// draws its reference from `fork(REFERENCE, r, 0)` and runs on `fork(REPLICATE, r, 0)`.
pub fn inverse_z_ratios<K, F, E>(
    kernel: &K,
    cfg: &CsmcConfig,
    log_z_true: f64,
    reps: usize,
    sample_ref: F,
    exec: &E,
    stream: &SeedStream,
) -> Result<Vec<f64>>
where
    K: Kernel + Sync + ?Sized,
    F: Fn(&SeedStream) -> Vec<f64> + Sync,
    E: Executor,
{
    try_map(exec, reps, |r| {
        let reference = sample_ref(&stream.fork(tag::REFERENCE, r as u32, 0));
        let out = run_csmc(kernel, cfg, &reference, &stream.fork(tag::REPLICATE, r as u32, 0))?;
        Ok(libm::exp(log_z_true - out.log_z))
    })
}

/// Unbiasedness report for `Z / Ẑ` under exact references.
pub fn inverse_z_harness<K, F, E>(
    kernel: &K,
    cfg: &CsmcConfig,
    log_z_true: f64,
    reps: usize,
    sample_ref: F,
    exec: &E,
    stream: &SeedStream,
) -> Result<HarnessReport>
where
    K: Kernel + Sync + ?Sized,
    F: Fn(&SeedStream) -> Vec<f64> + Sync,
    E: Executor,
{
    let v = inverse_z_ratios(kernel, cfg, log_z_true, reps, sample_ref, exec, stream)?;
    Ok(harness_report(&v, 1.0))
}

/// `log γ_T(x) + log((1/R) Σ_r 1/Ẑ_r)` with `Ẑ_r` from CSMC runs pinned to `x`.
pub fn expected_empirical_logdensity<K: Kernel + ?Sized>(
    kernel: &K,
    cfg: &CsmcConfig,
    x: &[f64],
    reps: usize,
    stream: &SeedStream,
) -> Result<f64> {
    if reps == 0 {
        return Err(SmcError::InvalidArgument("need at least one replicate"));
    }
    let lg = kernel.log_gamma(x)?;
    let mut inv = Vec::with_capacity(reps);
    for r in 0..reps {
        let out = run_csmc(kernel, cfg, x, &stream.fork(tag::REPLICATE, r as u32, 0))?;
        inv.push(-out.log_z);
    }
    Ok(lg + log_sum_exp(&inv)? - libm::log(reps as f64))
}
