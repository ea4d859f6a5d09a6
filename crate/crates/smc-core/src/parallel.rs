//! Multi-node samplers: importance-weighted aggregation of independent runs,
//! the island particle filter and interacting particle MCMC.
//!
//! Nodes are simulated by an [`Executor`]. Every node draws from a stream
//! forked by its index, so results do not depend on the executor.

use alloc::vec;
use alloc::vec::Vec;

use crate::csmc::{run_csmc, CsmcConfig};
use crate::engine::{run_smc, Kernel, ParticleSystem, SmcConfig};
use crate::error::{Result, SmcError};
use crate::logspace::{log_sum_exp, normalize_log_weights};
use crate::resampling::{self, adaptive_decision, ess, AdaptivePolicy, Decision};
use crate::rng::{tag, Address, SeedStream};

/// Runs independent jobs. Implementations must return results in index order.
pub trait Executor: Sync {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T>;

    fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F);

    fn workers(&self) -> usize {
        1
    }
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T: Send, F: Fn(usize) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        (0..n).map(f).collect()
    }
    fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F) {
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// [`Executor::map`] over fallible jobs; the first error (by index) wins.
pub fn try_map<T: Send, E: Executor + ?Sized, F: Fn(usize) -> Result<T> + Sync>(exec: &E, n: usize, f: F) -> Result<Vec<T>> {
    exec.map(n, f).into_iter().collect()
}

// ----------------------------------------------------------- aggregation

/// `Σ_m (Ẑ^m / Σ Ẑ) f̂^m`.
pub fn iw_aggregate(log_z: &[f64], estimates: &[f64]) -> Result<f64> {
    if log_z.len() != estimates.len() || log_z.is_empty() {
        return Err(SmcError::InvalidArgument("need one estimate per run"));
    }
    let (w, _) = normalize_log_weights(log_z)?;
    Ok(w.iter().zip(estimates).map(|(w, f)| w * f).sum())
}

/// `M` independent SMC runs; run `m` uses `fork(ISLAND, m, 0)`, the same
/// addressing as the islands of [`island_pf`].
pub fn independent_smc<K: Kernel + Sync + ?Sized, E: Executor>(
    kernel: &K,
    config: SmcConfig,
    m: usize,
    exec: &E,
    stream: &SeedStream,
) -> Result<Vec<ParticleSystem>> {
    try_map(exec, m, |k| run_smc(kernel, config, &stream.fork(tag::ISLAND, k as u32, 0)))
}

// ------------------------------------------------------------- islands

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IslandConfig {
    pub islands: usize,
    pub inner: SmcConfig,
    /// Outer resampling rule on the island ESS; default `M / 2`.
    pub outer: AdaptivePolicy,
}

impl IslandConfig {
    pub fn new(islands: usize, inner: SmcConfig) -> Self {
        IslandConfig { islands, inner, outer: AdaptivePolicy::fraction(0.5, islands) }
    }
    pub fn with_outer(mut self, outer: AdaptivePolicy) -> Self {
        self.outer = outer;
        self
    }
}

/// Messages exchanged between nodes: one scalar per island per step, plus
/// whole systems copied on outer resampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommCounter {
    pub scalars: u64,
    pub state_copies: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IslandState {
    pub systems: Vec<ParticleSystem>,
    /// Log outer weights accumulated since the last outer resampling.
    pub log_acc: Vec<f64>,
    /// Normalized outer weights `Ω_t`.
    pub omega: Vec<f64>,
    pub log_z: f64,
    pub logz_trace: Vec<f64>,
    pub ess_trace: Vec<f64>,
    pub resampled: Vec<bool>,
    /// Each island's own `log Ẑ` after every step, `[t][m]`.
    pub island_log_z: Vec<Vec<f64>>,
    pub comm: CommCounter,
}

impl IslandState {
    /// `Σ_m Ω^m f̂^m` with `f̂^m` the island's own weighted estimate.
    pub fn estimate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.systems.iter().zip(&self.omega).map(|(s, w)| w * s.expectation(&f)).sum()
    }
}

/// Island particle filter: `M` inner SMC samplers reweighted and resampled
/// as particles of an outer SMC. Island `m` draws from `fork(ISLAND, m, 0)`;
/// outer systematic resampling uses the uniform at `(ISLAND, t, 0, 0)`.
pub fn island_pf<K: Kernel + Sync + ?Sized, E: Executor>(
    kernel: &K,
    cfg: &IslandConfig,
    exec: &E,
    stream: &SeedStream,
) -> Result<IslandState> {
    let m = cfg.islands;
    if m == 0 {
        return Err(SmcError::InvalidArgument("need at least one island"));
    }
    let streams: Vec<SeedStream> = (0..m).map(|k| stream.fork(tag::ISLAND, k as u32, 0)).collect();
    let systems = try_map(exec, m, |_| ParticleSystem::for_kernel(kernel, cfg.inner))?;
    let mut st = IslandState {
        systems,
        log_acc: vec![0.0; m],
        omega: vec![1.0 / m as f64; m],
        log_z: 0.0,
        logz_trace: Vec::new(),
        ess_trace: Vec::new(),
        resampled: Vec::new(),
        island_log_z: Vec::new(),
        comm: CommCounter::default(),
    };
    let mut anc = vec![0usize; m];
    for t in 1..=kernel.horizon() {
        let mut did = false;
        if t > 1 && adaptive_decision(ess(&st.omega), m, cfg.outer) == Decision::Resample {
            let u = stream.uniform(Address::new(tag::ISLAND, t as u32, 0, 0));
            resampling::systematic(&st.omega, u, &mut anc)?;
            let old = core::mem::take(&mut st.systems);
            st.systems = anc.iter().map(|&a| old[a].clone()).collect();
            st.comm.state_copies += anc.iter().enumerate().filter(|(i, a)| *i != **a).count() as u64;
            st.log_acc.iter_mut().for_each(|v| *v = 0.0);
            st.omega.iter_mut().for_each(|v| *v = 1.0 / m as f64);
            did = true;
        }
        st.resampled.push(did);
        let mut steps: Vec<(ParticleSystem, Result<f64>)> =
            core::mem::take(&mut st.systems).into_iter().map(|s| (s, Ok(0.0))).collect();
        exec.for_each_mut(&mut steps, |k, (s, out)| *out = s.step(kernel, &streams[k], None));
        let mut lm = Vec::with_capacity(m);
        for (s, out) in steps {
            st.systems.push(s);
            lm.push(out?);
        }
        st.comm.scalars += m as u64;
        let prev: Vec<f64> = st.omega.iter().zip(&lm).map(|(w, l)| libm::log(*w) + l).collect();
        let incr = log_sum_exp(&prev)?;
        if !incr.is_finite() {
            return Err(SmcError::DegenerateWeights { step: t });
        }
        st.log_z += incr;
        for (a, l) in st.log_acc.iter_mut().zip(&lm) {
            *a += l;
        }
        st.omega = normalize_log_weights(&st.log_acc)?.0;
        st.logz_trace.push(st.log_z);
        st.ess_trace.push(ess(&st.omega));
        st.island_log_z.push(st.systems.iter().map(|s| s.log_z()).collect());
    }
    Ok(st)
}

// -------------------------------------------------------------- iPMCMC

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpmcmcConfig {
    pub nodes: usize,
    pub conditional: usize,
    /// Per-node sampler; unconditional nodes use the same `N` and scheme.
    pub csmc: CsmcConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IpmcmcState {
    /// Conditional node indices `c_{1:P}`, distinct.
    pub c: Vec<usize>,
    /// Retained paths, one per conditional slot.
    pub refs: Vec<Vec<f64>>,
    /// Node `log Ẑ` from the latest sweep.
    pub log_z: Vec<f64>,
}

impl IpmcmcState {
    /// ESS of the normalized node weights.
    pub fn node_ess(&self) -> f64 {
        normalize_log_weights(&self.log_z).map(|(w, _)| ess(&w)).unwrap_or(0.0)
    }
}

/// Gibbs update of the conditional indices: for each `j`, `c_j` is drawn with
/// probability proportional to `Ẑ^i` among nodes not held by another slot.
/// Slot `j` uses the uniform at `(NODE_SELECT, sweep, j, 0)`.
pub fn ipmcmc_index_update(log_z: &[f64], c: &mut [usize], stream: &SeedStream, sweep: u32) -> Result<()> {
    let m = log_z.len();
    let mut lw = vec![0.0; m];
    for j in 0..c.len() {
        for i in 0..m {
            let taken = c.iter().enumerate().any(|(k, &ck)| k != j && ck == i);
            lw[i] = if taken { f64::NEG_INFINITY } else { log_z[i] };
        }
        let (w, _) = normalize_log_weights(&lw).map_err(|_| SmcError::DegenerateWeights { step: j + 1 })?;
        let u = stream.uniform(Address::new(tag::NODE_SELECT, sweep, j as u32, 0));
        c[j] = resampling::search(&resampling::cumulative(&w)?, u);
    }
    Ok(())
}

/// Initial state: `c = (0..P)` with references from unconditional runs on
/// `fork(REFERENCE, j, 0)`.
pub fn ipmcmc_init<K: Kernel + Sync + ?Sized, E: Executor>(
    kernel: &K,
    cfg: &IpmcmcConfig,
    exec: &E,
    stream: &SeedStream,
) -> Result<IpmcmcState> {
    if cfg.conditional == 0 || cfg.conditional > cfg.nodes {
        return Err(SmcError::InvalidArgument("need 1 <= P <= M"));
    }
    let refs = try_map(exec, cfg.conditional, |j| {
        let s = stream.fork(tag::REFERENCE, j as u32, 0);
        Ok(run_smc(kernel, cfg.csmc.smc_config(), &s)?.sample_trajectory(&s).1)
    })?;
    Ok(IpmcmcState { c: (0..cfg.conditional).collect(), refs, log_z: vec![0.0; cfg.nodes] })
}

/// One sweep: conditional nodes run CSMC on their retained path, the others run
/// SMC (node `m` on `fork(SWEEP, sweep, m)`); then indices are updated and each
/// slot draws a new path from its selected node.
pub fn ipmcmc_step<K: Kernel + Sync + ?Sized, E: Executor>(
    kernel: &K,
    cfg: &IpmcmcConfig,
    state: &IpmcmcState,
    sweep: u32,
    exec: &E,
    stream: &SeedStream,
) -> Result<IpmcmcState> {
    let systems = try_map(exec, cfg.nodes, |m| {
        let s = stream.fork(tag::SWEEP, sweep, m as u32);
        match state.c.iter().position(|&c| c == m) {
            Some(j) => Ok(run_csmc(kernel, &cfg.csmc, &state.refs[j], &s)?.system),
            None => run_smc(kernel, cfg.csmc.smc_config(), &s),
        }
    })?;
    let log_z: Vec<f64> = systems.iter().map(|s| s.log_z()).collect();
    let mut c = state.c.clone();
    ipmcmc_index_update(&log_z, &mut c, stream, sweep)?;
    let refs = c
        .iter()
        .enumerate()
        .map(|(j, &k)| systems[k].sample_trajectory(&stream.fork(tag::NODE_SELECT, sweep, j as u32)).1)
        .collect();
    Ok(IpmcmcState { c, refs, log_z })
}

/// Runs `sweeps` iPMCMC sweeps and returns every state.
pub fn ipmcmc_run<K: Kernel + Sync + ?Sized, E: Executor>(
    kernel: &K,
    cfg: &IpmcmcConfig,
    sweeps: usize,
    exec: &E,
    stream: &SeedStream,
) -> Result<Vec<IpmcmcState>> {
    let mut st = ipmcmc_init(kernel, cfg, exec, stream)?;
    let mut out = Vec::with_capacity(sweeps);
    for r in 0..sweeps {
        st = ipmcmc_step(kernel, cfg, &st, r as u32, exec, stream)?;
        out.push(st.clone());
    }
    Ok(out)
}
