//! The SIS/SMC driver.
//!
//! A [`Kernel`] bundles a proposal with its incremental weight: given the state
//! of a parent particle at step `t-1` it writes the new state and returns the
//! log incremental weight. Particle states are flat `f64` slices whose first
//! `point_dim` entries hold `x_t`; the remainder is a model-specific summary of
//! the history (for example a running observation-memory sum) so incremental
//! weights cost O(1).

use alloc::vec;
use alloc::vec::Vec;

use crate::empirical::WeightedEmpirical;
use crate::error::{Result, SmcError};
use crate::logspace::log_sum_exp;
use crate::resampling::{self, adaptive_decision, ess, AdaptivePolicy, Decision, ResamplingScheme};
use crate::rng::{tag, Address, Draws, SeedStream};

/// A sequence of unnormalized targets `γ_1, ..., γ_T` in incremental form.
pub trait Target: Sync {
    fn horizon(&self) -> usize;
    fn point_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    /// `state[..point_dim]` holds `x_t`; fills the summary part and returns
    /// `log γ_t(x_{1:t}) - log γ_{t-1}(x_{1:t-1})`.
    fn extend(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64;

    /// `log γ_t(x_{1:t})` for a path of `t` points laid out consecutively.
    fn log_gamma(&self, path: &[f64]) -> f64 {
        let pd = self.point_dim();
        let sd = self.state_dim();
        let mut prev = vec![0.0; sd];
        let mut cur = vec![0.0; sd];
        let mut total = 0.0;
        for (k, x) in path.chunks(pd).enumerate() {
            cur[..pd].copy_from_slice(x);
            total += self.extend(k + 1, if k == 0 { None } else { Some(&prev) }, &mut cur);
            core::mem::swap(&mut prev, &mut cur);
        }
        total
    }

    /// `log γ_T(x_{1:t-1}, x'_{t:T}) - log γ_{t-1}(x_{1:t-1})` where `prev` is the
    /// state of `x_{1:t-1}` and `tail` holds the points `x'_{t:T}`.
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> f64 {
        let pd = self.point_dim();
        let mut a = prev.to_vec();
        let mut b = vec![0.0; prev.len()];
        let mut total = 0.0;
        for (k, x) in tail.chunks(pd).enumerate() {
            b[..pd].copy_from_slice(x);
            total += self.extend(t + k, Some(&a), &mut b);
            core::mem::swap(&mut a, &mut b);
        }
        total
    }
}

/// A target that factorizes into a Markov-in-the-summary transition `f_t` and an
/// observation density `g_t`.
pub trait StateSpace: Target {
    fn sample_transition(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws);
    fn log_transition(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> f64;
    /// Fills the summary part of `state` and returns `log g_t`.
    fn observe(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64;
}

/// Conditional sampler `q_t(x_t | x_{1:t-1})`.
pub trait Proposal: Sync {
    /// Writes a draw into `point` and returns its log density.
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64>;
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64>;
}

/// One SMC move: propagate a parent and return the log incremental weight.
pub trait Kernel: Sync {
    fn horizon(&self) -> usize;
    fn point_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64>;

    /// Weight of a prescribed point (pre-filled in `out[..point_dim]`), used for
    /// the reference particle of conditional SMC.
    fn reweight(&self, _t: usize, _prev: Option<&[f64]>, _out: &mut [f64]) -> Result<f64> {
        Err(SmcError::Unsupported("kernel cannot weight a prescribed point"))
    }

    /// See [`Target::splice_log_ratio`].
    fn splice_log_ratio(&self, _t: usize, _prev: &[f64], _tail: &[f64]) -> Result<f64> {
        Err(SmcError::Unsupported("kernel has no splice score"))
    }

    /// `log γ_T` of a full path under the kernel's final target.
    fn log_gamma(&self, _path: &[f64]) -> Result<f64> {
        Err(SmcError::Unsupported("kernel has no target density"))
    }
}

macro_rules! forward_ref {
    ($tr:ident { $($body:tt)* }) => {
        impl<T: $tr + ?Sized> $tr for &T { $($body)* }
    };
}

forward_ref!(Target {
    fn horizon(&self) -> usize { (**self).horizon() }
    fn point_dim(&self) -> usize { (**self).point_dim() }
    fn state_dim(&self) -> usize { (**self).state_dim() }
    fn extend(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 { (**self).extend(t, prev, state) }
    fn log_gamma(&self, path: &[f64]) -> f64 { (**self).log_gamma(path) }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> f64 { (**self).splice_log_ratio(t, prev, tail) }
});

forward_ref!(StateSpace {
    fn sample_transition(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) {
        (**self).sample_transition(t, prev, point, draws)
    }
    fn log_transition(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> f64 { (**self).log_transition(t, prev, point) }
    fn observe(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 { (**self).observe(t, prev, state) }
});

forward_ref!(Proposal {
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        (**self).sample(t, prev, point, draws)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> { (**self).log_density(t, prev, point) }
});

forward_ref!(Kernel {
    fn horizon(&self) -> usize { (**self).horizon() }
    fn point_dim(&self) -> usize { (**self).point_dim() }
    fn state_dim(&self) -> usize { (**self).state_dim() }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        (**self).propagate(t, prev, out, draws)
    }
    fn reweight(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]) -> Result<f64> { (**self).reweight(t, prev, out) }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> Result<f64> { (**self).splice_log_ratio(t, prev, tail) }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> { (**self).log_gamma(path) }
});

/// Target plus proposal: weight `log γ_t/γ_{t-1} - log q_t`.
#[derive(Clone, Debug)]
pub struct Guided<T, Q> {
    pub target: T,
    pub proposal: Q,
}

impl<T: Target, Q: Proposal> Guided<T, Q> {
    pub fn new(target: T, proposal: Q) -> Self {
        Guided { target, proposal }
    }
}

impl<T: Target, Q: Proposal> Kernel for Guided<T, Q> {
    fn horizon(&self) -> usize {
        self.target.horizon()
    }
    fn point_dim(&self) -> usize {
        self.target.point_dim()
    }
    fn state_dim(&self) -> usize {
        self.target.state_dim()
    }
    #[inline]
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let pd = self.target.point_dim();
        let lq = self.proposal.sample(t, prev, &mut out[..pd], draws)?;
        Ok(self.target.extend(t, prev, out) - lq)
    }
    fn reweight(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]) -> Result<f64> {
        let pd = self.target.point_dim();
        let lq = self.proposal.log_density(t, prev, &out[..pd])?;
        Ok(self.target.extend(t, prev, out) - lq)
    }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> Result<f64> {
        Ok(self.target.splice_log_ratio(t, prev, tail))
    }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> {
        Ok(self.target.log_gamma(path))
    }
}

/// Prior-proposal kernel: propagate with `f_t`, weight by `g_t`.
#[derive(Clone, Debug)]
pub struct Bootstrap<M>(pub M);

impl<M: StateSpace> Kernel for Bootstrap<M> {
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn point_dim(&self) -> usize {
        self.0.point_dim()
    }
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    #[inline]
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let pd = self.0.point_dim();
        self.0.sample_transition(t, prev, &mut out[..pd], draws);
        Ok(self.0.observe(t, prev, out))
    }
    fn reweight(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]) -> Result<f64> {
        Ok(self.0.observe(t, prev, out))
    }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> Result<f64> {
        Ok(self.0.splice_log_ratio(t, prev, tail))
    }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> {
        Ok(self.0.log_gamma(path))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmcConfig {
    pub n: usize,
    pub scheme: ResamplingScheme,
    pub policy: AdaptivePolicy,
}

impl SmcConfig {
    /// Systematic resampling when the ESS falls below N/2.
    pub fn new(n: usize) -> Self {
        SmcConfig { n, scheme: ResamplingScheme::Systematic, policy: AdaptivePolicy::fraction(0.5, n) }
    }
    pub fn with_scheme(mut self, scheme: ResamplingScheme) -> Self {
        self.scheme = scheme;
        self
    }
    pub fn with_policy(mut self, policy: AdaptivePolicy) -> Self {
        self.policy = policy;
        self
    }
    pub fn always(n: usize, scheme: ResamplingScheme) -> Self {
        SmcConfig { n, scheme, policy: AdaptivePolicy::always() }
    }
    pub fn sis(n: usize) -> Self {
        SmcConfig { n, scheme: ResamplingScheme::Multinomial, policy: AdaptivePolicy::never() }
    }
}

/// Pins one particle to a prescribed path (conditional SMC).
#[derive(Clone, Copy, Debug)]
pub struct Conditioning<'a> {
    /// Reference points `x'_{1:T}`, `point_dim` values per step.
    pub path: &'a [f64],
    pub slot: usize,
    pub ancestor_sampling: bool,
}

/// N weighted particle paths with full ancestry, stepped one time index at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    n: usize,
    pd: usize,
    sd: usize,
    config: SmcConfig,
    t: usize,
    states: Vec<f64>,
    ancestors: Vec<u32>,
    logw: Vec<f64>,
    wbar: Vec<f64>,
    wbar_hist: Vec<f64>,
    log_z: f64,
    logz_trace: Vec<f64>,
    ess_trace: Vec<f64>,
    resampled: Vec<bool>,
    scratch: Vec<usize>,
}

impl ParticleSystem {
    pub fn new(point_dim: usize, state_dim: usize, config: SmcConfig) -> Result<Self> {
        if config.n == 0 {
            return Err(SmcError::InvalidArgument("need at least one particle"));
        }
        Ok(ParticleSystem {
            n: config.n,
            pd: point_dim,
            sd: state_dim,
            config,
            t: 0,
            states: Vec::new(),
            ancestors: Vec::new(),
            logw: vec![0.0; config.n],
            wbar: vec![1.0 / config.n as f64; config.n],
            wbar_hist: Vec::new(),
            log_z: 0.0,
            logz_trace: Vec::new(),
            ess_trace: Vec::new(),
            resampled: Vec::new(),
            scratch: vec![0; config.n],
        })
    }

    pub fn for_kernel<K: Kernel + ?Sized>(kernel: &K, config: SmcConfig) -> Result<Self> {
        Self::new(kernel.point_dim(), kernel.state_dim(), config)
    }

    /// Advances by one step.
    pub fn step<K: Kernel + ?Sized>(&mut self, kernel: &K, stream: &SeedStream, cond: Option<&Conditioning>) -> Result<f64> {
        let n = self.n;
        let sd = self.sd;
        let pd = self.pd;
        let t = self.t + 1;
        let tu = t as u32;
        let mut carry = false;
        let mut anc = core::mem::take(&mut self.scratch);
        if t == 1 {
            anc.iter_mut().enumerate().for_each(|(i, a)| *a = i);
            self.resampled.push(false);
        } else {
            let resample = cond.is_some() || adaptive_decision(ess(&self.wbar), n, self.config.policy) == Decision::Resample;
            if resample {
                match cond {
                    None => resampling::resample(self.config.scheme, &self.wbar, stream, tu, &mut anc)
                        .map_err(|e| with_step(e, t))?,
                    Some(c) => {
                        let k = if c.ancestor_sampling { self.ancestor_sample(kernel, c, stream)? } else { c.slot };
                        resampling::conditional_resample(self.config.scheme, &self.wbar, k, c.slot, stream, tu, &mut anc)
                            .map_err(|e| with_step(e, t))?;
                    }
                }
            } else {
                anc.iter_mut().enumerate().for_each(|(i, a)| *a = i);
                carry = true;
            }
            self.resampled.push(resample);
        }

        let base = self.states.len();
        self.states.resize(base + n * sd, 0.0);
        let (hist, cur) = self.states.split_at_mut(base);
        let prev_base = base.wrapping_sub(n * sd);
        for i in 0..n {
            let prev = if t == 1 { None } else { Some(&hist[prev_base + anc[i] * sd..prev_base + (anc[i] + 1) * sd]) };
            let out = &mut cur[i * sd..(i + 1) * sd];
            let w = match cond {
                Some(c) if i == c.slot => {
                    out[..pd].copy_from_slice(&c.path[(t - 1) * pd..t * pd]);
                    let w = kernel.reweight(t, prev, out)?;
                    if w == f64::NEG_INFINITY || w.is_nan() {
                        return Err(SmcError::InvalidReference);
                    }
                    w
                }
                _ => kernel.propagate(t, prev, out, &mut stream.draws(tag::PROPOSE, tu, i as u32))?,
            };
            if w.is_nan() || w == f64::INFINITY {
                return Err(SmcError::Numerical("non-finite incremental weight"));
            }
            self.logw[i] = if carry { libm::log(n as f64 * self.wbar[i]) + w } else { w };
        }
        self.ancestors.extend(anc.iter().map(|&a| a as u32));
        self.scratch = anc;

        let lse = log_sum_exp(&self.logw)?;
        if lse == f64::NEG_INFINITY {
            return Err(SmcError::DegenerateWeights { step: t });
        }
        if !lse.is_finite() {
            return Err(SmcError::Numerical("non-finite log-weight sum"));
        }
        for (wb, lw) in self.wbar.iter_mut().zip(&self.logw) {
            *wb = libm::exp(lw - lse);
        }
        let log_mean = lse - libm::log(n as f64);
        self.log_z += log_mean;
        self.t = t;
        self.logz_trace.push(self.log_z);
        self.ess_trace.push(ess(&self.wbar));
        self.wbar_hist.extend_from_slice(&self.wbar);
        Ok(log_mean)
    }

    fn ancestor_sample<K: Kernel + ?Sized>(&self, kernel: &K, c: &Conditioning, stream: &SeedStream) -> Result<usize> {
        let t = self.t + 1;
        let probs = self.ancestor_weights(kernel, c.path, t)?;
        let u = stream.uniform(Address::new(tag::RESAMPLE_REF, t as u32, 0, 0));
        let cum = resampling::cumulative(&probs).map_err(|_| SmcError::InvalidReference)?;
        Ok(resampling::search(&cum, u))
    }

    /// Ancestor-sampling probabilities for splicing the reference tail `x'_{t:T}`
    /// onto each particle at step `t-1`.
    pub fn ancestor_weights<K: Kernel + ?Sized>(&self, kernel: &K, ref_path: &[f64], t: usize) -> Result<Vec<f64>> {
        let pd = self.pd;
        let tail = &ref_path[(t - 1) * pd..];
        let mut lw = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let prev = self.state(t - 1, j);
            lw.push(libm::log(self.wbar[j]) + kernel.splice_log_ratio(t, prev, tail)?);
        }
        let lse = log_sum_exp(&lw)?;
        if !lse.is_finite() {
            return Err(SmcError::InvalidReference);
        }
        Ok(lw.iter().map(|v| libm::exp(v - lse)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn steps(&self) -> usize {
        self.t
    }
    pub fn point_dim(&self) -> usize {
        self.pd
    }
    pub fn state_dim(&self) -> usize {
        self.sd
    }
    pub fn config(&self) -> &SmcConfig {
        &self.config
    }
    pub fn log_z(&self) -> f64 {
        self.log_z
    }
    pub fn logz_trace(&self) -> &[f64] {
        &self.logz_trace
    }
    pub fn ess_trace(&self) -> &[f64] {
        &self.ess_trace
    }
    pub fn resampled(&self) -> &[bool] {
        &self.resampled
    }
    /// Current log weights (including any carried skip correction).
    pub fn log_weights(&self) -> &[f64] {
        &self.logw
    }
    /// Current normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.wbar
    }
    /// Normalized weights after step `t`.
    pub fn weights_at(&self, t: usize) -> &[f64] {
        &self.wbar_hist[(t - 1) * self.n..t * self.n]
    }
    /// State of particle `i` generated at step `t`.
    pub fn state(&self, t: usize, i: usize) -> &[f64] {
        let o = ((t - 1) * self.n + i) * self.sd;
        &self.states[o..o + self.sd]
    }
    pub fn states_at(&self, t: usize) -> &[f64] {
        &self.states[(t - 1) * self.n * self.sd..t * self.n * self.sd]
    }
    /// Parent index (at step `t-1`) of particle `i` at step `t`.
    pub fn ancestor(&self, t: usize, i: usize) -> usize {
        self.ancestors[(t - 1) * self.n + i] as usize
    }

    /// Indices along the lineage of final particle `i`, for steps `1..=t`.
    pub fn lineage(&self, i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.t];
        let mut j = i;
        for s in (1..=self.t).rev() {
            idx[s - 1] = j;
            j = self.ancestor(s, j);
        }
        idx
    }

    /// Points `x_{1:t}` of final particle `i`.
    pub fn path(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.t * self.pd];
        for (s, j) in self.lineage(i).into_iter().enumerate() {
            out[s * self.pd..(s + 1) * self.pd].copy_from_slice(&self.state(s + 1, j)[..self.pd]);
        }
        out
    }

    /// Number of distinct step-`s` ancestors among the final particles.
    pub fn unique_ancestors(&self, s: usize) -> usize {
        self.unique_ancestors_trace()[s - 1]
    }

    pub fn unique_ancestors_trace(&self) -> Vec<usize> {
        let mut out = vec![0; self.t];
        if self.t == 0 {
            return out;
        }
        let mut alive = vec![true; self.n];
        let mut next = vec![false; self.n];
        for s in (1..=self.t).rev() {
            out[s - 1] = alive.iter().filter(|a| **a).count();
            if s > 1 {
                next.iter_mut().for_each(|v| *v = false);
                for i in 0..self.n {
                    if alive[i] {
                        next[self.ancestor(s, i)] = true;
                    }
                }
                core::mem::swap(&mut alive, &mut next);
            }
        }
        out
    }

    /// Smoothing mean `Σ_i W̄_i x^i_{1:t}` over the final weighted paths.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let pd = self.pd;
        let mut out = vec![0.0; self.t * pd];
        let mut mass = self.wbar.clone();
        let mut next = vec![0.0; self.n];
        for s in (1..=self.t).rev() {
            for i in 0..self.n {
                if mass[i] != 0.0 {
                    let x = &self.state(s, i)[..pd];
                    for k in 0..pd {
                        out[(s - 1) * pd + k] += mass[i] * x[k];
                    }
                }
            }
            if s > 1 {
                next.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..self.n {
                    next[self.ancestor(s, i)] += mass[i];
                }
                core::mem::swap(&mut mass, &mut next);
            }
        }
        out
    }

    /// Filtering mean of `x_t` under the step-`t` weights.
    pub fn filter_mean(&self, t: usize) -> Vec<f64> {
        let pd = self.pd;
        let w = self.weights_at(t);
        let mut out = vec![0.0; pd];
        for i in 0..self.n {
            let x = &self.state(t, i)[..pd];
            for k in 0..pd {
                out[k] += w[i] * x[k];
            }
        }
        out
    }

    /// Index drawn from the final normalized weights.
    pub fn sample_index(&self, stream: &SeedStream) -> usize {
        let u = stream.uniform(Address::new(tag::TRAJECTORY, 0, 0, 0));
        let cum = resampling::cumulative(&self.wbar).expect("weights are normalized");
        resampling::search(&cum, u)
    }

    /// Draws a path from the final empirical distribution.
    pub fn sample_trajectory(&self, stream: &SeedStream) -> (usize, Vec<f64>) {
        let i = self.sample_index(stream);
        (i, self.path(i))
    }

    /// `Σ_i W̄_i f(x^i_{1:t})`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.n).filter(|&i| self.wbar[i] > 0.0).map(|i| self.wbar[i] * f(&self.path(i))).sum()
    }

    pub fn empirical(&self) -> WeightedEmpirical<Vec<f64>> {
        let paths = (0..self.n).map(|i| self.path(i)).collect();
        let s: f64 = self.wbar.iter().sum();
        WeightedEmpirical::new(paths, self.wbar.iter().map(|w| w / s).collect()).expect("valid weights")
    }
}

fn with_step(e: SmcError, t: usize) -> SmcError {
    match e {
        SmcError::DegenerateWeights { .. } => SmcError::DegenerateWeights { step: t },
        other => other,
    }
}

/// Runs all `T` steps of SMC.
pub fn run_smc<K: Kernel + ?Sized>(kernel: &K, config: SmcConfig, stream: &SeedStream) -> Result<ParticleSystem> {
    let mut ps = ParticleSystem::for_kernel(kernel, config)?;
    for _ in 0..kernel.horizon() {
        ps.step(kernel, stream, None)?;
    }
    Ok(ps)
}

/// Sequential importance sampling: SMC that never resamples.
pub fn run_sis<K: Kernel + ?Sized>(kernel: &K, n: usize, stream: &SeedStream) -> Result<ParticleSystem> {
    run_smc(kernel, SmcConfig::sis(n), stream)
}

/// Importance sampling on a one-step kernel.
pub fn run_is<K: Kernel + ?Sized>(kernel: &K, n: usize, stream: &SeedStream) -> Result<ParticleSystem> {
    if kernel.horizon() != 1 {
        return Err(SmcError::InvalidArgument("importance sampling needs a single-step target"));
    }
    run_sis(kernel, n, stream)
}
