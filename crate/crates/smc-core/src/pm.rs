//! Pseudo-marginal machinery: Metropolis-Hastings, particle marginal MH,
//! particle independent MH, correlated seeds, the Poisson estimator,
//! random-weights SMC, nested SMC and a proper-weighting check.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{run_smc, Kernel, SmcConfig, StateSpace, Target};
use crate::error::{Result, SmcError};
use crate::logspace::log_sum_exp;
use crate::models::NonMarkovGauss;
use crate::parallel::{try_map, Executor};
use crate::resampling::{self, ResamplingScheme};
use crate::rng::{tag, Address, Draws, SeedStream};
use crate::special::{norm_logpdf, poisson_from_uniform};
use crate::stats;

/// MCMC output: one row of `dim` values per iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub dim: usize,
    pub theta: Vec<f64>,
    /// Log target (MH) or `log Ẑ` (pseudo-marginal) of the current state.
    pub log_z: Vec<f64>,
    pub accepted: Vec<bool>,
}

impl Chain {
    fn with_capacity(dim: usize, iters: usize) -> Self {
        Chain { dim, theta: Vec::with_capacity(dim * iters), log_z: Vec::with_capacity(iters), accepted: Vec::with_capacity(iters) }
    }
    fn push(&mut self, theta: &[f64], log_z: f64, accepted: bool) {
        self.theta.extend_from_slice(theta);
        self.log_z.push(log_z);
        self.accepted.push(accepted);
    }
    pub fn len(&self) -> usize {
        self.log_z.len()
    }
    pub fn is_empty(&self) -> bool {
        self.log_z.is_empty()
    }
    pub fn row(&self, j: usize) -> &[f64] {
        &self.theta[j * self.dim..(j + 1) * self.dim]
    }
    pub fn series(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.theta[j * self.dim + k]).collect()
    }
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.len().max(1) as f64
    }
}

/// `min(1, exp(log_ratio))`; a NaN ratio never accepts.
#[inline]
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        libm::exp(log_ratio)
    }
}

#[inline]
fn accept(stream: &SeedStream, iter: usize, log_ratio: f64) -> bool {
    let u = stream.uniform(Address::new(tag::MH_ACCEPT, iter as u32, 0, 0));
    u < acceptance_probability(log_ratio)
}

#[inline]
fn propose(stream: &SeedStream, iter: usize, theta: &[f64], step_sd: f64, out: &mut [f64]) {
    for (k, (o, t)) in out.iter_mut().zip(theta).enumerate() {
        *o = t + step_sd * stream.normal(Address::new(tag::MH, iter as u32, k as u32, 0));
    }
}

/// Random-walk Metropolis with proposal `N(θ, step_sd² I)`. Iteration `j`
/// (1-based) uses normals at `(MH, j, k)` and the uniform at `(MH_ACCEPT, j)`.
pub fn mh_run(logpost: impl Fn(&[f64]) -> f64, step_sd: f64, theta0: &[f64], iters: usize, stream: &SeedStream) -> Chain {
    let mut chain = Chain::with_capacity(theta0.len(), iters);
    let mut theta = theta0.to_vec();
    let mut lp = logpost(&theta);
    let mut prop = theta.clone();
    for j in 1..=iters {
        propose(stream, j, &theta, step_sd, &mut prop);
        let lq = logpost(&prop);
        let ok = accept(stream, j, lq - lp);
        if ok {
            theta.copy_from_slice(&prop);
            lp = lq;
        }
        chain.push(&theta, lp, ok);
    }
    chain
}

/// Seed for iteration `j`: fresh, or a Crank-Nicolson move from `current`.
pub fn crank_nicolson_seed(current: &SeedStream, rho: f64, stream: &SeedStream, iter: usize) -> SeedStream {
    let fresh = stream.fork(tag::PM_SEED, iter as u32, 0);
    if rho == 0.0 {
        fresh
    } else {
        current.crank_nicolson(rho, &fresh)
    }
}

/// Particle marginal MH. `estimator(θ, u)` returns `log Ẑ(θ, u)`; each
/// proposal gets a fresh seed `fork(PM_SEED, j)` or, with `rho`, a
/// Crank-Nicolson move of the current seed. Estimator failures reject.
pub fn pmmh_run(
    log_prior: impl Fn(&[f64]) -> f64,
    estimator: impl Fn(&[f64], &SeedStream) -> Result<f64>,
    step_sd: f64,
    theta0: &[f64],
    iters: usize,
    rho: Option<f64>,
    stream: &SeedStream,
) -> Result<Chain> {
    let mut chain = Chain::with_capacity(theta0.len(), iters);
    let mut theta = theta0.to_vec();
    let mut seed = stream.fork(tag::PM_SEED, 0, 0);
    let mut lz = estimator(&theta, &seed)?;
    let mut lp = log_prior(&theta);
    if !(lp + lz).is_finite() {
        return Err(SmcError::InvalidArgument("initial parameter has zero posterior mass"));
    }
    let mut prop = theta.clone();
    for j in 1..=iters {
        propose(stream, j, &theta, step_sd, &mut prop);
        let lpp = log_prior(&prop);
        let useed = crank_nicolson_seed(&seed, rho.unwrap_or(0.0), stream, j);
        let ok = if lpp == f64::NEG_INFINITY {
            false
        } else {
            match estimator(&prop, &useed) {
                Ok(lzp) => {
                    let ok = accept(stream, j, lzp + lpp - lz - lp);
                    if ok {
                        theta.copy_from_slice(&prop);
                        lz = lzp;
                        lp = lpp;
                        seed = useed;
                    }
                    ok
                }
                Err(e) => {
                    log::warn!("estimator failed at iteration {j}: {e}");
                    false
                }
            }
        };
        chain.push(&theta, lz, ok);
    }
    Ok(chain)
}

/// Particle independent MH: each iteration proposes a fresh SMC run on
/// `fork(PM_SEED, j)` and a path drawn from it, accepted with `min(1, Ẑ'/Ẑ)`.
/// Rows of the chain are paths.
pub fn pimh_run<K: Kernel + ?Sized>(kernel: &K, config: SmcConfig, iters: usize, stream: &SeedStream) -> Result<Chain> {
    let s0 = stream.fork(tag::PM_SEED, 0, 0);
    let sys = run_smc(kernel, config, &s0)?;
    let mut path = sys.sample_trajectory(&s0).1;
    let mut lz = sys.log_z();
    let mut chain = Chain::with_capacity(path.len(), iters);
    for j in 1..=iters {
        let s = stream.fork(tag::PM_SEED, j as u32, 0);
        let ok = match run_smc(kernel, config, &s) {
            Ok(sys) => {
                let ok = accept(stream, j, sys.log_z() - lz);
                if ok {
                    path = sys.sample_trajectory(&s).1;
                    lz = sys.log_z();
                }
                ok
            }
            Err(e) => {
                log::warn!("SMC failed at iteration {j}: {e}");
                false
            }
        };
        chain.push(&path, lz, ok);
    }
    Ok(chain)
}

// ----------------------------------------------------- random weights

/// `e^{λ_p} ∏_{j ≤ κ} Φ̂_j / λ_p` with `κ ~ Poisson(λ_p)`, returned as
/// `(sign, log |value|)`. `phi_hat` draws one unbiased estimate of `Φ`.
pub fn poisson_estimator(mut phi_hat: impl FnMut(&mut Draws) -> f64, lambda_p: f64, draws: &mut Draws) -> (f64, f64) {
    let kappa = poisson_from_uniform(lambda_p, draws.uniform());
    let mut sign = 1.0;
    let mut log_abs = lambda_p;
    for _ in 0..kappa {
        let v = phi_hat(draws) / lambda_p;
        if v < 0.0 {
            sign = -sign;
        }
        log_abs += libm::log(libm::fabs(v));
    }
    (sign, log_abs)
}

/// Bootstrap SMC whose potential `exp(Φ_t)` is replaced by an unbiased
/// estimate. `estimator(t, Φ_t, draws)` returns `(sign, log |ĝ|)` given the
/// exact value reported by the model's `observe`.
#[derive(Clone, Copy, Debug)]
pub struct RandomWeightKernel<M, E> {
    pub model: M,
    pub estimator: E,
}

impl<M, E> Kernel for RandomWeightKernel<M, E>
where
    M: StateSpace,
    E: Fn(usize, f64, &mut Draws) -> (f64, f64) + Sync,
{
    fn horizon(&self) -> usize {
        self.model.horizon()
    }
    fn point_dim(&self) -> usize {
        self.model.point_dim()
    }
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let pd = self.model.point_dim();
        self.model.sample_transition(t, prev, &mut out[..pd], draws);
        let phi = self.model.observe(t, prev, out);
        let (sign, lw) = (self.estimator)(t, phi, draws);
        if sign < 0.0 && lw > f64::NEG_INFINITY {
            return Err(SmcError::NegativeWeight { step: t });
        }
        Ok(lw)
    }
}

/// Random-weights SMC with the Poisson estimator on `Φ̂ = Φ U`, `U ~ U(0.5, 1.5)`.
pub fn poisson_rw_kernel<M: StateSpace>(model: M, lambda_p: f64) -> RandomWeightKernel<M, impl Fn(usize, f64, &mut Draws) -> (f64, f64) + Sync + Copy> {
    RandomWeightKernel {
        model,
        estimator: move |_t: usize, phi: f64, d: &mut Draws| poisson_estimator(|d| phi * (0.5 + d.uniform()), lambda_p, d),
    }
}

// ---------------------------------------------------------- nested SMC

/// Outer SMC move on a replicated model whose proposal is an inner SMC over
/// the `d` components of `x_t` (`m` inner particles, prior proposals,
/// systematic resampling every component). The outer weight is the inner
/// normalizer estimate `∏_k (1/m) Σ_j ν_k^j`.
#[derive(Clone, Copy, Debug)]
pub struct NestedSmcKernel<'a> {
    pub model: &'a NonMarkovGauss,
    pub m: usize,
}

impl<'a> NestedSmcKernel<'a> {
    pub fn new(model: &'a NonMarkovGauss, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(SmcError::InvalidArgument("need at least one inner particle"));
        }
        if model.terminal_likelihood {
            return Err(SmcError::Unsupported("nested SMC needs per-step likelihoods"));
        }
        Ok(NestedSmcKernel { model, m })
    }
}

impl Kernel for NestedSmcKernel<'_> {
    fn horizon(&self) -> usize {
        self.model.horizon()
    }
    fn point_dim(&self) -> usize {
        self.model.d
    }
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let md = self.model;
        let (d, m) = (md.d, self.m);
        let s = draws.substream();
        let sq = libm::sqrt(md.q);
        let y = md.obs(t);
        // inner particles hold x_{t,1:k}
        let mut xs = vec![0.0; m * d];
        let mut xs2 = xs.clone();
        let mut lw = vec![0.0; m];
        let mut wbar = vec![0.0; m];
        let mut anc = vec![0usize; m];
        let mut total = 0.0;
        for k in 0..d {
            if k > 0 {
                resampling::resample(ResamplingScheme::Systematic, &wbar, &s, k as u32, &mut anc)?;
                for (j, &a) in anc.iter().enumerate() {
                    xs2[j * d..j * d + k].copy_from_slice(&xs[a * d..a * d + k]);
                }
                core::mem::swap(&mut xs, &mut xs2);
            }
            let (xp, mp) = md.prev_point(prev, k);
            for j in 0..m {
                let x = md.phi * xp + sq * s.normal(Address::new(tag::PROPOSE, k as u32 + 1, j as u32, 0));
                xs[j * d + k] = x;
                lw[j] = norm_logpdf(y[k], md.beta * mp + x, md.r);
            }
            let lse = log_sum_exp(&lw)?;
            if lse == f64::NEG_INFINITY {
                log::warn!("nested SMC degenerate at step {t}, component {}", k + 1);
                return Ok(f64::NEG_INFINITY);
            }
            for j in 0..m {
                wbar[j] = libm::exp(lw[j] - lse);
            }
            total += lse - libm::log(m as f64);
        }
        let cum = resampling::cumulative(&wbar)?;
        let pick = resampling::search(&cum, s.uniform(Address::new(tag::TRAJECTORY, 0, 0, 0)));
        out[..d].copy_from_slice(&xs[pick * d..(pick + 1) * d]);
        md.observe(t, prev, out);
        Ok(total)
    }
}

/// Outer SMC with [`NestedSmcKernel`] moves.
pub fn run_nsmc(model: &NonMarkovGauss, n: usize, m: usize, scheme: ResamplingScheme, stream: &SeedStream) -> Result<crate::engine::ParticleSystem> {
    let k = NestedSmcKernel::new(model, m)?;
    run_smc(&k, SmcConfig::always(n, scheme), stream)
}

// ------------------------------------------------------ proper weighting

/// z-scores of `(1/R) Σ_r w_r f(x_r)` against `oracle[f]` for each test
/// function. Rep `r` draws its pair from `fork(REPLICATE, r, 0)`; the sampler
/// returns `(x, log w)`.
pub fn proper_weighting_check<S, E>(
    sampler: S,
    fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    oracle: &[f64],
    reps: usize,
    exec: &E,
    stream: &SeedStream,
) -> Result<Vec<f64>>
where
    S: Fn(&SeedStream) -> Result<(Vec<f64>, f64)> + Sync,
    E: Executor,
{
    if fs.len() != oracle.len() {
        return Err(SmcError::InvalidArgument("need one oracle value per test function"));
    }
    let pairs = try_map(exec, reps, |r| sampler(&stream.fork(tag::REPLICATE, r as u32, 0)))?;
    Ok(fs
        .iter()
        .zip(oracle)
        .map(|(f, &truth)| {
            let v: Vec<f64> = pairs.iter().map(|(x, lw)| libm::exp(*lw) * f(x)).collect();
            stats::z_score(&v, truth)
        })
        .collect())
}
