//! Twisted targets `γ_t = γ̃_{1:t} ψ_t`, the analytic lookahead twist of the
//! running example, fully adapted SMC and the iterated auxiliary particle filter.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{run_smc, Guided, Kernel, ParticleSystem, Proposal, SmcConfig, Target};
use crate::error::{Result, SmcError};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::models::NonMarkovGauss;
use crate::rng::{tag, Draws, SeedStream};
use crate::special::{norm_logpdf, LN_2PI};

/// Log twisting potential `log ψ_t` of a base-target state at step `t < T`.
pub trait Twist: Sync {
    fn log_psi(&self, t: usize, state: &[f64]) -> f64;
}

impl<W: Twist + ?Sized> Twist for &W {
    fn log_psi(&self, t: usize, state: &[f64]) -> f64 {
        (**self).log_psi(t, state)
    }
}

/// Base target reshaped by a twist; `ψ_0 = ψ_T = 1`. States carry the base
/// state followed by `log ψ_t`.
#[derive(Clone, Debug)]
pub struct TwistedTarget<T, W> {
    pub base: T,
    pub twist: W,
}

impl<T: Target, W: Twist> TwistedTarget<T, W> {
    pub fn new(base: T, twist: W) -> Self {
        TwistedTarget { base, twist }
    }
}

impl<T: Target, W: Twist> Target for TwistedTarget<T, W> {
    fn horizon(&self) -> usize {
        self.base.horizon()
    }
    fn point_dim(&self) -> usize {
        self.base.point_dim()
    }
    fn state_dim(&self) -> usize {
        self.base.state_dim() + 1
    }
    #[inline]
    fn extend(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        let bsd = self.base.state_dim();
        let inc = self.base.extend(t, prev.map(|p| &p[..bsd]), &mut state[..bsd]);
        let lp = if t == self.base.horizon() { 0.0 } else { self.twist.log_psi(t, &state[..bsd]) };
        state[bsd] = lp;
        inc + lp - prev.map_or(0.0, |p| p[bsd])
    }
}

// ------------------------------------------------------- lookahead twist

#[derive(Clone, Debug)]
struct Lookahead {
    a0: Vec<f64>,
    a1: Vec<f64>,
    chol: Cholesky,
    // hᵀC⁻¹h, hᵀC⁻¹a1, and hᵀC⁻¹y_fut per replica, with h = a0 + a1
    s3: f64,
    s2: f64,
    s1: Vec<f64>,
}

/// `ψ_t = p(y_{t+1:t+L} | x_{1:t})` for [`NonMarkovGauss`]. With `L >= T` this
/// is the optimal twist `p(y_{t+1:T} | x_{1:t})`; `L = 1` gives the locally
/// optimal one.
#[derive(Clone, Debug)]
pub struct LookaheadTwist<'a> {
    model: &'a NonMarkovGauss,
    steps: Vec<Option<Lookahead>>,
}

impl<'a> LookaheadTwist<'a> {
    pub fn new(model: &'a NonMarkovGauss, lookahead: usize) -> Result<Self> {
        let t_len = model.horizon();
        let (phi, beta) = (model.phi, model.beta);
        let mut steps = Vec::with_capacity(t_len);
        for t in 1..=t_len {
            let m = lookahead.min(t_len - t);
            if m == 0 {
                steps.push(None);
                continue;
            }
            let pw = |b: f64, e: usize| libm::pow(b, e as f64);
            // future index k = t + 1 + a, a in 0..m
            let a0: Vec<f64> = (0..m).map(|a| (0..=a).map(|b| pw(beta, a - b) * pw(phi, b + 1)).sum()).collect();
            let a1: Vec<f64> = (0..m).map(|a| pw(beta, a + 1)).collect();
            let l = Matrix::from_fn(m, m, |a, c| if c <= a { (c..=a).map(|j| pw(beta, a - j) * pw(phi, j - c)).sum() } else { 0.0 });
            let cov = l.matmul(&l.transpose()).scale(model.q).add(&Matrix::identity(m).scale(model.r)).symmetrize();
            let chol = cov.cholesky()?;
            let h: Vec<f64> = a0.iter().zip(&a1).map(|(x, y)| x + y).collect();
            let cih = chol.solve(&h);
            let s1 = (0..model.d)
                .map(|j| {
                    let yf: Vec<f64> = (0..m).map(|a| model.obs(t + 1 + a)[j]).collect();
                    dot(&cih, &yf)
                })
                .collect();
            steps.push(Some(Lookahead { s3: dot(&cih, &h), s2: dot(&cih, &a1), s1, a0, a1, chol }));
        }
        Ok(LookaheadTwist { model, steps })
    }

    pub fn optimal(model: &'a NonMarkovGauss) -> Result<Self> {
        Self::new(model, model.horizon())
    }

    pub fn model(&self) -> &NonMarkovGauss {
        self.model
    }

    /// Precision contribution and linear terms of `log ψ_t` as a function of
    /// `x_t` for replica `j`, given the previous memory `mu_prev`.
    #[inline]
    fn quad_terms(&self, t: usize, j: usize, mu_prev: f64) -> (f64, f64) {
        match &self.steps[t - 1] {
            None => (0.0, 0.0),
            Some(s) => (s.s3, s.s1[j] - self.model.beta * mu_prev * s.s2),
        }
    }
}

impl Twist for LookaheadTwist<'_> {
    fn log_psi(&self, t: usize, state: &[f64]) -> f64 {
        let Some(s) = &self.steps[t - 1] else { return 0.0 };
        let d = self.model.d;
        let m = s.a0.len();
        let mut total = 0.0;
        let mut resid = vec![0.0; m];
        for j in 0..d {
            let (x, mu) = (state[j], state[d + j]);
            for a in 0..m {
                resid[a] = self.model.obs(t + 1 + a)[j] - s.a0[a] * x - s.a1[a] * mu;
            }
            total += s.chol.mvn_logpdf(&resid);
        }
        total
    }
}

/// `log ψ*_t(x_{1:t}) = log p(y_{t+1:T} | x_{1:t})`; zero at `t = T`.
pub fn optimal_twist_nmg(model: &NonMarkovGauss, t: usize, path: &[f64]) -> Result<f64> {
    if t == 0 || t > model.horizon() || path.len() != t * model.d {
        return Err(SmcError::InvalidArgument("path does not match step"));
    }
    let d = model.d;
    let mut state = vec![0.0; 2 * d];
    for (k, x) in path.chunks(d).enumerate() {
        for j in 0..d {
            state[d + j] = model.beta * state[d + j] + x[j];
            state[j] = x[j];
        }
        let _ = k;
    }
    if t == model.horizon() {
        return Ok(0.0);
    }
    Ok(LookaheadTwist::optimal(model)?.log_psi(t, &state))
}

/// Locally optimal proposal for a lookahead-twisted target:
/// `q_t ∝ f_t g_t ψ_t`, Gaussian per replica.
#[derive(Clone, Copy, Debug)]
pub struct TwistedOptimalProposal<'a, 'b> {
    pub twist: &'b LookaheadTwist<'a>,
}

impl TwistedOptimalProposal<'_, '_> {
    #[inline]
    fn moments(&self, t: usize, prev: Option<&[f64]>, j: usize) -> (f64, f64) {
        let m = self.twist.model;
        let (xp, mp) = m.prev_point(prev, j);
        let (s3, lin_psi) = self.twist.quad_terms(t, j, mp);
        let prec = 1.0 / m.q + 1.0 / m.r + s3;
        let lin = m.phi * xp / m.q + (m.obs(t)[j] - m.beta * mp) / m.r + lin_psi;
        (lin / prec, 1.0 / prec)
    }
}

impl Proposal for TwistedOptimalProposal<'_, '_> {
    #[inline]
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let mut lq = 0.0;
        for (j, x) in point.iter_mut().enumerate() {
            let (mean, var) = self.moments(t, prev, j);
            let z = draws.normal();
            *x = mean + libm::sqrt(var) * z;
            lq += -0.5 * (LN_2PI + libm::log(var)) - 0.5 * z * z;
        }
        Ok(lq)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        Ok(point
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let (mean, var) = self.moments(t, prev, j);
                norm_logpdf(x, mean, var)
            })
            .sum())
    }
}

/// Twisted target with the optimal twist plus its locally optimal proposal:
/// every run returns `log Z` exactly.
pub fn zero_variance_kernel<'a, 'b>(
    twist: &'b LookaheadTwist<'a>,
) -> Guided<TwistedTarget<&'a NonMarkovGauss, &'b LookaheadTwist<'a>>, TwistedOptimalProposal<'a, 'b>> {
    Guided::new(TwistedTarget::new(twist.model, twist), TwistedOptimalProposal { twist })
}

// ------------------------------------------------------ fully adapted SMC

/// One fully adapted step for replica-wise Gaussian models: the proposal
/// moments `p(x_t | x_{1:t-1}, y_t)` and, for the state `cur` at step `t`,
/// the weight `log p(y_{t+1} | x_{1:t})` (plus `log p(y_1)` at `t = 1`, zero
/// predictive at `t = T`).
pub fn fully_adapted_step(model: &NonMarkovGauss, t: usize, prev: Option<&[f64]>, cur: &[f64]) -> (Vec<(f64, f64)>, f64) {
    let d = model.d;
    let moments = (0..d).map(|j| model.optimal_moments(t, prev, j)).collect();
    let mut lw = 0.0;
    for j in 0..d {
        if t == 1 {
            lw += norm_logpdf(model.obs(1)[j], 0.0, model.q + model.r);
        }
        if t < model.horizon() {
            let pred = model.phi * cur[j] + model.beta * cur[d + j];
            lw += norm_logpdf(model.obs(t + 1)[j], pred, model.q + model.r);
        }
    }
    (moments, lw)
}

/// Fully adapted SMC for [`NonMarkovGauss`]: weights depend on the history only.
#[derive(Clone, Copy, Debug)]
pub struct FullyAdaptedKernel<'a>(pub &'a NonMarkovGauss);

impl FullyAdaptedKernel<'_> {
    fn fill_memory(&self, prev: Option<&[f64]>, out: &mut [f64]) {
        let m = self.0;
        for j in 0..m.d {
            out[m.d + j] = m.obs_mean(m.prev_point(prev, j).1, out[j]);
        }
    }
}

impl Kernel for FullyAdaptedKernel<'_> {
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn point_dim(&self) -> usize {
        self.0.d
    }
    fn state_dim(&self) -> usize {
        2 * self.0.d
    }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let m = self.0;
        for j in 0..m.d {
            let (mean, var) = m.optimal_moments(t, prev, j);
            out[j] = mean + libm::sqrt(var) * draws.normal();
        }
        self.fill_memory(prev, out);
        Ok(fully_adapted_step(m, t, prev, out).1)
    }
    fn reweight(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64]) -> Result<f64> {
        self.fill_memory(prev, out);
        Ok(fully_adapted_step(self.0, t, prev, out).1)
    }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> Result<f64> {
        // locally twisted targets: the base ratio over ψ_{t-1} = p(y_t | x_{1:t-1})
        let m = self.0;
        let d = m.d;
        let log_psi: f64 = (0..d).map(|j| norm_logpdf(m.obs(t)[j], m.phi * prev[j] + m.beta * prev[d + j], m.q + m.r)).sum();
        Ok(m.splice_log_ratio(t, prev, tail) - log_psi)
    }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> {
        Ok(Target::log_gamma(self.0, path))
    }
}

// ---------------------------------------------------------- iterated APF

/// `log ψ̃(x) = -½ Σ_j Λ_j x_j² + Σ_j ι_j x_j + c` (diagonal `Λ`).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticPotential {
    pub lambda: Vec<f64>,
    pub iota: Vec<f64>,
    pub c: f64,
}

impl QuadraticPotential {
    pub fn zero(d: usize) -> Self {
        QuadraticPotential { lambda: vec![0.0; d], iota: vec![0.0; d], c: 0.0 }
    }

    #[inline]
    pub fn log_value(&self, x: &[f64]) -> f64 {
        let mut v = self.c;
        for j in 0..self.lambda.len() {
            v += -0.5 * self.lambda[j] * x[j] * x[j] + self.iota[j] * x[j];
        }
        v
    }
}

/// `log E_{N(mu, var)}[ψ̃]` (independent components).
#[inline]
pub fn twist_expectation(pot: &QuadraticPotential, mu: &[f64], var: &[f64]) -> Result<f64> {
    let mut v = pot.c;
    for j in 0..mu.len() {
        let prec = 1.0 / var[j] + pot.lambda[j];
        if !(prec > 0.0) {
            return Err(SmcError::Numerical("twisted precision is not positive"));
        }
        let sh = 1.0 / prec;
        let mh = sh * (mu[j] / var[j] + pot.iota[j]);
        v += 0.5 * libm::log(sh / var[j]) + 0.5 * mh * mh / sh - 0.5 * mu[j] * mu[j] / var[j];
    }
    Ok(v)
}

/// Moments of `N(mu, var) ψ̃ / E[ψ̃]`.
#[inline]
pub fn twisted_proposal(pot: &QuadraticPotential, mu: &[f64], var: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut m = Vec::with_capacity(mu.len());
    let mut s = Vec::with_capacity(mu.len());
    for j in 0..mu.len() {
        let prec = 1.0 / var[j] + pot.lambda[j];
        if !(prec > 0.0) {
            return Err(SmcError::Numerical("twisted precision is not positive"));
        }
        s.push(1.0 / prec);
        m.push((mu[j] / var[j] + pot.iota[j]) / prec);
    }
    Ok((m, s))
}

/// `ψ_t(x_{1:t}) = E_{f_{t+1}}[ψ̃_{t+1}]` for the running-example transition.
#[derive(Clone, Copy, Debug)]
pub struct IapfTwist<'a> {
    pub model: &'a NonMarkovGauss,
    /// `ψ̃_1, ..., ψ̃_T`.
    pub potentials: &'a [QuadraticPotential],
}

impl IapfTwist<'_> {
    fn transition(&self, prev: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let m = self.model;
        ((0..m.d).map(|j| m.phi * m.prev_point(prev, j).0).collect(), vec![m.q; m.d])
    }
}

impl Twist for IapfTwist<'_> {
    fn log_psi(&self, t: usize, state: &[f64]) -> f64 {
        let (mu, var) = self.transition(Some(state));
        twist_expectation(&self.potentials[t], &mu, &var).unwrap_or(f64::NEG_INFINITY)
    }
}

/// `q_t ∝ f_t ψ̃_t`.
#[derive(Clone, Copy, Debug)]
pub struct IapfProposal<'a>(pub IapfTwist<'a>);

impl Proposal for IapfProposal<'_> {
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let (mu, var) = self.0.transition(prev);
        let (m, s) = twisted_proposal(&self.0.potentials[t - 1], &mu, &var)?;
        let mut lq = 0.0;
        for j in 0..m.len() {
            let z = draws.normal();
            point[j] = m[j] + libm::sqrt(s[j]) * z;
            lq += -0.5 * (LN_2PI + libm::log(s[j])) - 0.5 * z * z;
        }
        Ok(lq)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        let (mu, var) = self.0.transition(prev);
        let (m, s) = twisted_proposal(&self.0.potentials[t - 1], &mu, &var)?;
        Ok((0..m.len()).map(|j| norm_logpdf(point[j], m[j], s[j])).sum())
    }
}

pub type IapfKernel<'a> = Guided<TwistedTarget<&'a NonMarkovGauss, IapfTwist<'a>>, IapfProposal<'a>>;

pub fn iapf_kernel<'a>(model: &'a NonMarkovGauss, potentials: &'a [QuadraticPotential]) -> IapfKernel<'a> {
    let tw = IapfTwist { model, potentials };
    Guided::new(TwistedTarget::new(model, tw), IapfProposal(tw))
}

/// Weighted least squares of `values` on per-dimension `(x², x)` plus an
/// intercept, returned as a potential. Ridge `1e-8 · trace` when singular.
pub fn fit_quadratic(points: &[&[f64]], values: &[f64], weights: &[f64], d: usize) -> QuadraticPotential {
    let p = 2 * d + 1;
    let feat = |x: &[f64]| {
        let mut f = Vec::with_capacity(p);
        for j in 0..d {
            f.push(x[j] * x[j]);
            f.push(x[j]);
        }
        f.push(1.0);
        f
    };
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for ((x, &v), &w) in points.iter().zip(values).zip(weights) {
        if w == 0.0 || !v.is_finite() {
            continue;
        }
        let f = feat(x);
        for a in 0..p {
            xty[a] += w * f[a] * v;
            for b in 0..p {
                xtx[(a, b)] += w * f[a] * f[b];
            }
        }
    }
    let beta = match xtx.cholesky() {
        Ok(c) if c.factor().as_slice().iter().all(|v| v.is_finite()) && min_diag(&c) > 1e-12 * max_diag(&c) => c.solve(&xty),
        _ => {
            let ridge = 1e-8 * xtx.trace().max(1e-300);
            let reg = xtx.add(&Matrix::identity(p).scale(ridge));
            match reg.cholesky() {
                Ok(c) => c.solve(&xty),
                Err(_) => vec![0.0; p],
            }
        }
    };
    let mut pot = QuadraticPotential::zero(d);
    for j in 0..d {
        pot.lambda[j] = (-2.0 * beta[2 * j]).max(0.0);
        pot.iota[j] = beta[2 * j + 1];
    }
    pot.c = beta[p - 1];
    pot
}

fn min_diag(c: &Cholesky) -> f64 {
    (0..c.dim()).map(|i| c.factor()[(i, i)]).fold(f64::INFINITY, f64::min)
}
fn max_diag(c: &Cholesky) -> f64 {
    (0..c.dim()).map(|i| c.factor()[(i, i)]).fold(0.0, f64::max)
}

/// Backward refit of `ψ̃_T, ..., ψ̃_1` from a completed twisted run.
pub fn iapf_update(model: &NonMarkovGauss, system: &ParticleSystem) -> Result<Vec<QuadraticPotential>> {
    let t_len = model.horizon();
    let d = model.d;
    if system.steps() != t_len {
        return Err(SmcError::InvalidArgument("run must be complete"));
    }
    let mut pots = vec![QuadraticPotential::zero(d); t_len];
    for t in (1..=t_len).rev() {
        let n = system.n();
        let mut pts: Vec<&[f64]> = Vec::with_capacity(n);
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let s = system.state(t, i);
            let mut v: f64 = (0..d).map(|j| norm_logpdf(model.obs(t)[j], s[d + j], model.r)).sum();
            if t < t_len {
                let mu: Vec<f64> = (0..d).map(|j| model.phi * s[j]).collect();
                v += twist_expectation(&pots[t], &mu, &vec![model.q; d])?;
            }
            pts.push(&s[..d]);
            vals.push(v);
        }
        pots[t - 1] = fit_quadratic(&pts, &vals, system.weights_at(t), d);
    }
    Ok(pots)
}

#[derive(Clone, Debug)]
pub struct IapfResult {
    pub potentials: Vec<QuadraticPotential>,
    pub system: ParticleSystem,
    pub log_z_history: Vec<f64>,
}

/// Alternates twisted SMC runs (stream `fork(SWEEP, k)`) and [`iapf_update`]
/// until `|Δ log Ẑ| < tolerance` or `sweeps` runs.
pub fn run_iapf(model: &NonMarkovGauss, config: SmcConfig, sweeps: usize, tolerance: f64, stream: &SeedStream) -> Result<IapfResult> {
    if sweeps == 0 {
        return Err(SmcError::InvalidArgument("need at least one sweep"));
    }
    let mut pots = vec![QuadraticPotential::zero(model.d); model.horizon()];
    let mut hist = Vec::new();
    let mut last = None;
    for k in 0..sweeps {
        let kernel = iapf_kernel(model, &pots);
        let sys = run_smc(&kernel, config, &stream.fork(tag::SWEEP, k as u32, 0))?;
        hist.push(sys.log_z());
        let new = iapf_update(model, &sys)?;
        pots = new;
        last = Some(sys);
        if k > 0 && libm::fabs(hist[k] - hist[k - 1]) < tolerance {
            break;
        }
    }
    Ok(IapfResult { potentials: pots, system: last.expect("at least one sweep"), log_z_history: hist })
}
