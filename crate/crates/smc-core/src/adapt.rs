//! Proposal learning for the running-example model: variational SMC with
//! reparameterized gradients, inclusive-KL adaptive SMC, and an amortized map
//! from data features to proposal parameters.
//!
//! The family at step `t` has parameters `λ_t = (a, b, c, d, s)`:
//! `x_t = a φ x_{t-1} + b y_t + d β μ_{t-1} + c + exp(s) ε`, per replica.
//! The `d` coefficient lets the family contain the locally optimal proposal.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{run_smc, Guided, ParticleSystem, Proposal, SmcConfig};
use crate::error::{Result, SmcError};
use crate::logspace::log_sum_exp;
use crate::models::NonMarkovGauss;
use crate::resampling::{self, ResamplingScheme};
use crate::rng::{tag, Draws, SeedStream};
use crate::special::{norm_logpdf, LN_2PI};

pub const PARAMS_PER_STEP: usize = 5;
const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const S: usize = 4;

/// Per-step affine-Gaussian proposal parameters, `5 T` values.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGaussianFamily {
    pub params: Vec<f64>,
}

impl AffineGaussianFamily {
    /// The transition density `f_t`.
    pub fn prior(model: &NonMarkovGauss) -> Self {
        let mut p = vec![0.0; PARAMS_PER_STEP * model.horizon()];
        for l in p.chunks_mut(PARAMS_PER_STEP) {
            l[A] = 1.0;
            l[S] = 0.5 * libm::log(model.q);
        }
        AffineGaussianFamily { params: p }
    }

    /// The locally optimal proposal `p(x_t | x_{1:t-1}, y_t)`.
    pub fn optimal(model: &NonMarkovGauss) -> Self {
        let (q, r) = (model.q, model.r);
        let mut p = vec![0.0; PARAMS_PER_STEP * model.horizon()];
        for l in p.chunks_mut(PARAMS_PER_STEP) {
            l[A] = r / (q + r);
            l[B] = q / (q + r);
            l[D] = -q / (q + r);
            l[S] = 0.5 * libm::log(q * r / (q + r));
        }
        AffineGaussianFamily { params: p }
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.params[(t - 1) * PARAMS_PER_STEP..t * PARAMS_PER_STEP]
    }

    pub fn proposal<'a>(&'a self, model: &'a NonMarkovGauss) -> AffineProposal<'a> {
        AffineProposal { model, params: &self.params }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AffineProposal<'a> {
    pub model: &'a NonMarkovGauss,
    pub params: &'a [f64],
}

impl AffineProposal<'_> {
    #[inline]
    fn mean(&self, t: usize, prev: Option<&[f64]>, j: usize) -> (f64, f64) {
        let l = &self.params[(t - 1) * PARAMS_PER_STEP..t * PARAMS_PER_STEP];
        let m = self.model;
        let (xp, mp) = m.prev_point(prev, j);
        (l[A] * m.phi * xp + l[B] * m.obs(t)[j] + l[D] * m.beta * mp + l[C], l[S])
    }
}

impl Proposal for AffineProposal<'_> {
    #[inline]
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let mut lq = 0.0;
        for (j, x) in point.iter_mut().enumerate() {
            let (m, s) = self.mean(t, prev, j);
            let z = draws.normal();
            *x = m + libm::exp(s) * z;
            lq += -0.5 * LN_2PI - s - 0.5 * z * z;
        }
        Ok(lq)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        Ok(point
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let (m, s) = self.mean(t, prev, j);
                norm_logpdf(x, m, libm::exp(2.0 * s))
            })
            .sum())
    }
}

/// `log Ẑ` of an SMC run under the family: the ELBO estimate.
pub fn elbo_estimate(model: &NonMarkovGauss, family: &AffineGaussianFamily, config: SmcConfig, stream: &SeedStream) -> Result<f64> {
    Ok(run_smc(&Guided::new(model, family.proposal(model)), config, stream)?.log_z())
}

/// Output of the gradient runner.
#[derive(Clone, Debug)]
pub struct VsmcSample {
    pub log_z: f64,
    pub grad: Vec<f64>,
    /// Ancestor indices, `T x N`; row 1 is the identity.
    pub ancestors: Vec<u32>,
}

/// SMC with every-step resampling that carries tangents `∂x/∂λ`, `∂μ/∂λ`
/// along each particle and returns `Σ_t Σ_i W̄_t^i ∇ log w_t^i`. The gradient
/// of the resampling step is ignored. Passing `frozen` ancestors (from an
/// earlier call) replays that resampling outcome exactly.
pub fn vsmc_gradient(
    model: &NonMarkovGauss,
    family: &AffineGaussianFamily,
    n: usize,
    scheme: ResamplingScheme,
    stream: &SeedStream,
    frozen: Option<&[u32]>,
) -> Result<VsmcSample> {
    let t_len = model.horizon();
    let d = model.d;
    let p = family.params.len();
    if p != PARAMS_PER_STEP * t_len {
        return Err(SmcError::InvalidArgument("parameter vector must have 5 entries per step"));
    }
    if n == 0 {
        return Err(SmcError::InvalidArgument("need at least one particle"));
    }
    let (phi, q, beta, r) = (model.phi, model.q, model.beta, model.r);
    let nd = n * d;
    let mut x = vec![0.0; nd];
    let mut mu = vec![0.0; nd];
    let mut dx = vec![0.0; nd * p];
    let mut dmu = vec![0.0; nd * p];
    let (mut x2, mut mu2, mut dx2, mut dmu2) = (x.clone(), mu.clone(), dx.clone(), dmu.clone());
    let mut logw = vec![0.0; n];
    let mut dlogw = vec![0.0; n * p];
    let mut wbar = vec![1.0 / n as f64; n];
    let mut anc = vec![0usize; n];
    let mut all_anc = Vec::with_capacity(t_len * n);
    let mut grad = vec![0.0; p];
    let mut log_z = 0.0;
    for t in 1..=t_len {
        if t == 1 {
            anc.iter_mut().enumerate().for_each(|(i, a)| *a = i);
        } else {
            match frozen {
                Some(f) => anc.iter_mut().zip(&f[(t - 1) * n..t * n]).for_each(|(a, &b)| *a = b as usize),
                None => resampling::resample(scheme, &wbar, stream, t as u32, &mut anc)
                    .map_err(|_| SmcError::DegenerateWeights { step: t })?,
            }
        }
        all_anc.extend(anc.iter().map(|&a| a as u32));
        // gather parents
        for i in 0..n {
            let a = anc[i];
            for j in 0..d {
                x2[i * d + j] = x[a * d + j];
                mu2[i * d + j] = mu[a * d + j];
                let (src, dst) = ((a * d + j) * p, (i * d + j) * p);
                dx2[dst..dst + p].copy_from_slice(&dx[src..src + p]);
                dmu2[dst..dst + p].copy_from_slice(&dmu[src..src + p]);
            }
        }
        core::mem::swap(&mut x, &mut x2);
        core::mem::swap(&mut mu, &mut mu2);
        core::mem::swap(&mut dx, &mut dx2);
        core::mem::swap(&mut dmu, &mut dmu2);

        let l = family.step(t);
        let sig = libm::exp(l[S]);
        let base = (t - 1) * PARAMS_PER_STEP;
        let y = model.obs(t);
        for i in 0..n {
            let mut draws = stream.draws(tag::PROPOSE, t as u32, i as u32);
            let mut lw = 0.0;
            let g = &mut dlogw[i * p..(i + 1) * p];
            g.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..d {
                let k = i * d + j;
                let (xp, mp) = if t == 1 { (0.0, 0.0) } else { (x[k], mu[k]) };
                let z = draws.normal();
                let xn = l[A] * phi * xp + l[B] * y[j] + l[D] * beta * mp + l[C] + sig * z;
                let mn = beta * mp + xn;
                lw += norm_logpdf(xn, phi * xp, q) + norm_logpdf(y[j], mn, r) - (-0.5 * LN_2PI - l[S] - 0.5 * z * z);
                let tx = &mut dx[k * p..(k + 1) * p];
                let tm = &mut dmu[k * p..(k + 1) * p];
                let cf = -(xn - phi * xp) / q;
                let cg = (y[j] - mn) / r;
                for e in 0..p {
                    let (dxp, dmp) = if t == 1 { (0.0, 0.0) } else { (tx[e], tm[e]) };
                    let mut nx = l[A] * phi * dxp + l[D] * beta * dmp;
                    if e >= base && e < base + PARAMS_PER_STEP {
                        nx += match e - base {
                            A => phi * xp,
                            B => y[j],
                            C => 1.0,
                            D => beta * mp,
                            _ => sig * z,
                        };
                    }
                    let nm = beta * dmp + nx;
                    g[e] += cf * (nx - phi * dxp) + cg * nm;
                    tx[e] = nx;
                    tm[e] = nm;
                }
                g[base + S] += 1.0;
                x[k] = xn;
                mu[k] = mn;
            }
            logw[i] = lw;
        }
        let lse = log_sum_exp(&logw)?;
        if !lse.is_finite() {
            return Err(SmcError::DegenerateWeights { step: t });
        }
        for i in 0..n {
            wbar[i] = libm::exp(logw[i] - lse);
            for e in 0..p {
                grad[e] += wbar[i] * dlogw[i * p + e];
            }
        }
        log_z += lse - libm::log(n as f64);
    }
    Ok(VsmcSample { log_z, grad, ancestors: all_anc })
}

/// Step sizes `α_n = a / (b + n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
}

impl OptimizerConfig {
    /// `α_n = 0.003 / (100 + n)`. Larger steps overshoot: the gradient
    /// that ignores resampling is several times the true slope.
    pub fn new(iterations: usize) -> Self {
        OptimizerConfig { a: 0.003, b: 100.0, iterations }
    }
    #[inline]
    pub fn step(&self, n: usize) -> f64 {
        self.a / (self.b + n as f64)
    }
}

#[derive(Clone, Debug)]
pub struct VsmcTrace {
    pub family: AffineGaussianFamily,
    pub elbo: Vec<f64>,
    pub grad_norm: Vec<f64>,
}

/// Stochastic gradient ascent on the ELBO; iteration `k` uses `fork(OPTIMIZE, k)`.
pub fn vsmc_optimize(
    model: &NonMarkovGauss,
    init: &AffineGaussianFamily,
    opt: OptimizerConfig,
    n: usize,
    scheme: ResamplingScheme,
    stream: &SeedStream,
) -> Result<VsmcTrace> {
    let mut fam = init.clone();
    let mut elbo = Vec::with_capacity(opt.iterations);
    let mut gn = Vec::with_capacity(opt.iterations);
    for k in 0..opt.iterations {
        let s = vsmc_gradient(model, &fam, n, scheme, &stream.fork(tag::OPTIMIZE, k as u32, 0), None)?;
        if s.grad.iter().any(|g| !g.is_finite()) {
            return Err(SmcError::NanGradient { iter: k });
        }
        let a = opt.step(k + 1);
        for (p, g) in fam.params.iter_mut().zip(&s.grad) {
            *p += a * g;
        }
        elbo.push(s.log_z);
        gn.push(libm::sqrt(s.grad.iter().map(|g| g * g).sum::<f64>()));
    }
    Ok(VsmcTrace { family: fam, elbo, grad_norm: gn })
}

/// Score of `log q_t(x_t | x_{1:t-1}; λ)` for one particle: adds into `g`.
fn add_score(model: &NonMarkovGauss, fam: &AffineGaussianFamily, t: usize, prev: Option<&[f64]>, cur: &[f64], w: f64, g: &mut [f64]) {
    let l = fam.step(t);
    let base = (t - 1) * PARAMS_PER_STEP;
    let sig = libm::exp(l[S]);
    for j in 0..model.d {
        let (xp, mp) = model.prev_point(prev, j);
        let m = l[A] * model.phi * xp + l[B] * model.obs(t)[j] + l[D] * model.beta * mp + l[C];
        let z = (cur[j] - m) / sig;
        let dm = z / sig;
        g[base + A] += w * dm * model.phi * xp;
        g[base + B] += w * dm * model.obs(t)[j];
        g[base + C] += w * dm;
        g[base + D] += w * dm * model.beta * mp;
        g[base + S] += w * (z * z - 1.0);
    }
}

/// `-Σ_i W̄_T^i ∇_λ log q(x^i_{1:T}; λ)`, an estimate of the inclusive-KL
/// gradient; descent subtracts it.
pub fn adaptive_gradient(model: &NonMarkovGauss, family: &AffineGaussianFamily, config: SmcConfig, stream: &SeedStream) -> Result<Vec<f64>> {
    let sys = run_smc(&Guided::new(model, family.proposal(model)), config, stream)?;
    Ok(score_from_system(model, family, &sys))
}

fn score_from_system(model: &NonMarkovGauss, family: &AffineGaussianFamily, sys: &ParticleSystem) -> Vec<f64> {
    let mut g = vec![0.0; family.params.len()];
    for i in 0..sys.n() {
        let w = sys.weights()[i];
        if w == 0.0 {
            continue;
        }
        let lin = sys.lineage(i);
        for t in 1..=sys.steps() {
            let prev = if t == 1 { None } else { Some(sys.state(t - 1, lin[t - 2])) };
            add_score(model, family, t, prev, sys.state(t, lin[t - 1]), w, &mut g);
        }
    }
    g.iter_mut().for_each(|v| *v = -*v);
    g
}

/// Adaptive SMC: `λ ← λ − α_n ĝ` with [`adaptive_gradient`]; returns the iterates.
pub fn adaptive_optimize(
    model: &NonMarkovGauss,
    init: &AffineGaussianFamily,
    opt: OptimizerConfig,
    config: SmcConfig,
    stream: &SeedStream,
) -> Result<Vec<AffineGaussianFamily>> {
    let mut fam = init.clone();
    let mut out = Vec::with_capacity(opt.iterations);
    for k in 0..opt.iterations {
        let g = adaptive_gradient(model, &fam, config, &stream.fork(tag::OPTIMIZE, k as u32, 0))?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SmcError::NanGradient { iter: k });
        }
        let a = opt.step(k + 1);
        for (p, v) in fam.params.iter_mut().zip(&g) {
            *p -= a * v;
        }
        out.push(fam.clone());
    }
    Ok(out)
}

// ------------------------------------------------------------- amortized

/// Map from features `(y_t, y_{t+1}, 1)` to the proposal:
/// mean `a φ x_{t-1} + d β μ_{t-1} + w_mean · f`, log std `w_logstd · f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmortizerParams {
    pub a: f64,
    pub d: f64,
    pub w_mean: [f64; 3],
    pub w_logstd: [f64; 3],
}

impl AmortizerParams {
    pub fn prior(q: f64) -> Self {
        AmortizerParams { a: 1.0, d: 0.0, w_mean: [0.0; 3], w_logstd: [0.0, 0.0, 0.5 * libm::log(q)] }
    }

    #[inline]
    fn features(y: &[f64], t: usize, t_len: usize, dim: usize, j: usize) -> [f64; 3] {
        let next = if t < t_len { y[t * dim + j] } else { 0.0 };
        [y[(t - 1) * dim + j], next, 1.0]
    }

    /// `(mean, log std)` of component `j` at step `t`.
    pub fn moments(&self, model: &NonMarkovGauss, t: usize, prev: Option<&[f64]>, j: usize) -> (f64, f64) {
        let f = Self::features(&model.y, t, model.horizon(), model.d, j);
        let (xp, mp) = model.prev_point(prev, j);
        let m = self.a * model.phi * xp + self.d * model.beta * mp + dot3(&self.w_mean, &f);
        (m, dot3(&self.w_logstd, &f))
    }

    pub fn proposal<'a>(&'a self, model: &'a NonMarkovGauss) -> AmortizedProposal<'a> {
        AmortizedProposal { model, params: self }
    }
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug)]
pub struct AmortizedProposal<'a> {
    pub model: &'a NonMarkovGauss,
    pub params: &'a AmortizerParams,
}

impl Proposal for AmortizedProposal<'_> {
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let mut lq = 0.0;
        for (j, x) in point.iter_mut().enumerate() {
            let (m, s) = self.params.moments(self.model, t, prev, j);
            let z = draws.normal();
            *x = m + libm::exp(s) * z;
            lq += -0.5 * LN_2PI - s - 0.5 * z * z;
        }
        Ok(lq)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        Ok(point
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let (m, s) = self.params.moments(self.model, t, prev, j);
                norm_logpdf(x, m, libm::exp(2.0 * s))
            })
            .sum())
    }
}

/// SGD on `-log q(x̄ | ȳ)` over fresh joint draws from `template`'s
/// parameters (step `k` simulates with `fork(OPTIMIZE, k)`). Returns the final
/// map and the per-step losses.
pub fn amortized_fit(
    template: &NonMarkovGauss,
    init: AmortizerParams,
    opt: OptimizerConfig,
    stream: &SeedStream,
) -> Result<(AmortizerParams, Vec<f64>)> {
    let (phi, q, beta, r, dim, t_len) = (template.phi, template.q, template.beta, template.r, template.d, template.horizon());
    let mut p = init;
    let mut losses = Vec::with_capacity(opt.iterations);
    for k in 0..opt.iterations {
        let (x, y) = NonMarkovGauss::simulate(phi, q, beta, r, dim, t_len, &stream.fork(tag::OPTIMIZE, k as u32, 0));
        let mut g = AmortizerParams { a: 0.0, d: 0.0, w_mean: [0.0; 3], w_logstd: [0.0; 3] };
        let mut loss = 0.0;
        for j in 0..dim {
            let mut mp = 0.0;
            for t in 1..=t_len {
                let xp = if t == 1 { 0.0 } else { x[(t - 2) * dim + j] };
                let f = AmortizerParams::features(&y, t, t_len, dim, j);
                let m = p.a * phi * xp + p.d * beta * mp + dot3(&p.w_mean, &f);
                let s = dot3(&p.w_logstd, &f);
                let xv = x[(t - 1) * dim + j];
                let sig = libm::exp(s);
                let z = (xv - m) / sig;
                loss += 0.5 * LN_2PI + s + 0.5 * z * z;
                let dl_dm = -z / sig;
                let dl_ds = 1.0 - z * z;
                g.a += dl_dm * phi * xp;
                g.d += dl_dm * beta * mp;
                for e in 0..3 {
                    g.w_mean[e] += dl_dm * f[e];
                    g.w_logstd[e] += dl_ds * f[e];
                }
                mp = beta * mp + xv;
            }
        }
        let vals = [g.a, g.d, g.w_mean[0], g.w_mean[1], g.w_mean[2], g.w_logstd[0], g.w_logstd[1], g.w_logstd[2]];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(SmcError::NanGradient { iter: k });
        }
        let a = opt.step(k + 1);
        p.a -= a * g.a;
        p.d -= a * g.d;
        for e in 0..3 {
            p.w_mean[e] -= a * g.w_mean[e];
            p.w_logstd[e] -= a * g.w_logstd[e];
        }
        losses.push(loss);
    }
    Ok((p, losses))
}
