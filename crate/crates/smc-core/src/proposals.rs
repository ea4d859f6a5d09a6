//! Proposal constructors: the prior, the closed-form locally optimal proposal,
//! Gaussian approximations (Laplace, linearization, sigma points) and nested IS.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{Kernel, Proposal, StateSpace, Target};
use crate::error::{Result, SmcError};
use crate::linalg::{Cholesky, Matrix};
use crate::logspace::log_sum_exp;
use crate::models::{NonMarkovGauss, PolynomialObsModel};
use crate::resampling;
use crate::rng::{tag, Address, Draws};
use crate::special::{norm_logpdf, LN_2PI};

/// `q_t = f_t`, the transition density.
#[derive(Clone, Debug)]
pub struct PriorProposal<M>(pub M);

impl<M: StateSpace> Proposal for PriorProposal<M> {
    #[inline]
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        self.0.sample_transition(t, prev, point, draws);
        Ok(self.0.log_transition(t, prev, point))
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        Ok(self.0.log_transition(t, prev, point))
    }
}

/// `p(x_t | x_{1:t-1}, y_t)` for the running-example model, per replica.
#[derive(Clone, Copy, Debug)]
pub struct OptimalProposal<'a>(pub &'a NonMarkovGauss);

impl Proposal for OptimalProposal<'_> {
    #[inline]
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let mut lq = 0.0;
        for (j, x) in point.iter_mut().enumerate() {
            let (m, v) = self.0.optimal_moments(t, prev, j);
            let z = draws.normal();
            *x = m + libm::sqrt(v) * z;
            lq += -0.5 * (LN_2PI + libm::log(v)) - 0.5 * z * z;
        }
        Ok(lq)
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        Ok(point
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let (m, v) = self.0.optimal_moments(t, prev, j);
                norm_logpdf(x, m, v)
            })
            .sum())
    }
}

/// Draw from `N(mean, L Lᵀ)` into `out`, returning the log density.
pub fn sample_gaussian(mean: &[f64], chol: &Cholesky, out: &mut [f64], draws: &mut Draws) -> f64 {
    let z: Vec<f64> = (0..mean.len()).map(|_| draws.normal()).collect();
    let dx = chol.mul_lower(&z);
    for k in 0..mean.len() {
        out[k] = mean[k] + dx[k];
    }
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * (mean.len() as f64 * LN_2PI + chol.log_det() + quad)
}

pub fn gaussian_logpdf(mean: &[f64], chol: &Cholesky, x: &[f64]) -> f64 {
    let r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    chol.mvn_logpdf(&r)
}

// ---------------------------------------------------------------- Laplace

/// Targets whose one-step log increment `l_t(x_t)` can be maximized.
pub trait LaplaceTarget: StateSpace {
    /// Starting point for the mode search (the prior mean by convention).
    fn init_point(&self, t: usize, prev: Option<&[f64]>) -> Vec<f64>;

    /// Analytic gradient and Hessian of `l_t`; `None` selects finite differences.
    fn increment_derivatives(&self, _t: usize, _prev: Option<&[f64]>, _x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        None
    }
}

impl<T: LaplaceTarget + ?Sized> LaplaceTarget for &T {
    fn init_point(&self, t: usize, prev: Option<&[f64]>) -> Vec<f64> {
        (**self).init_point(t, prev)
    }
    fn increment_derivatives(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        (**self).increment_derivatives(t, prev, x)
    }
}

fn increment_at<T: Target + ?Sized>(target: &T, t: usize, prev: Option<&[f64]>, x: &[f64], buf: &mut [f64]) -> f64 {
    buf[..x.len()].copy_from_slice(x);
    target.extend(t, prev, buf)
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + libm::fabs(x))
}

/// Central-difference gradient and Hessian of `l_t` at `x`.
pub fn fd_derivatives<T: Target + ?Sized>(target: &T, t: usize, prev: Option<&[f64]>, x: &[f64]) -> (Vec<f64>, Matrix) {
    let n = x.len();
    let mut buf = vec![0.0; target.state_dim()];
    let mut xx = x.to_vec();
    let f0 = increment_at(target, t, prev, x, &mut buf);
    let mut g = vec![0.0; n];
    let mut h = Matrix::zeros(n, n);
    for a in 0..n {
        let ha = fd_step(x[a]);
        xx[a] = x[a] + ha;
        let fp = increment_at(target, t, prev, &xx, &mut buf);
        xx[a] = x[a] - ha;
        let fm = increment_at(target, t, prev, &xx, &mut buf);
        xx[a] = x[a];
        g[a] = (fp - fm) / (2.0 * ha);
        h[(a, a)] = (fp - 2.0 * f0 + fm) / (ha * ha);
        for b in 0..a {
            let hb = fd_step(x[b]);
            let mut e = |sa: f64, sb: f64| {
                xx[a] = x[a] + sa * ha;
                xx[b] = x[b] + sb * hb;
                let v = increment_at(target, t, prev, &xx, &mut buf);
                xx[a] = x[a];
                xx[b] = x[b];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * ha * hb);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    (g, h)
}

/// Laplace approximation of `q*_t`: Newton ascent with step halving, then
/// `(mode, -H⁻¹)`. Fails with `NonConcave` when the Hessian at the end point
/// is not negative definite.
pub fn laplace_proposal<T: LaplaceTarget + ?Sized>(
    target: &T,
    t: usize,
    prev: Option<&[f64]>,
    init: &[f64],
    newton_steps: usize,
) -> Result<(Vec<f64>, Matrix)> {
    let mut buf = vec![0.0; target.state_dim()];
    let derivs = |x: &[f64]| target.increment_derivatives(t, prev, x).unwrap_or_else(|| fd_derivatives(target, t, prev, x));
    let mut x = init.to_vec();
    let mut fx = increment_at(target, t, prev, &x, &mut buf);
    for _ in 0..newton_steps {
        let (g, h) = derivs(&x);
        let neg = h.scale(-1.0);
        let dir = match neg.cholesky() {
            Ok(c) => c.solve(&g),
            // Not locally concave: plain gradient ascent direction.
            Err(_) => g.clone(),
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let fc = increment_at(target, t, prev, &cand, &mut buf);
            if fc >= fx {
                let delta = cand.iter().zip(&x).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
                x = cand;
                fx = fc;
                moved = true;
                if delta < 1e-10 {
                    step = 0.0;
                }
                break;
            }
            step *= 0.5;
        }
        if !moved || step == 0.0 {
            break;
        }
    }
    let (_, h) = derivs(&x);
    let neg = h.scale(-1.0).symmetrize();
    let cov = neg.inverse_spd().map_err(|_| SmcError::NonConcave)?;
    Ok((x, cov))
}

/// Gaussian proposal from [`laplace_proposal`] at every particle; falls back
/// to the transition density where the increment is not concave.
#[derive(Clone, Debug)]
pub struct LaplaceProposal<T> {
    pub target: T,
    pub newton_steps: usize,
}

impl<T: LaplaceTarget> LaplaceProposal<T> {
    pub fn new(target: T) -> Self {
        LaplaceProposal { target, newton_steps: 10 }
    }

    fn moments(&self, t: usize, prev: Option<&[f64]>) -> Option<(Vec<f64>, Cholesky)> {
        let init = self.target.init_point(t, prev);
        match laplace_proposal(&self.target, t, prev, &init, self.newton_steps).and_then(|(m, c)| Ok((m, c.cholesky()?))) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("laplace proposal failed at step {t} ({e}); using the prior");
                None
            }
        }
    }
}

impl<T: LaplaceTarget> Proposal for LaplaceProposal<T> {
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        match self.moments(t, prev) {
            Some((m, c)) => Ok(sample_gaussian(&m, &c, point, draws)),
            None => {
                self.target.sample_transition(t, prev, point, draws);
                Ok(self.target.log_transition(t, prev, point))
            }
        }
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        match self.moments(t, prev) {
            Some((m, c)) => Ok(gaussian_logpdf(&m, &c, point)),
            None => Ok(self.target.log_transition(t, prev, point)),
        }
    }
}

impl LaplaceTarget for NonMarkovGauss {
    fn init_point(&self, _t: usize, prev: Option<&[f64]>) -> Vec<f64> {
        (0..self.d).map(|j| self.phi * self.prev_point(prev, j).0).collect()
    }
    fn increment_derivatives(&self, t: usize, prev: Option<&[f64]>, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        if self.terminal_likelihood {
            return None;
        }
        let y = self.obs(t);
        let g = (0..self.d)
            .map(|j| {
                let (xp, mp) = self.prev_point(prev, j);
                -(x[j] - self.phi * xp) / self.q + (y[j] - self.obs_mean(mp, x[j])) / self.r
            })
            .collect();
        let h = Matrix::identity(self.d).scale(-1.0 / self.q - 1.0 / self.r);
        Some((g, h))
    }
}

impl LaplaceTarget for PolynomialObsModel {
    fn init_point(&self, _t: usize, _prev: Option<&[f64]>) -> Vec<f64> {
        vec![0.0]
    }
    fn increment_derivatives(&self, _t: usize, _prev: Option<&[f64]>, x: &[f64]) -> Option<(Vec<f64>, Matrix)> {
        let (g, h) = self.log_joint_derivs(x[0]);
        Some((vec![g], Matrix::from_rows(1, 1, vec![h])))
    }
}

// ------------------------------------------------- structural approximations

/// `x_t = a(x_{1:t-1}, v_t)`, `y_t = c(x_{1:t}, e_t)` with zero-mean noises of
/// covariances `Q` and `R`.
pub trait StructuralModel: Sync {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn v_dim(&self) -> usize {
        self.x_dim()
    }
    fn e_dim(&self) -> usize {
        self.y_dim()
    }
    fn noise_v(&self, t: usize) -> Matrix;
    fn noise_e(&self, t: usize) -> Matrix;
    fn a(&self, t: usize, prev: Option<&[f64]>, v: &[f64]) -> Vec<f64>;
    fn c(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Vec<f64>;
    fn observation(&self, t: usize) -> Vec<f64>;

    fn jac_a_v(&self, t: usize, prev: Option<&[f64]>, v: &[f64]) -> Matrix {
        fd_jacobian(|z| self.a(t, prev, z), v)
    }
    fn jac_c_x(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Matrix {
        fd_jacobian(|z| self.c(t, prev, z, e), x)
    }
    fn jac_c_e(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Matrix {
        fd_jacobian(|z| self.c(t, prev, x, z), e)
    }
}

impl<S: StructuralModel + ?Sized> StructuralModel for &S {
    fn x_dim(&self) -> usize {
        (**self).x_dim()
    }
    fn y_dim(&self) -> usize {
        (**self).y_dim()
    }
    fn v_dim(&self) -> usize {
        (**self).v_dim()
    }
    fn e_dim(&self) -> usize {
        (**self).e_dim()
    }
    fn noise_v(&self, t: usize) -> Matrix {
        (**self).noise_v(t)
    }
    fn noise_e(&self, t: usize) -> Matrix {
        (**self).noise_e(t)
    }
    fn a(&self, t: usize, prev: Option<&[f64]>, v: &[f64]) -> Vec<f64> {
        (**self).a(t, prev, v)
    }
    fn c(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Vec<f64> {
        (**self).c(t, prev, x, e)
    }
    fn observation(&self, t: usize) -> Vec<f64> {
        (**self).observation(t)
    }
    fn jac_a_v(&self, t: usize, prev: Option<&[f64]>, v: &[f64]) -> Matrix {
        (**self).jac_a_v(t, prev, v)
    }
    fn jac_c_x(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Matrix {
        (**self).jac_c_x(t, prev, x, e)
    }
    fn jac_c_e(&self, t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Matrix {
        (**self).jac_c_e(t, prev, x, e)
    }
}

/// Central-difference Jacobian of `f` at `at`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> Matrix {
    let mut z = at.to_vec();
    let mut cols = Vec::with_capacity(at.len());
    for k in 0..at.len() {
        let h = fd_step(at[k]);
        z[k] = at[k] + h;
        let fp = f(&z);
        z[k] = at[k] - h;
        let fm = f(&z);
        z[k] = at[k];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Matrix::from_fn(rows, at.len(), |r, c| cols[c][r])
}

/// Joint Gaussian approximation of `(x_t, y_t)` given the history.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMoments {
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub sxx: Matrix,
    pub sxy: Matrix,
    pub syy: Matrix,
}

impl GaussianMoments {
    pub fn syx(&self) -> Matrix {
        self.sxy.transpose()
    }
}

/// First-order (linearized) moments at the noise means.
pub fn taylor_transform<S: StructuralModel + ?Sized>(sm: &S, t: usize, prev: Option<&[f64]>) -> GaussianMoments {
    let v0 = vec![0.0; sm.v_dim()];
    let e0 = vec![0.0; sm.e_dim()];
    let xbar = sm.a(t, prev, &v0);
    let ybar = sm.c(t, prev, &xbar, &e0);
    let ja = sm.jac_a_v(t, prev, &v0);
    let jcx = sm.jac_c_x(t, prev, &xbar, &e0);
    let jce = sm.jac_c_e(t, prev, &xbar, &e0);
    let sxx = ja.matmul(&sm.noise_v(t)).matmul(&ja.transpose()).symmetrize();
    let sxy = sxx.matmul(&jcx.transpose());
    let syy = jcx.matmul(&sxy).add(&jce.matmul(&sm.noise_e(t)).matmul(&jce.transpose())).symmetrize();
    GaussianMoments { mx: xbar, my: ybar, sxx, sxy, syy }
}

/// Sigma-point parameters `(alpha, beta_u, kappa)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta_u: f64,
    pub kappa: f64,
}

impl Default for UnscentedParams {
    fn default() -> Self {
        UnscentedParams { alpha: 1e-3, beta_u: 2.0, kappa: 0.0 }
    }
}

impl UnscentedParams {
    /// `(n + λ, mean weights, covariance weights)` for `2n + 1` points.
    pub fn weights(&self, n: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let spread = nf + lambda;
        if !(spread > 0.0) {
            return Err(SmcError::SigmaPointFailure);
        }
        let mut wm = vec![1.0 / (2.0 * spread); 2 * n + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / spread;
        wc[0] = lambda / spread + (1.0 - self.alpha * self.alpha + self.beta_u);
        Ok((spread, wm, wc))
    }
}

/// Sigma-point moments of `(x_t, y_t)` over the stacked noise `z = (v, e)`.
pub fn unscented_transform<S: StructuralModel + ?Sized>(
    sm: &S,
    t: usize,
    prev: Option<&[f64]>,
    params: UnscentedParams,
) -> Result<GaussianMoments> {
    let (nv, ne) = (sm.v_dim(), sm.e_dim());
    let n = nv + ne;
    let (nx, ny) = (sm.x_dim(), sm.y_dim());
    let (spread, wm, wc) = params.weights(n)?;
    let q = sm.noise_v(t);
    let r = sm.noise_e(t);
    let sz = Matrix::from_fn(n, n, |i, j| {
        if i < nv && j < nv {
            q[(i, j)]
        } else if i >= nv && j >= nv {
            r[(i - nv, j - nv)]
        } else {
            0.0
        }
    });
    let (vals, vecs) = sz.sym_eigen();
    let root = Matrix::from_fn(n, n, |i, j| vecs[(i, j)] * libm::sqrt(vals[j].max(0.0) * spread));
    let mut xs = Vec::with_capacity(2 * n + 1);
    let mut ys = Vec::with_capacity(2 * n + 1);
    for k in 0..2 * n + 1 {
        let z: Vec<f64> = (0..n)
            .map(|i| match k {
                0 => 0.0,
                k if k <= n => root[(i, k - 1)],
                k => -root[(i, k - n - 1)],
            })
            .collect();
        let x = sm.a(t, prev, &z[..nv]);
        let y = sm.c(t, prev, &x, &z[nv..]);
        xs.push(x);
        ys.push(y);
    }
    let wmean = |pts: &[Vec<f64>], dim: usize| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for (p, w) in pts.iter().zip(&wm) {
            for i in 0..dim {
                m[i] += w * p[i];
            }
        }
        m
    };
    let mx = wmean(&xs, nx);
    let my = wmean(&ys, ny);
    let wcov = |a: &[Vec<f64>], ma: &[f64], b: &[Vec<f64>], mb: &[f64]| -> Matrix {
        let mut c = Matrix::zeros(ma.len(), mb.len());
        for k in 0..a.len() {
            for i in 0..ma.len() {
                for j in 0..mb.len() {
                    c[(i, j)] += wc[k] * (a[k][i] - ma[i]) * (b[k][j] - mb[j]);
                }
            }
        }
        c
    };
    let sxx = wcov(&xs, &mx, &xs, &mx).symmetrize();
    let sxy = wcov(&xs, &mx, &ys, &my);
    let syy = wcov(&ys, &my, &ys, &my).symmetrize();
    let joint = Matrix::from_fn(nx + ny, nx + ny, |i, j| match (i < nx, j < nx) {
        (true, true) => sxx[(i, j)],
        (true, false) => sxy[(i, j - nx)],
        (false, true) => sxy[(j, i - nx)],
        (false, false) => syy[(i - nx, j - nx)],
    });
    let (ev, _) = joint.sym_eigen();
    let scale = ev.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v))).max(f64::MIN_POSITIVE);
    if ev.iter().any(|&v| v < -1e-9 * scale) {
        return Err(SmcError::SigmaPointFailure);
    }
    Ok(GaussianMoments { mx, my, sxx, sxy, syy })
}

/// `N(μ̂_x + Σ_xy Σ_yy⁻¹ (y − μ̂_y), Σ_xx − Σ_xy Σ_yy⁻¹ Σ_yx)`.
pub fn condition_joint(m: &GaussianMoments, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    let chol = m.syy.cholesky().map_err(|_| SmcError::Numerical("observation covariance is not positive definite"))?;
    let resid: Vec<f64> = y.iter().zip(&m.my).map(|(a, b)| a - b).collect();
    let alpha = chol.solve(&resid);
    let mean: Vec<f64> = m.mx.iter().zip(m.sxy.matvec(&alpha)).map(|(a, b)| a + b).collect();
    let syx = m.syx();
    let ny = m.my.len();
    let nx = m.mx.len();
    let mut gain = Matrix::zeros(ny, nx);
    for c in 0..nx {
        let col: Vec<f64> = (0..ny).map(|r| syx[(r, c)]).collect();
        let s = chol.solve(&col);
        for r in 0..ny {
            gain[(r, c)] = s[r];
        }
    }
    let cov = m.sxx.sub(&m.sxy.matmul(&gain)).symmetrize();
    if cov.cholesky().is_err() {
        return Err(SmcError::Numerical("conditional covariance is not positive definite"));
    }
    Ok((mean, cov))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Approximation {
    Ekf,
    Ukf(UnscentedParams),
}

/// Proposal `N(μ_t, Σ_t)` from conditioning a linearized or sigma-point joint
/// approximation on `y_t`.
#[derive(Clone, Debug)]
pub struct GaussianApproxProposal<S> {
    pub model: S,
    pub method: Approximation,
}

impl<S: StructuralModel> GaussianApproxProposal<S> {
    pub fn ekf(model: S) -> Self {
        GaussianApproxProposal { model, method: Approximation::Ekf }
    }
    pub fn ukf(model: S) -> Self {
        GaussianApproxProposal { model, method: Approximation::Ukf(UnscentedParams::default()) }
    }

    /// Proposal mean and covariance at a history.
    pub fn moments(&self, t: usize, prev: Option<&[f64]>) -> Result<(Vec<f64>, Matrix)> {
        let jm = match self.method {
            Approximation::Ekf => taylor_transform(&self.model, t, prev),
            Approximation::Ukf(p) => unscented_transform(&self.model, t, prev, p)?,
        };
        condition_joint(&jm, &self.model.observation(t))
    }
}

impl<S: StructuralModel> Proposal for GaussianApproxProposal<S> {
    fn sample(&self, t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let (m, c) = self.moments(t, prev)?;
        Ok(sample_gaussian(&m, &c.cholesky()?, point, draws))
    }
    fn log_density(&self, t: usize, prev: Option<&[f64]>, point: &[f64]) -> Result<f64> {
        let (m, c) = self.moments(t, prev)?;
        Ok(gaussian_logpdf(&m, &c.cholesky()?, point))
    }
}

impl StructuralModel for NonMarkovGauss {
    fn x_dim(&self) -> usize {
        self.d
    }
    fn y_dim(&self) -> usize {
        self.d
    }
    fn noise_v(&self, _t: usize) -> Matrix {
        Matrix::identity(self.d).scale(self.q)
    }
    fn noise_e(&self, _t: usize) -> Matrix {
        Matrix::identity(self.d).scale(self.r)
    }
    fn a(&self, _t: usize, prev: Option<&[f64]>, v: &[f64]) -> Vec<f64> {
        (0..self.d).map(|j| self.phi * self.prev_point(prev, j).0 + v[j]).collect()
    }
    fn c(&self, _t: usize, prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Vec<f64> {
        (0..self.d).map(|j| self.obs_mean(self.prev_point(prev, j).1, x[j]) + e[j]).collect()
    }
    fn observation(&self, t: usize) -> Vec<f64> {
        self.obs(t).to_vec()
    }
    fn jac_a_v(&self, _t: usize, _prev: Option<&[f64]>, _v: &[f64]) -> Matrix {
        Matrix::identity(self.d)
    }
    fn jac_c_x(&self, _t: usize, _prev: Option<&[f64]>, _x: &[f64], _e: &[f64]) -> Matrix {
        Matrix::identity(self.d)
    }
    fn jac_c_e(&self, _t: usize, _prev: Option<&[f64]>, _x: &[f64], _e: &[f64]) -> Matrix {
        Matrix::identity(self.d)
    }
}

impl StructuralModel for PolynomialObsModel {
    fn x_dim(&self) -> usize {
        1
    }
    fn y_dim(&self) -> usize {
        1
    }
    fn noise_v(&self, _t: usize) -> Matrix {
        Matrix::identity(1)
    }
    fn noise_e(&self, _t: usize) -> Matrix {
        Matrix::identity(1).scale(self.obs_var)
    }
    fn a(&self, _t: usize, _prev: Option<&[f64]>, v: &[f64]) -> Vec<f64> {
        vec![v[0]]
    }
    fn c(&self, _t: usize, _prev: Option<&[f64]>, x: &[f64], e: &[f64]) -> Vec<f64> {
        vec![PolynomialObsModel::h(x[0]) + e[0]]
    }
    fn observation(&self, _t: usize) -> Vec<f64> {
        vec![self.y]
    }
    fn jac_a_v(&self, _t: usize, _prev: Option<&[f64]>, _v: &[f64]) -> Matrix {
        Matrix::identity(1)
    }
    fn jac_c_x(&self, _t: usize, _prev: Option<&[f64]>, x: &[f64], _e: &[f64]) -> Matrix {
        Matrix::from_rows(1, 1, vec![PolynomialObsModel::dh(x[0])])
    }
    fn jac_c_e(&self, _t: usize, _prev: Option<&[f64]>, _x: &[f64], _e: &[f64]) -> Matrix {
        Matrix::identity(1)
    }
}

// ------------------------------------------------------------- nested IS

/// One nested-IS draw: `m` candidates from `proposal`, weights
/// `ν = (γ_t/γ_{t-1}) / q`, one candidate kept in proportion to `ν`.
/// Writes the kept state into `out` and returns `log((1/m) Σ ν)`.
pub fn nested_is_draw<T: Target + ?Sized, Q: Proposal + ?Sized>(
    target: &T,
    proposal: &Q,
    m: usize,
    t: usize,
    prev: Option<&[f64]>,
    out: &mut [f64],
    draws: &mut Draws,
) -> Result<f64> {
    if m == 0 {
        return Err(SmcError::InvalidArgument("nested sample size must be positive"));
    }
    let sd = target.state_dim();
    let pd = target.point_dim();
    let sub = draws.substream();
    let mut cand = vec![0.0; m * sd];
    let mut logv = vec![0.0; m];
    for j in 0..m {
        let c = &mut cand[j * sd..(j + 1) * sd];
        let lq = proposal.sample(t, prev, &mut c[..pd], &mut sub.draws(tag::PROPOSE, t as u32, j as u32))?;
        logv[j] = target.extend(t, prev, c) - lq;
    }
    let lse = log_sum_exp(&logv)?;
    if lse == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights { step: t });
    }
    let w: Vec<f64> = logv.iter().map(|v| libm::exp(v - lse)).collect();
    let cum = resampling::cumulative(&w)?;
    let k = resampling::search(&cum, sub.uniform(Address::new(tag::TRAJECTORY, t as u32, 0, 0)));
    out.copy_from_slice(&cand[k * sd..(k + 1) * sd]);
    Ok(lse - libm::log(m as f64))
}

/// Kernel drawing each particle by [`nested_is_draw`].
#[derive(Clone, Debug)]
pub struct NestedIsKernel<T, Q> {
    pub target: T,
    pub proposal: Q,
    pub m: usize,
}

impl<T: Target, Q: Proposal> Kernel for NestedIsKernel<T, Q> {
    fn horizon(&self) -> usize {
        self.target.horizon()
    }
    fn point_dim(&self) -> usize {
        self.target.point_dim()
    }
    fn state_dim(&self) -> usize {
        self.target.state_dim()
    }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        match nested_is_draw(&self.target, &self.proposal, self.m, t, prev, out, draws) {
            Err(SmcError::DegenerateWeights { .. }) => {
                log::warn!("all nested weights vanished at step {t}");
                Ok(f64::NEG_INFINITY)
            }
            other => other,
        }
    }
    fn splice_log_ratio(&self, t: usize, prev: &[f64], tail: &[f64]) -> Result<f64> {
        Ok(self.target.splice_log_ratio(t, prev, tail))
    }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> {
        Ok(self.target.log_gamma(path))
    }
}
