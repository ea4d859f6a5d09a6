use alloc::vec::Vec;

use crate::engine::{StateSpace, Target};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::logspace::log_sum_exp;
use crate::rng::Draws;
use crate::special::{norm_logpdf, LN_2PI};

/// AR(1) latent `x_t = phi x_{t-1} + sqrt(q) e_t` with potentials
/// `g_t(x) = exp(Φ_t(x))`, `Φ_t(x) = log(1 + eps * exp(-(x - m_t)^2 / (2 s)))`.
///
/// `Φ_t` is known in closed form, so the normalizer is exact, yet the model
/// stands in for settings where only unbiased estimates of `Φ_t` exist.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticExpModel {
    pub phi: f64,
    pub q: f64,
    pub eps: f64,
    pub s: f64,
    pub m: Vec<f64>,
}

impl SyntheticExpModel {
    pub fn new(phi: f64, q: f64, eps: f64, s: f64, m: Vec<f64>) -> Self {
        SyntheticExpModel { phi, q, eps, s, m }
    }

    #[inline]
    pub fn phi_value(&self, t: usize, x: f64) -> f64 {
        let dx = x - self.m[t - 1];
        libm::log1p(self.eps * libm::exp(-dx * dx / (2.0 * self.s)))
    }

    /// Exact `log Z` by expanding `prod_t (1 + eps k_t(x_t))` over subsets.
    pub fn log_z(&self) -> Result<f64> {
        let t = self.m.len();
        if t > 20 {
            return Err(crate::SmcError::InvalidArgument("subset expansion limited to T <= 20"));
        }
        let sq = libm::sqrt(self.q);
        let l = Matrix::from_fn(t, t, |i, k| if k <= i { libm::pow(self.phi, (i - k) as f64) * sq } else { 0.0 });
        let cov = l.matmul(&l.transpose());
        let mut terms = Vec::with_capacity(1 << t);
        for mask in 0u32..(1u32 << t) {
            let idx: Vec<usize> = (0..t).filter(|k| mask & (1 << k) != 0).collect();
            let n = idx.len();
            if n == 0 {
                terms.push(0.0);
                continue;
            }
            let sub = Matrix::from_fn(n, n, |a, b| cov[(idx[a], idx[b])] + if a == b { self.s } else { 0.0 });
            let mv: Vec<f64> = idx.iter().map(|&k| self.m[k]).collect();
            let ch = sub.cholesky()?;
            let lp = ch.mvn_logpdf(&mv);
            terms.push(n as f64 * (libm::log(self.eps) + 0.5 * (LN_2PI + libm::log(self.s))) + lp);
        }
        log_sum_exp(&terms)
    }
}

impl Target for SyntheticExpModel {
    fn horizon(&self) -> usize {
        self.m.len()
    }
    fn point_dim(&self) -> usize {
        1
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn extend(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        let xp = prev.map_or(0.0, |p| p[0]);
        norm_logpdf(state[0], self.phi * xp, self.q) + self.phi_value(t, state[0])
    }
}

impl StateSpace for SyntheticExpModel {
    fn sample_transition(&self, _t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) {
        let xp = prev.map_or(0.0, |p| p[0]);
        point[0] = self.phi * xp + libm::sqrt(self.q) * draws.normal();
    }
    fn log_transition(&self, _t: usize, prev: Option<&[f64]>, point: &[f64]) -> f64 {
        norm_logpdf(point[0], self.phi * prev.map_or(0.0, |p| p[0]), self.q)
    }
    fn observe(&self, t: usize, _prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        self.phi_value(t, state[0])
    }
}
