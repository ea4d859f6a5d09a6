use alloc::vec::Vec;

use crate::engine::Kernel;
use crate::error::{Result, SmcError};
use crate::rng::Draws;
use crate::special::norm_logpdf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemperingMode {
    /// `γ_t(x) = p(x) p(y | x)^{τ_t}`.
    Likelihood,
    /// `γ_t(x) = p(x) prod_{k <= n_t} p(y_k | x)`.
    Data,
}

/// Temperatures `τ_1 = 0 <= ... <= τ_T = 1`, or datum counts `0 = n_1 <= ... <= n_T = K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule(pub Vec<f64>);

impl Schedule {
    pub fn linear(len: usize) -> Self {
        let n = len.max(2);
        Schedule((0..n).map(|k| k as f64 / (n - 1) as f64).collect())
    }

    /// `τ_1 = 0`, then `len - 1` geometrically spaced values from `tau_min` to 1.
    pub fn geometric(len: usize, tau_min: f64) -> Self {
        let n = len.max(2);
        let mut v = Vec::with_capacity(n);
        v.push(0.0);
        let m = n - 1;
        for k in 0..m {
            let frac = if m == 1 { 1.0 } else { k as f64 / (m - 1) as f64 };
            v.push(libm::exp(libm::log(tau_min) * (1.0 - frac)));
        }
        *v.last_mut().unwrap() = 1.0;
        Schedule(v)
    }

    /// One datum per step after the prior.
    pub fn data(k: usize) -> Self {
        Schedule((0..=k).map(|c| c as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Static scalar `x ~ N(m0, v0)` with data `y_k ~ N(x, s2)`, reached through a
/// tempering sequence and moved by random-walk Metropolis kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperedGaussModel {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub lik_var: f64,
    pub y: Vec<f64>,
    pub mode: TemperingMode,
    pub schedule: Schedule,
    /// Random-walk step standard deviation (default half the prior std).
    pub step: f64,
    /// Metropolis sweeps per temperature.
    pub sweeps: usize,
}

impl TemperedGaussModel {
    pub fn new(prior_mean: f64, prior_var: f64, lik_var: f64, y: Vec<f64>, mode: TemperingMode, schedule: Schedule) -> Result<Self> {
        if !(prior_var > 0.0) || !(lik_var > 0.0) {
            return Err(SmcError::InvalidArgument("variances must be positive"));
        }
        let s = &schedule.0;
        if s.len() < 2 || s.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(SmcError::InvalidArgument("schedule must be non-decreasing with at least two steps"));
        }
        match mode {
            TemperingMode::Likelihood => {
                if s[0] != 0.0 || s[s.len() - 1] != 1.0 {
                    return Err(SmcError::InvalidArgument("temperatures must run from 0 to 1"));
                }
            }
            TemperingMode::Data => {
                if s[0] != 0.0 || s[s.len() - 1] != y.len() as f64 || s.iter().any(|c| libm::trunc(*c) != *c) {
                    return Err(SmcError::InvalidArgument("datum counts must be integers from 0 to K"));
                }
            }
        }
        Ok(TemperedGaussModel { prior_mean, prior_var, lik_var, y, mode, schedule, step: 0.5 * libm::sqrt(prior_var), sweeps: 5 })
    }

    pub fn horizon(&self) -> usize {
        self.schedule.len()
    }

    /// Tempered log likelihood `ℓ_t(x)` of step `t` (1-based).
    #[inline]
    pub fn log_lik_at(&self, t: usize, x: f64) -> f64 {
        let s = self.schedule.0[t - 1];
        match self.mode {
            TemperingMode::Likelihood => {
                if s == 0.0 {
                    0.0
                } else {
                    s * self.y.iter().map(|&y| norm_logpdf(y, x, self.lik_var)).sum::<f64>()
                }
            }
            TemperingMode::Data => self.y[..s as usize].iter().map(|&y| norm_logpdf(y, x, self.lik_var)).sum(),
        }
    }

    #[inline]
    pub fn log_target(&self, t: usize, x: f64) -> f64 {
        norm_logpdf(x, self.prior_mean, self.prior_var) + self.log_lik_at(t, x)
    }

    /// Random-walk Metropolis sweeps leaving `π_t` invariant.
    pub fn mh_move(&self, t: usize, mut x: f64, draws: &mut Draws) -> f64 {
        let mut lp = self.log_target(t, x);
        for _ in 0..self.sweeps {
            let prop = x + self.step * draws.normal();
            let lq = self.log_target(t, prop);
            let u = draws.uniform();
            if libm::log(u) < lq - lp {
                x = prop;
                lp = lq;
            }
        }
        x
    }

    /// Exact posterior `(mean, var)` and `log Z`.
    pub fn exact(&self) -> (f64, f64, f64) {
        let (mut m, mut v) = (self.prior_mean, self.prior_var);
        let mut log_z = 0.0;
        for &y in &self.y {
            log_z += norm_logpdf(y, m, v + self.lik_var);
            let k = v / (v + self.lik_var);
            m += k * (y - m);
            v *= 1.0 - k;
        }
        (m, v, log_z)
    }

    pub fn posterior_sample(&self, draws: &mut Draws) -> f64 {
        let (m, v, _) = self.exact();
        m + libm::sqrt(v) * draws.normal()
    }

    pub fn ais(&self) -> AisKernel<'_> {
        AisKernel(self)
    }
}

/// Annealed importance sampling step: weight by the tempering ratio at the
/// parent, then move with the Metropolis kernel of the new temperature.
#[derive(Clone, Copy, Debug)]
pub struct AisKernel<'a>(pub &'a TemperedGaussModel);

impl Kernel for AisKernel<'_> {
    fn horizon(&self) -> usize {
        self.0.horizon()
    }
    fn point_dim(&self) -> usize {
        1
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn propagate(&self, t: usize, prev: Option<&[f64]>, out: &mut [f64], draws: &mut Draws) -> Result<f64> {
        let m = self.0;
        match prev {
            None => {
                out[0] = m.prior_mean + libm::sqrt(m.prior_var) * draws.normal();
                Ok(m.log_lik_at(1, out[0]))
            }
            Some(p) => {
                let w = m.log_lik_at(t, p[0]) - m.log_lik_at(t - 1, p[0]);
                out[0] = m.mh_move(t, p[0], draws);
                Ok(w)
            }
        }
    }
    fn log_gamma(&self, path: &[f64]) -> Result<f64> {
        let x = path[path.len() - 1];
        Ok(self.0.log_target(self.0.horizon(), x))
    }
}
