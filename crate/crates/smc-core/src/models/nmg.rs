use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{StateSpace, Target};
use crate::error::{Result, SmcError};
use crate::linalg::Matrix;
use crate::rng::{tag, Address, Draws, SeedStream};
use crate::special::norm_logpdf;

/// `(phi, q, beta, r)` of the running example.
pub const RUNNING_EXAMPLE: (f64, f64, f64, f64) = (0.9, 1.0, 0.5, 1.0);

/// Gaussian latent model with geometric observation memory:
/// `x_t = phi x_{t-1} + sqrt(q) e_t`, `y_t ~ N(sum_k beta^(t-k) x_k, r)`,
/// replicated independently over `d` components.
///
/// Particle states are `[x_t (d), mu_t (d)]` with `mu_t = beta mu_{t-1} + x_t`,
/// plus one accumulator slot when all likelihood terms are deferred to step T.
#[derive(Clone, Debug, PartialEq)]
pub struct NonMarkovGauss {
    pub phi: f64,
    pub q: f64,
    pub beta: f64,
    pub r: f64,
    pub d: usize,
    /// Observations, `T x d` row-major.
    pub y: Vec<f64>,
    /// Put every likelihood factor at the final step (γ_t = p(x_{1:t}) for t < T).
    pub terminal_likelihood: bool,
}

impl NonMarkovGauss {
    pub fn new(phi: f64, q: f64, beta: f64, r: f64, d: usize, y: Vec<f64>) -> Result<Self> {
        if !(q > 0.0) || !(r > 0.0) {
            return Err(SmcError::InvalidArgument("variances must be positive"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(SmcError::InvalidArgument("beta must lie in [0, 1]"));
        }
        if !phi.is_finite() {
            return Err(SmcError::InvalidArgument("phi must be finite"));
        }
        if d == 0 || y.is_empty() || y.len() % d != 0 {
            return Err(SmcError::InvalidArgument("observations must form a non-empty T x d matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SmcError::InvalidArgument("observations must be finite"));
        }
        Ok(NonMarkovGauss { phi, q, beta, r, d, y, terminal_likelihood: false })
    }

    /// Running-example parameters with data simulated from the model.
    pub fn running_example(t: usize, stream: &SeedStream) -> Self {
        Self::running_example_dim(t, 1, stream)
    }

    /// As [`Self::running_example`] with `d` independent replicas.
    pub fn running_example_dim(t: usize, d: usize, stream: &SeedStream) -> Self {
        let (phi, q, beta, r) = RUNNING_EXAMPLE;
        let (_, y) = Self::simulate(phi, q, beta, r, d.max(1), t, stream);
        Self::new(phi, q, beta, r, d.max(1), y).expect("valid parameters")
    }

    pub fn with_terminal_likelihood(mut self, on: bool) -> Self {
        self.terminal_likelihood = on;
        self
    }

    pub fn with_params(&self, phi: f64, q: f64, beta: f64, r: f64) -> Result<Self> {
        let mut m = Self::new(phi, q, beta, r, self.d, self.y.clone())?;
        m.terminal_likelihood = self.terminal_likelihood;
        Ok(m)
    }

    pub fn horizon(&self) -> usize {
        self.y.len() / self.d
    }

    /// `y_t`, 1-based.
    pub fn obs(&self, t: usize) -> &[f64] {
        &self.y[(t - 1) * self.d..t * self.d]
    }

    /// Draws `(x, y)`, each `T x d` row-major, using normals at `(SIMULATE, t, j, 0|1)`.
    pub fn simulate(phi: f64, q: f64, beta: f64, r: f64, d: usize, t_len: usize, stream: &SeedStream) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; t_len * d];
        let mut y = vec![0.0; t_len * d];
        let mut mu = vec![0.0; d];
        let sq = libm::sqrt(q.max(0.0));
        let sr = libm::sqrt(r);
        for t in 0..t_len {
            for j in 0..d {
                let a = |k| Address::new(tag::SIMULATE, (t + 1) as u32, j as u32, k);
                let prev = if t == 0 { 0.0 } else { x[(t - 1) * d + j] };
                let xv = phi * prev + sq * stream.normal(a(0));
                mu[j] = beta * mu[j] + xv;
                x[t * d + j] = xv;
                y[t * d + j] = mu[j] + sr * stream.normal(a(1));
            }
        }
        (x, y)
    }

    /// `log γ_t(x_{1:t})` for a path of exactly `t` points.
    pub fn log_gamma_at(&self, t: usize, path: &[f64]) -> Result<f64> {
        if t == 0 || t > self.horizon() {
            return Err(SmcError::InvalidArgument("step out of range"));
        }
        if path.len() != t * self.d {
            return Err(SmcError::InvalidArgument("path length does not match step"));
        }
        Ok(Target::log_gamma(self, path))
    }

    fn sd(&self) -> usize {
        2 * self.d + usize::from(self.terminal_likelihood)
    }

    /// Mean of `y_t` given the previous memory and the new point, per replica.
    #[inline]
    pub fn obs_mean(&self, mu_prev: f64, x: f64) -> f64 {
        self.beta * mu_prev + x
    }

    /// Locally optimal proposal `p(x_t | x_{1:t-1}, y_t)` for replica `j`: `(mean, var)`.
    #[inline]
    pub fn optimal_moments(&self, t: usize, prev: Option<&[f64]>, j: usize) -> (f64, f64) {
        let (xp, mp) = self.prev_point(prev, j);
        let y = self.obs(t)[j];
        let mean = (self.r * self.phi * xp + self.q * (y - self.beta * mp)) / (self.q + self.r);
        (mean, self.q * self.r / (self.q + self.r))
    }

    #[inline]
    pub fn prev_point(&self, prev: Option<&[f64]>, j: usize) -> (f64, f64) {
        match prev {
            None => (0.0, 0.0),
            Some(s) => (s[j], s[self.d + j]),
        }
    }

    /// Joint covariance of `(x_{1:T})` for one replica: `Σ_xx = L Lᵀ`.
    pub fn state_cov(&self) -> Matrix {
        let t = self.horizon();
        let sq = libm::sqrt(self.q);
        let l = Matrix::from_fn(t, t, |i, k| if k <= i { libm::pow(self.phi, (i - k) as f64) * sq } else { 0.0 });
        l.matmul(&l.transpose())
    }

    /// Memory matrix `B` with `B[t][k] = beta^(t-k)` for `k <= t`.
    pub fn memory_matrix(&self) -> Matrix {
        let t = self.horizon();
        Matrix::from_fn(t, t, |i, k| if k <= i { libm::pow(self.beta, (i - k) as f64) } else { 0.0 })
    }
}

impl Target for NonMarkovGauss {
    fn horizon(&self) -> usize {
        NonMarkovGauss::horizon(self)
    }
    fn point_dim(&self) -> usize {
        self.d
    }
    fn state_dim(&self) -> usize {
        self.sd()
    }
    #[inline]
    fn extend(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        let d = self.d;
        let mut lf = 0.0;
        let mut lg = 0.0;
        let y = self.obs(t);
        for j in 0..d {
            let (xp, mp) = self.prev_point(prev, j);
            let x = state[j];
            let mu = self.obs_mean(mp, x);
            state[d + j] = mu;
            lf += norm_logpdf(x, self.phi * xp, self.q);
            lg += norm_logpdf(y[j], mu, self.r);
        }
        if self.terminal_likelihood {
            let acc = prev.map_or(0.0, |p| p[2 * d]) + lg;
            state[2 * d] = acc;
            if t == NonMarkovGauss::horizon(self) {
                lf + acc
            } else {
                lf
            }
        } else {
            lf + lg
        }
    }
}

impl StateSpace for NonMarkovGauss {
    #[inline]
    fn sample_transition(&self, _t: usize, prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) {
        let sq = libm::sqrt(self.q);
        for (j, x) in point.iter_mut().enumerate() {
            let (xp, _) = self.prev_point(prev, j);
            *x = self.phi * xp + sq * draws.normal();
        }
    }
    fn log_transition(&self, _t: usize, prev: Option<&[f64]>, point: &[f64]) -> f64 {
        point.iter().enumerate().map(|(j, &x)| norm_logpdf(x, self.phi * self.prev_point(prev, j).0, self.q)).sum()
    }
    #[inline]
    fn observe(&self, t: usize, prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        let d = self.d;
        let y = self.obs(t);
        let mut lg = 0.0;
        for j in 0..d {
            let (_, mp) = self.prev_point(prev, j);
            let mu = self.obs_mean(mp, state[j]);
            state[d + j] = mu;
            lg += norm_logpdf(y[j], mu, self.r);
        }
        if self.terminal_likelihood {
            let acc = prev.map_or(0.0, |p| p[2 * d]) + lg;
            state[2 * d] = acc;
            if t == NonMarkovGauss::horizon(self) {
                acc
            } else {
                0.0
            }
        } else {
            lg
        }
    }
}
