use crate::engine::{StateSpace, Target};
use crate::logspace::log_sum_exp;
use crate::rng::Draws;
use crate::special::norm_logpdf;
use alloc::vec::Vec;

/// Scalar latent `x ~ N(0, 1)` observed through `y ~ N((x+1)(x-1)(x-3)/6, 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolynomialObsModel {
    pub y: f64,
    pub obs_var: f64,
}

/// `log Z`, posterior mean and variance by quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolynomialOracle {
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
}

impl PolynomialObsModel {
    /// Observation used by default: the posterior has modes near -1.39 and 1.16.
    pub const BIMODAL_Y: f64 = -1.0;

    pub fn bimodal() -> Self {
        Self::new(Self::BIMODAL_Y)
    }

    pub fn new(y: f64) -> Self {
        PolynomialObsModel { y, obs_var: 0.5 }
    }

    #[inline]
    pub fn h(x: f64) -> f64 {
        (x + 1.0) * (x - 1.0) * (x - 3.0) / 6.0
    }
    #[inline]
    pub fn dh(x: f64) -> f64 {
        (3.0 * x * x - 6.0 * x - 1.0) / 6.0
    }
    #[inline]
    pub fn d2h(x: f64) -> f64 {
        x - 1.0
    }

    #[inline]
    pub fn log_joint(&self, x: f64) -> f64 {
        norm_logpdf(x, 0.0, 1.0) + norm_logpdf(self.y, Self::h(x), self.obs_var)
    }

    /// Gradient and second derivative of the log joint.
    pub fn log_joint_derivs(&self, x: f64) -> (f64, f64) {
        let res = self.y - Self::h(x);
        let g = -x + res * Self::dh(x) / self.obs_var;
        let hh = -1.0 + (-Self::dh(x) * Self::dh(x) + res * Self::d2h(x)) / self.obs_var;
        (g, hh)
    }

    /// Trapezoid rule on `[-10, 10]` (ten prior standard deviations) with `nodes` points.
    pub fn oracle_with(&self, nodes: usize) -> PolynomialOracle {
        let (a, b) = (-10.0, 10.0);
        let log_z = trapezoid_log(|x| self.log_joint(x), a, b, nodes);
        let h = (b - a) / (nodes - 1) as f64;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for k in 0..nodes {
            let x = a + k as f64 * h;
            let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            let p = w * libm::exp(self.log_joint(x) - log_z) * h;
            s0 += p;
            s1 += p * x;
            s2 += p * x * x;
        }
        let mean = s1 / s0;
        PolynomialOracle { log_z, mean, var: s2 / s0 - mean * mean }
    }

    pub fn oracle(&self) -> PolynomialOracle {
        self.oracle_with(1 << 16)
    }
}

/// `log ∫_a^b exp(f(x)) dx` by the trapezoid rule on `nodes` equispaced points.
pub fn trapezoid_log(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let h = (b - a) / (nodes - 1) as f64;
    let vals: Vec<f64> = (0..nodes)
        .map(|k| {
            let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            f(a + k as f64 * h) + libm::log(w)
        })
        .collect();
    log_sum_exp(&vals).unwrap_or(f64::NEG_INFINITY) + libm::log(h)
}

impl Target for PolynomialObsModel {
    fn horizon(&self) -> usize {
        1
    }
    fn point_dim(&self) -> usize {
        1
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn extend(&self, _t: usize, _prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        self.log_joint(state[0])
    }
}

impl StateSpace for PolynomialObsModel {
    fn sample_transition(&self, _t: usize, _prev: Option<&[f64]>, point: &mut [f64], draws: &mut Draws) {
        point[0] = draws.normal();
    }
    fn log_transition(&self, _t: usize, _prev: Option<&[f64]>, point: &[f64]) -> f64 {
        norm_logpdf(point[0], 0.0, 1.0)
    }
    fn observe(&self, _t: usize, _prev: Option<&[f64]>, state: &mut [f64]) -> f64 {
        norm_logpdf(self.y, Self::h(state[0]), self.obs_var)
    }
}
