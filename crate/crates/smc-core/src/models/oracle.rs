use alloc::vec;
use alloc::vec::Vec;

use super::NonMarkovGauss;
use crate::error::Result;
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{tag, Address, SeedStream};
use crate::special::LN_2PI;

/// Exact joint-Gaussian algebra for [`NonMarkovGauss`]: every replica shares
/// the `T x T` blocks `Σ_xx`, `Σ_xy = Σ_xx Bᵀ`, `Σ_yy = B Σ_xx Bᵀ + r I`.
#[derive(Clone, Debug)]
pub struct GaussianJointOracle {
    t: usize,
    d: usize,
    sxx: Matrix,
    sxy: Matrix,
    syy: Matrix,
    log_z: Vec<f64>,
    mean: Vec<f64>,
    cov: Matrix,
    cov_chol: Cholesky,
}

impl GaussianJointOracle {
    pub fn new(model: &NonMarkovGauss) -> Result<Self> {
        let t = model.horizon();
        let d = model.d;
        let sxx = model.state_cov();
        let b = model.memory_matrix();
        let sxy = sxx.matmul(&b.transpose());
        let syy = b.matmul(&sxy).add(&Matrix::identity(t).scale(model.r)).symmetrize();
        let chol = syy.cholesky()?;

        // log Z_t from the leading blocks of one factorization.
        let mut log_z = vec![0.0; t];
        let mut mean = vec![0.0; t * d];
        for j in 0..d {
            let yj: Vec<f64> = (0..t).map(|s| model.y[s * d + j]).collect();
            let z = chol.forward(&yj);
            let mut acc = 0.0;
            for s in 0..t {
                acc += -0.5 * LN_2PI - libm::log(chol.factor()[(s, s)]) - 0.5 * z[s] * z[s];
                log_z[s] += acc;
            }
            let alpha = chol.backward(&z);
            let m = sxy.matvec(&alpha);
            for s in 0..t {
                mean[s * d + j] = m[s];
            }
        }
        // Σ_xx − Σ_xy Σ_yy⁻¹ Σ_yx
        let mut gain = Matrix::zeros(t, t);
        let syx = sxy.transpose();
        for c in 0..t {
            let col: Vec<f64> = (0..t).map(|r| syx[(r, c)]).collect();
            let sol = chol.solve(&col);
            for r in 0..t {
                gain[(r, c)] = sol[r];
            }
        }
        let cov = sxx.sub(&sxy.matmul(&gain)).symmetrize();
        let cov_chol = cov.cholesky()?;
        Ok(GaussianJointOracle { t, d, sxx, sxy, syy, log_z, mean, cov, cov_chol })
    }

    pub fn horizon(&self) -> usize {
        self.t
    }

    /// `log Z_t`, summed over replicas.
    pub fn log_z(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.t {
            return Err(crate::SmcError::InvalidArgument("step out of range"));
        }
        Ok(self.log_z[t - 1])
    }

    pub fn log_z_final(&self) -> f64 {
        self.log_z[self.t - 1]
    }

    pub fn log_z_trace(&self) -> &[f64] {
        &self.log_z
    }

    /// Posterior mean of `x_{1:T}` in path layout (`T x d`).
    pub fn posterior_mean(&self) -> &[f64] {
        &self.mean
    }

    /// Posterior covariance of one replica's `x_{1:T}`.
    pub fn posterior_cov(&self) -> &Matrix {
        &self.cov
    }

    /// Posterior mean and variance of component `j` of `x_t`.
    pub fn marginal(&self, t: usize, j: usize) -> (f64, f64) {
        (self.mean[(t - 1) * self.d + j], self.cov[(t - 1, t - 1)])
    }

    /// Exact posterior draw using normals at `(ORACLE, 0, j, s)`.
    pub fn posterior_sample(&self, stream: &SeedStream) -> Vec<f64> {
        let mut out = self.mean.clone();
        for j in 0..self.d {
            let z: Vec<f64> = (0..self.t).map(|s| stream.normal(Address::new(tag::ORACLE, 0, j as u32, s as u32))).collect();
            let dx = self.cov_chol.mul_lower(&z);
            for s in 0..self.t {
                out[s * self.d + j] += dx[s];
            }
        }
        out
    }

    pub fn state_cov(&self) -> &Matrix {
        &self.sxx
    }
    pub fn cross_cov(&self) -> &Matrix {
        &self.sxy
    }
    pub fn obs_cov(&self) -> &Matrix {
        &self.syy
    }
}
