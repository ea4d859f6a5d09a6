use alloc::vec::Vec;

use crate::error::{Result, SmcError};

/// Weighted point cloud `Σ W̄_i δ_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEmpirical<P> {
    points: Vec<P>,
    weights: Vec<f64>,
}

impl<P> WeightedEmpirical<P> {
    pub fn new(points: Vec<P>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(SmcError::InvalidArgument("points and weights must have equal non-zero length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(SmcError::InvalidArgument("weights must be non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(SmcError::InvalidArgument("weights must sum to one"));
        }
        Ok(WeightedEmpirical { points, weights })
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ_i W̄_i f(x_i)`.
    pub fn expectation(&self, f: impl Fn(&P) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| if *w == 0.0 { 0.0 } else { w * f(p) }).sum()
    }
}

pub fn empirical_expectation<P>(emp: &WeightedEmpirical<P>, f: impl Fn(&P) -> f64) -> f64 {
    emp.expectation(f)
}
