use alloc::vec::Vec;

use crate::error::{Result, SmcError};

/// A non-negative quantity stored as its natural logarithm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogValue(pub f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    pub fn from_linear(x: f64) -> Self {
        LogValue(libm::log(x))
    }

    pub fn linear(self) -> f64 {
        libm::exp(self.0)
    }

    /// log(e^a + e^b)
    pub fn add(self, other: LogValue) -> LogValue {
        let (hi, lo) = if self.0 >= other.0 { (self.0, other.0) } else { (other.0, self.0) };
        if hi == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        LogValue(hi + libm::log1p(libm::exp(lo - hi)))
    }

    /// log(e^a * e^b)
    pub fn mul(self, other: LogValue) -> LogValue {
        LogValue(self.0 + other.0)
    }
}

/// `log Σ exp(v_i)` with max-shift.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(SmcError::EmptyInput);
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(m);
    }
    if m == f64::INFINITY {
        return Ok(m);
    }
    let s: f64 = v.iter().map(|&x| libm::exp(x - m)).sum();
    Ok(m + libm::log(s))
}

/// Normalized weights and `log_sum_exp(logw) - log N`.
pub fn normalize_log_weights(logw: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    let lm = normalize_into(logw, &mut out)?;
    Ok((out, lm))
}

/// Writes normalized weights into `out`, returning the log mean weight.
pub fn normalize_into(logw: &[f64], out: &mut Vec<f64>) -> Result<f64> {
    let lse = log_sum_exp(logw)?;
    if lse == f64::NEG_INFINITY {
        return Err(SmcError::DegenerateWeights { step: 0 });
    }
    if !lse.is_finite() {
        return Err(SmcError::Numerical("non-finite log-weight"));
    }
    out.clear();
    out.extend(logw.iter().map(|&x| libm::exp(x - lse)));
    Ok(lse - libm::log(logw.len() as f64))
}
