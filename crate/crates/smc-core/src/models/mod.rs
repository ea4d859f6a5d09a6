//! Concrete targets and their exact oracles.

mod nmg;
mod oracle;
mod polynomial;
mod synthetic;
mod tempered;

pub use nmg::{NonMarkovGauss, RUNNING_EXAMPLE};
pub use oracle::GaussianJointOracle;
pub use polynomial::{trapezoid_log, PolynomialObsModel, PolynomialOracle};
pub use synthetic::SyntheticExpModel;
pub use tempered::{AisKernel, Schedule, TemperedGaussModel, TemperingMode};
