//! Proposal selection for the Gaussian models.

use std::fmt;
use std::str::FromStr;

use smc_core::engine::{Bootstrap, Guided, Kernel};
use smc_core::models::NonMarkovGauss;
use smc_core::proposals::{GaussianApproxProposal, LaplaceProposal, NestedIsKernel, OptimalProposal, PriorProposal};
use smc_core::twisting::{zero_variance_kernel, LookaheadTwist};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalChoice {
    Prior,
    Optimal,
    Laplace,
    Ekf,
    Ukf,
    /// Nested importance sampling with `M` prior draws per particle.
    Nested(usize),
    /// Optimal twist with its matched proposal; `log Ẑ` is exact.
    ZeroVariance,
}

impl FromStr for ProposalChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::config("invalid_proposal", format!("unknown proposal {s:?}"));
        Ok(match s {
            "prior" | "bootstrap" => ProposalChoice::Prior,
            "optimal" => ProposalChoice::Optimal,
            "laplace" => ProposalChoice::Laplace,
            "ekf" => ProposalChoice::Ekf,
            "ukf" => ProposalChoice::Ukf,
            "zero-variance" => ProposalChoice::ZeroVariance,
            _ => match s.strip_prefix("nested:").map(str::parse::<usize>) {
                Some(Ok(m)) if m > 0 => ProposalChoice::Nested(m),
                _ => return Err(bad()),
            },
        })
    }
}

impl fmt::Display for ProposalChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposalChoice::Prior => write!(f, "prior"),
            ProposalChoice::Optimal => write!(f, "optimal"),
            ProposalChoice::Laplace => write!(f, "laplace"),
            ProposalChoice::Ekf => write!(f, "ekf"),
            ProposalChoice::Ukf => write!(f, "ukf"),
            ProposalChoice::Nested(m) => write!(f, "nested:{m}"),
            ProposalChoice::ZeroVariance => write!(f, "zero-variance"),
        }
    }
}

/// Builds the kernel and hands it to `body`; the twist behind
/// `zero-variance` only lives for the call.
pub fn with_kernel<R>(model: &NonMarkovGauss, choice: ProposalChoice, body: impl FnOnce(&dyn Kernel) -> R) -> smc_core::error::Result<R> {
    Ok(match choice {
        ProposalChoice::Prior => body(&Bootstrap(model)),
        ProposalChoice::Optimal => body(&Guided::new(model, OptimalProposal(model))),
        ProposalChoice::Laplace => body(&Guided::new(model, LaplaceProposal::new(model))),
        ProposalChoice::Ekf => body(&Guided::new(model, GaussianApproxProposal::ekf(model))),
        ProposalChoice::Ukf => body(&Guided::new(model, GaussianApproxProposal::ukf(model))),
        ProposalChoice::Nested(m) => body(&NestedIsKernel { target: model, proposal: PriorProposal(model), m }),
        ProposalChoice::ZeroVariance => {
            let tw = LookaheadTwist::optimal(model)?;
            body(&zero_variance_kernel(&tw))
        }
    })
}
