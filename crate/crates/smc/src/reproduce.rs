//! Raw data behind the degeneracy figures and the SIS/SMC table.

use smc_core::engine::{run_sis, run_smc, Bootstrap, ParticleSystem, SmcConfig, Target};
use smc_core::models::{GaussianJointOracle, NonMarkovGauss, RUNNING_EXAMPLE};
use smc_core::parallel::{try_map, Executor};
use smc_core::resampling::ResamplingScheme;
use smc_core::rng::{tag, SeedStream};

use crate::error::CliError;

pub const WEIGHT_DEGENERACY: (usize, usize) = (6, 5);
pub const PATH_DEGENERACY: (usize, usize) = (100, 20);
pub const VIOLIN_BETAS: [f64; 5] = [0.001, 0.1, 0.5, 0.7, 0.99];
pub const VIOLIN: (usize, usize) = (100, 20);
pub const TABLE1_STEPS: [usize; 3] = [10, 20, 40];
pub const TABLE1_PARTICLES: usize = 10;

/// Plain SMC as in the worked examples: resample every step.
pub fn basic_smc(n: usize) -> SmcConfig {
    SmcConfig::always(n, ResamplingScheme::Multinomial)
}

/// Running-example data of length `t` with memory `beta`; the dataset for a
/// given `(seed, label)` never changes.
pub fn dataset(t: usize, beta: f64, seed: u64, label: u32) -> Result<NonMarkovGauss, CliError> {
    let (phi, q, _, r) = RUNNING_EXAMPLE;
    let (_, y) = NonMarkovGauss::simulate(phi, q, beta, r, 1, t, &SeedStream::new(seed).fork(tag::SIMULATE, label, 0));
    Ok(NonMarkovGauss::new(phi, q, beta, r, 1, y)?)
}

/// `Σ_i W̄_i log γ_T(x^i) / T` over the final weighted paths.
pub fn average_log_target(model: &NonMarkovGauss, sys: &ParticleSystem) -> f64 {
    let t = sys.steps() as f64;
    sys.weights().iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| w * Target::log_gamma(model, &sys.path(i))).sum::<f64>() / t
}

/// Normalized SIS weights per step: rows `(t, particle, weight)`.
pub fn weight_degeneracy(seed: u64) -> Result<Vec<(usize, usize, f64)>, CliError> {
    let (t_len, n) = WEIGHT_DEGENERACY;
    let m = dataset(t_len, RUNNING_EXAMPLE.2, seed, 0)?;
    let sys = run_sis(&Bootstrap(&m), n, &SeedStream::new(seed))?;
    Ok((1..=t_len).flat_map(|t| sys.weights_at(t).iter().enumerate().map(move |(i, w)| (t, i, *w)).collect::<Vec<_>>()).collect())
}

/// Distinct ancestors of the final particles at each step.
pub fn path_degeneracy(seed: u64) -> Result<Vec<usize>, CliError> {
    let (t_len, n) = PATH_DEGENERACY;
    let m = dataset(t_len, RUNNING_EXAMPLE.2, seed, 0)?;
    Ok(run_smc(&Bootstrap(&m), basic_smc(n), &SeedStream::new(seed))?.unique_ancestors_trace())
}

/// `log Ẑ - log Z` over `reps` runs on one dataset with memory `beta`.
pub fn logz_errors<E: Executor>(beta: f64, t_len: usize, n: usize, reps: usize, exec: &E, seed: u64) -> Result<Vec<f64>, CliError> {
    let label = (beta * 1e6).round() as u32;
    let m = dataset(t_len, beta, seed, label)?;
    let truth = GaussianJointOracle::new(&m)?.log_z_final();
    let s = SeedStream::new(seed).fork(tag::USER, label, 0);
    Ok(try_map(exec, reps, |r| Ok(run_smc(&Bootstrap(&m), basic_smc(n), &s.fork(tag::REPLICATE, r as u32, 0))?.log_z() - truth))?)
}

/// Paired `(SIS, SMC)` average log-targets over `reps` seeds.
pub fn table1_pairs<E: Executor>(t_len: usize, n: usize, reps: usize, exec: &E, seed: u64) -> Result<Vec<(f64, f64)>, CliError> {
    let m = dataset(t_len, RUNNING_EXAMPLE.2, seed, t_len as u32)?;
    let k = Bootstrap(&m);
    Ok(try_map(exec, reps, |r| {
        let s = SeedStream::new(seed).fork(tag::REPLICATE, r as u32, t_len as u32);
        let sis = run_sis(&k, n, &s)?;
        let smc = run_smc(&k, basic_smc(n), &s)?;
        Ok((average_log_target(&m, &sis), average_log_target(&m, &smc)))
    })?)
}
