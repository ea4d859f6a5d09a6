//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use smc_core::adapt::{vsmc_optimize, AffineGaussianFamily, OptimizerConfig};
use smc_core::csmc::{iterated_csmc, CsmcConfig};
use smc_core::engine::{run_sis, run_smc, ParticleSystem, SmcConfig};
use smc_core::evaluate::{aide_bound, bread_bound, DivergenceEstimate};
use smc_core::models::{GaussianJointOracle, NonMarkovGauss, Schedule, TemperedGaussModel, TemperingMode};
use smc_core::parallel::{ipmcmc_run, island_pf, IpmcmcConfig, IslandConfig};
use smc_core::pm::{pimh_run, pmmh_run, run_nsmc, Chain};
use smc_core::resampling::{AdaptivePolicy, ResamplingScheme};
use smc_core::rng::{tag, SeedStream};
use smc_core::special::norm_logpdf;
use smc_core::twisting::run_iapf;

use crate::error::CliError;
use crate::exec::Threaded;
use crate::io::{self, cell, csv_document, emit, flag, num, nums, Provenance};
use crate::kernels::{with_kernel, ProposalChoice};
use crate::reproduce;

#[derive(Parser, Debug)]
#[command(name = "smc", version, about = "Sequential Monte Carlo experiments")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file (directory for `reproduce`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; SMC_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model JSON. Without it the running example is simulated from the seed.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Length of the simulated running example.
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 100)]
    pub particles: usize,
    #[arg(long, default_value = "systematic")]
    pub resampler: String,
    /// prior, optimal, laplace, ekf, ukf, nested:M or zero-variance.
    #[arg(long, default_value = "prior")]
    pub proposal: String,
}

#[derive(Args, Debug, Clone)]
pub struct Threshold {
    /// Resample when ESS falls below this fraction of N (1 = every step, 0 = never).
    #[arg(long, default_value_t = 0.5)]
    pub ess_threshold: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Divergence {
    Bread,
    Aide,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    WeightDegeneracy,
    PathDegeneracy,
    LogzViolin,
    Table1,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// SMC with adaptive resampling.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        threshold: Threshold,
        /// Per-step trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sequential importance sampling (no resampling).
    Sis {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Iterated auxiliary particle filter.
    Iapf {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        threshold: Threshold,
        #[arg(long, default_value_t = 10)]
        sweeps: usize,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
    /// Variational SMC: stochastic gradient ascent on the ELBO.
    Vsmc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        particles: usize,
        #[arg(long, default_value = "systematic")]
        resampler: String,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Step size a / (b + n).
        #[arg(long)]
        step_a: Option<f64>,
        #[arg(long)]
        step_b: Option<f64>,
    },
    /// Particle marginal Metropolis-Hastings over (log q, log r).
    Pmmh {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        threshold: Threshold,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Crank-Nicolson correlation of successive seeds.
        #[arg(long)]
        rho: Option<f64>,
        /// Random-walk standard deviation.
        #[arg(long, default_value_t = 0.5)]
        step_sd: f64,
    },
    /// Particle independent Metropolis-Hastings over paths.
    Pimh {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        threshold: Threshold,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
    /// Iterated conditional SMC.
    Csmc {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long)]
        ancestor_sampling: bool,
    },
    /// Interacting particle MCMC.
    Ipmcmc {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, default_value_t = 4)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        conditional: usize,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
    /// Island particle filter.
    Island {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        threshold: Threshold,
        #[arg(long, default_value_t = 5)]
        islands: usize,
        /// Outer resampling threshold as a fraction of the island count.
        #[arg(long, default_value_t = 0.5)]
        outer_threshold: f64,
    },
    /// Nested SMC with an inner SMC per particle.
    Nsmc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50)]
        particles: usize,
        #[arg(long, default_value = "systematic")]
        resampler: String,
        /// Inner particles per outer particle.
        #[arg(long, default_value_t = 20)]
        inner: usize,
    },
    /// Divergence bounds (BREAD, AIDE).
    Evaluate {
        which: Divergence,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
    /// Exact log Z and posterior moments, or simulate a dataset with --simulate.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        /// Write a running-example dataset of this length instead.
        #[arg(long)]
        simulate: Option<usize>,
    },
    /// Raw data for the degeneracy figures and the SIS/SMC table.
    Reproduce {
        which: Figure,
        /// Replicates for logz-violin and table1.
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
}

/// Parses `args`, runs, prints errors as JSON and returns the exit code.
pub fn main<I: IntoIterator<Item = T>, T: Into<OsString> + Clone>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return 0;
            }
            say(&CliError::config("invalid_arguments", e.to_string().trim()).to_json());
            return 2;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            say(&e.to_json());
            e.exit_code()
        }
    }
}

fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

// ------------------------------------------------------------- resolution

fn load_model(a: &ModelArgs, seed: u64) -> Result<(NonMarkovGauss, Value), CliError> {
    match &a.model {
        Some(p) => {
            let (m, sha) = io::read_model(p)?;
            Ok((m, json!({ "file": p.display().to_string(), "sha256": sha })))
        }
        None => {
            if a.steps == 0 {
                return Err(CliError::config("invalid_steps", "--steps must be positive"));
            }
            let m = simulated(a.steps, seed);
            Ok((m, json!({ "running_example": true, "steps": a.steps })))
        }
    }
}

fn simulated(steps: usize, seed: u64) -> NonMarkovGauss {
    NonMarkovGauss::running_example(steps, &SeedStream::new(seed).fork(tag::SIMULATE, 0, 0))
}

fn scheme(s: &str) -> Result<ResamplingScheme, CliError> {
    ResamplingScheme::parse(s).ok_or_else(|| CliError::config("invalid_resampler", format!("unknown resampler {s:?}")))
}

fn particles(n: usize) -> Result<usize, CliError> {
    if n == 0 {
        return Err(CliError::config("invalid_particles", "--particles must be positive"));
    }
    Ok(n)
}

fn fraction(f: f64, what: &'static str) -> Result<f64, CliError> {
    if !(0.0..=1.0).contains(&f) {
        return Err(CliError::config(what, "threshold must be a fraction in [0, 1]"));
    }
    Ok(f)
}

fn positive(n: usize, code: &'static str) -> Result<usize, CliError> {
    if n == 0 {
        return Err(CliError::config(code, "count must be positive"));
    }
    Ok(n)
}

struct Sampler {
    n: usize,
    scheme: ResamplingScheme,
    proposal: ProposalChoice,
}

impl Sampler {
    fn resolve(a: &SamplerArgs) -> Result<Self, CliError> {
        Ok(Sampler { n: particles(a.particles)?, scheme: scheme(&a.resampler)?, proposal: a.proposal.parse()? })
    }
    fn config(&self, threshold: f64) -> SmcConfig {
        SmcConfig::new(self.n).with_scheme(self.scheme).with_policy(AdaptivePolicy::fraction(threshold, self.n))
    }
    fn echo(&self) -> Value {
        json!({ "particles": self.n, "resampler": self.scheme.name(), "proposal": self.proposal.to_string() })
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(x), Value::Object(y)) = (&mut a, b) {
        x.extend(y);
    }
    a
}

fn write_json(out: Option<&Path>, prov: &Provenance, body: Value) -> Result<(), CliError> {
    emit(out, &io::to_json_string(&prov.document(body)))
}

// --------------------------------------------------------------- outputs

/// Result document of one SMC run.
pub fn system_json(sys: &ParticleSystem) -> Value {
    json!({
        "logZ": num(sys.log_z()),
        "logZ_trace": nums(sys.logz_trace()),
        "ess_trace": nums(sys.ess_trace()),
        "resampled": sys.resampled(),
        "posterior_mean": nums(&sys.posterior_mean()),
        "unique_ancestors": sys.unique_ancestors_trace(),
    })
}

pub fn trace_csv(prov: &Provenance, sys: &ParticleSystem) -> Result<String, CliError> {
    let header: Vec<String> = ["t", "logZ", "ess", "resampled", "unique_ancestors"].map(String::from).to_vec();
    let ua = sys.unique_ancestors_trace();
    let rows: Vec<Vec<String>> = (0..sys.steps())
        .map(|k| vec![(k + 1).to_string(), cell(sys.logz_trace()[k]), cell(sys.ess_trace()[k]), flag(sys.resampled()[k]), ua[k].to_string()])
        .collect();
    csv_document(prov, &header, &rows)
}

fn chain_csv(prov: &Provenance, c: &Chain) -> Result<String, CliError> {
    let mut header = vec!["iter".to_string()];
    header.extend((1..=c.dim).map(|k| format!("theta_{k}")));
    header.extend(["logZhat".to_string(), "accepted".to_string()]);
    let rows: Vec<Vec<String>> = (0..c.len())
        .map(|j| {
            let mut r = vec![(j + 1).to_string()];
            r.extend(c.row(j).iter().map(|v| cell(*v)));
            r.extend([cell(c.log_z[j]), flag(c.accepted[j])]);
            r
        })
        .collect();
    csv_document(prov, &header, &rows)
}

fn divergence_json(e: &DivergenceEstimate) -> Value {
    json!({ "estimate": num(e.estimate), "se": num(e.se), "forward": num(e.forward), "reverse": num(e.reverse), "reps": e.reps })
}

// -------------------------------------------------------------- dispatch

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    let out = cli.out.as_deref();
    let exec = Threaded::from_env(cli.threads);
    let stream = SeedStream::new(seed);
    match &cli.command {
        Command::Run { model, sampler, threshold, trace } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let f = fraction(threshold.ess_threshold, "invalid_ess_threshold")?;
            let prov = Provenance::new(seed, merge(json!({ "command": "run", "model": mj, "ess_threshold": f }), s.echo()));
            let sys = with_kernel(&m, s.proposal, |k| run_smc(k, s.config(f), &stream))??;
            if let Some(p) = trace {
                emit(Some(p), &trace_csv(&prov, &sys)?)?;
            }
            write_json(out, &prov, system_json(&sys))
        }
        Command::Sis { model, sampler, trace } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let prov = Provenance::new(seed, merge(json!({ "command": "sis", "model": mj }), s.echo()));
            let sys = with_kernel(&m, s.proposal, |k| run_sis(k, s.n, &stream))??;
            if let Some(p) = trace {
                emit(Some(p), &trace_csv(&prov, &sys)?)?;
            }
            write_json(out, &prov, system_json(&sys))
        }
        Command::Iapf { model, sampler, threshold, sweeps, tolerance } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let f = fraction(threshold.ess_threshold, "invalid_ess_threshold")?;
            let sweeps = positive(*sweeps, "invalid_sweeps")?;
            let prov = Provenance::new(
                seed,
                json!({ "command": "iapf", "model": mj, "particles": s.n, "resampler": s.scheme.name(), "ess_threshold": f, "sweeps": sweeps, "tolerance": tolerance }),
            );
            let r = run_iapf(&m, s.config(f), sweeps, *tolerance, &stream)?;
            let pots: Vec<Value> = r.potentials.iter().map(|p| json!([nums(&p.lambda), nums(&p.iota), num(p.c)])).collect();
            let body = merge(system_json(&r.system), json!({ "potentials": pots, "logZ_history": nums(&r.log_z_history) }));
            write_json(out, &prov, body)
        }
        Command::Vsmc { model, particles: n, resampler, iters, step_a, step_b } => {
            let (m, mj) = load_model(model, seed)?;
            let n = particles(*n)?;
            let sc = scheme(resampler)?;
            let mut opt = OptimizerConfig::new(positive(*iters, "invalid_iters")?);
            opt.a = step_a.unwrap_or(opt.a);
            opt.b = step_b.unwrap_or(opt.b);
            let prov = Provenance::new(
                seed,
                json!({ "command": "vsmc", "model": mj, "particles": n, "resampler": sc.name(), "iters": opt.iterations, "step_a": opt.a, "step_b": opt.b }),
            );
            let tr = vsmc_optimize(&m, &AffineGaussianFamily::prior(&m), opt, n, sc, &stream)?;
            let header = ["iter", "elbo", "grad_norm"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = (0..tr.elbo.len()).map(|k| vec![(k + 1).to_string(), cell(tr.elbo[k]), cell(tr.grad_norm[k])]).collect();
            emit(out, &csv_document(&prov, &header, &rows)?)
        }
        Command::Pmmh { model, sampler, threshold, iters, rho, step_sd } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let f = fraction(threshold.ess_threshold, "invalid_ess_threshold")?;
            if let Some(r) = rho {
                fraction(*r, "invalid_rho")?;
            }
            if !(*step_sd > 0.0) {
                return Err(CliError::config("invalid_step_sd", "--step-sd must be positive"));
            }
            let prov = Provenance::new(
                seed,
                merge(
                    json!({ "command": "pmmh", "model": mj, "ess_threshold": f, "iters": iters, "rho": rho, "step_sd": step_sd,
                            "theta": ["log_q", "log_r"], "prior": "N(0, 1) per coordinate" }),
                    s.echo(),
                ),
            );
            let cfg = s.config(f);
            let log_prior = |th: &[f64]| th.iter().map(|v| norm_logpdf(*v, 0.0, 1.0)).sum::<f64>();
            let est = |th: &[f64], st: &SeedStream| {
                let mm = m.with_params(m.phi, th[0].exp(), m.beta, th[1].exp())?;
                with_kernel(&mm, s.proposal, |k| run_smc(k, cfg, st).map(|sys| sys.log_z()))?
            };
            let c = pmmh_run(log_prior, est, *step_sd, &[m.q.ln(), m.r.ln()], *iters, *rho, &stream)?;
            emit(out, &chain_csv(&prov, &c)?)
        }
        Command::Pimh { model, sampler, threshold, iters } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let f = fraction(threshold.ess_threshold, "invalid_ess_threshold")?;
            let prov = Provenance::new(seed, merge(json!({ "command": "pimh", "model": mj, "ess_threshold": f, "iters": iters }), s.echo()));
            let c = with_kernel(&m, s.proposal, |k| pimh_run(k, s.config(f), *iters, &stream))??;
            emit(out, &chain_csv(&prov, &c)?)
        }
        Command::Csmc { model, sampler, iters, ancestor_sampling } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let prov = Provenance::new(seed, merge(json!({ "command": "csmc", "model": mj, "iters": iters, "ancestor_sampling": ancestor_sampling }), s.echo()));
            let cfg = CsmcConfig::new(s.n).with_scheme(s.scheme).with_ancestor_sampling(*ancestor_sampling);
            let ch = with_kernel(&m, s.proposal, |k| iterated_csmc(k, &cfg, None, *iters, &stream))??;
            // a Gibbs sweep always "accepts"; flag whether the retained path moved
            let c = Chain {
                dim: ch.path_len,
                theta: ch.paths.clone(),
                log_z: ch.log_z.clone(),
                accepted: (0..ch.sweeps()).map(|j| j == 0 || ch.path(j) != ch.path(j - 1)).collect(),
            };
            emit(out, &chain_csv(&prov, &c)?)
        }
        Command::Ipmcmc { model, sampler, nodes, conditional, iters } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            if *conditional == 0 || conditional > nodes {
                return Err(CliError::config("invalid_nodes", "need 1 <= conditional <= nodes"));
            }
            let prov = Provenance::new(seed, merge(json!({ "command": "ipmcmc", "model": mj, "nodes": nodes, "conditional": conditional, "iters": iters }), s.echo()));
            let cfg = IpmcmcConfig { nodes: *nodes, conditional: *conditional, csmc: CsmcConfig::new(s.n).with_scheme(s.scheme) };
            let states = with_kernel(&m, s.proposal, |k| ipmcmc_run(k, &cfg, *iters, &exec, &stream))??;
            let mut header = vec!["sweep".to_string()];
            header.extend((1..=*nodes).map(|k| format!("logZ_{k}")));
            header.extend((1..=*conditional).map(|j| format!("c_{j}")));
            header.push("outer_ess".into());
            let rows: Vec<Vec<String>> = states
                .iter()
                .enumerate()
                .map(|(j, st)| {
                    let mut r = vec![(j + 1).to_string()];
                    r.extend(st.log_z.iter().map(|v| cell(*v)));
                    r.extend(st.c.iter().map(|c| (c + 1).to_string()));
                    r.push(cell(st.node_ess()));
                    r
                })
                .collect();
            emit(out, &csv_document(&prov, &header, &rows)?)
        }
        Command::Island { model, sampler, threshold, islands, outer_threshold } => {
            let (m, mj) = load_model(model, seed)?;
            let s = Sampler::resolve(sampler)?;
            let f = fraction(threshold.ess_threshold, "invalid_ess_threshold")?;
            let fo = fraction(*outer_threshold, "invalid_outer_threshold")?;
            let islands = positive(*islands, "invalid_islands")?;
            let prov = Provenance::new(
                seed,
                merge(json!({ "command": "island", "model": mj, "islands": islands, "ess_threshold": f, "outer_threshold": fo }), s.echo()),
            );
            let cfg = IslandConfig::new(islands, s.config(f)).with_outer(AdaptivePolicy::fraction(fo, islands));
            let st = with_kernel(&m, s.proposal, |k| island_pf(k, &cfg, &exec, &stream))??;
            let mut header = vec!["t".to_string()];
            header.extend((1..=islands).map(|k| format!("logZ_{k}")));
            header.extend(["logZ".into(), "outer_ess".into(), "resampled".into()]);
            let rows: Vec<Vec<String>> = (0..st.logz_trace.len())
                .map(|t| {
                    let mut r = vec![(t + 1).to_string()];
                    r.extend(st.island_log_z[t].iter().map(|v| cell(*v)));
                    r.extend([cell(st.logz_trace[t]), cell(st.ess_trace[t]), flag(st.resampled[t])]);
                    r
                })
                .collect();
            emit(out, &csv_document(&prov, &header, &rows)?)
        }
        Command::Nsmc { model, particles: n, resampler, inner } => {
            let (m, mj) = load_model(model, seed)?;
            let n = particles(*n)?;
            let sc = scheme(resampler)?;
            let inner = positive(*inner, "invalid_inner")?;
            let prov = Provenance::new(seed, json!({ "command": "nsmc", "model": mj, "particles": n, "resampler": sc.name(), "inner": inner }));
            let sys = run_nsmc(&m, n, inner, sc, &stream)?;
            write_json(out, &prov, system_json(&sys))
        }
        Command::Evaluate { which, config, reps } => {
            let reps = positive(*reps, "invalid_reps")?;
            let text = match config {
                Some(p) => Some(std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => CliError::config("config_not_found", p.display().to_string()),
                    _ => CliError::io(e),
                })?),
                None => None,
            };
            let parse = |t: &Option<String>| -> Result<Value, CliError> {
                Ok(match t {
                    Some(t) => serde_json::from_str(t).map_err(|e| CliError::config("invalid_config", e.to_string()))?,
                    None => json!({}),
                })
            };
            match which {
                Divergence::Bread => {
                    let c: BreadConfig = serde_json::from_value(parse(&text)?).map_err(|e| CliError::config("invalid_config", e.to_string()))?;
                    let model = TemperedGaussModel::new(c.prior_mean, c.prior_var, c.lik_var, c.y.clone(), TemperingMode::Likelihood, Schedule::linear(c.steps))
                        .map_err(|e| CliError::config("invalid_config", e.to_string()))?;
                    let prov = Provenance::new(seed, json!({ "command": "evaluate", "which": "bread", "reps": reps, "config": c }));
                    let e = bread_bound(&model, reps, &exec, &stream)?;
                    write_json(out, &prov, divergence_json(&e))
                }
                Divergence::Aide => {
                    let c: AideConfig = serde_json::from_value(parse(&text)?).map_err(|e| CliError::config("invalid_config", e.to_string()))?;
                    let margs = ModelArgs { model: c.model.clone(), steps: c.steps };
                    let (m, mj) = load_model(&margs, seed)?;
                    let (qa, qg): (ProposalChoice, ProposalChoice) = (c.approx.proposal.parse()?, c.gold.proposal.parse()?);
                    let (na, ng) = (particles(c.approx.particles)?, particles(c.gold.particles)?);
                    let prov = Provenance::new(seed, json!({ "command": "evaluate", "which": "aide", "reps": reps, "config": c, "model": mj }));
                    let e = with_kernel(&m, qa, |ka| {
                        with_kernel(&m, qg, |kg| aide_bound(ka, &CsmcConfig::new(na), kg, &CsmcConfig::new(ng), reps, &exec, &stream))
                    })???;
                    write_json(out, &prov, divergence_json(&e))
                }
            }
        }
        Command::Oracle { model, simulate } => {
            if let Some(t) = simulate {
                let t = positive(*t, "invalid_steps")?;
                return emit(out, &io::write_model(&simulated(t, seed)));
            }
            let (m, mj) = load_model(model, seed)?;
            let prov = Provenance::new(seed, json!({ "command": "oracle", "model": mj }));
            let o = GaussianJointOracle::new(&m)?;
            let var: Vec<f64> = (1..=o.horizon()).flat_map(|t| (0..m.d).map(move |j| (t, j))).map(|(t, j)| o.marginal(t, j).1).collect();
            let body = json!({
                "logZ": num(o.log_z_final()),
                "logZ_trace": nums(o.log_z_trace()),
                "posterior_mean": nums(o.posterior_mean()),
                "posterior_var": nums(&var),
            });
            write_json(out, &prov, body)
        }
        Command::Reproduce { which, reps } => {
            let dir = out.unwrap_or(Path::new("."));
            let reps = positive(*reps, "invalid_reps")?;
            let (name, prov, header, rows) = match which {
                Figure::WeightDegeneracy => {
                    let (t, n) = reproduce::WEIGHT_DEGENERACY;
                    let prov = Provenance::new(seed, json!({ "command": "reproduce", "which": "weight-degeneracy", "steps": t, "particles": n, "params": [0.9, 1.0, 0.5, 1.0] }));
                    let rows = reproduce::weight_degeneracy(seed)?.into_iter().map(|(t, i, w)| vec![t.to_string(), (i + 1).to_string(), cell(w)]).collect();
                    ("weight-degeneracy", prov, vec!["t", "particle", "weight"], rows)
                }
                Figure::PathDegeneracy => {
                    let (t, n) = reproduce::PATH_DEGENERACY;
                    let prov = Provenance::new(seed, json!({ "command": "reproduce", "which": "path-degeneracy", "steps": t, "particles": n }));
                    let rows = reproduce::path_degeneracy(seed)?.into_iter().enumerate().map(|(k, u)| vec![(k + 1).to_string(), u.to_string()]).collect();
                    ("path-degeneracy", prov, vec!["t", "unique_ancestors"], rows)
                }
                Figure::LogzViolin => {
                    let (t, n) = reproduce::VIOLIN;
                    let prov = Provenance::new(
                        seed,
                        json!({ "command": "reproduce", "which": "logz-violin", "steps": t, "particles": n, "betas": reproduce::VIOLIN_BETAS, "reps": reps }),
                    );
                    let mut rows = Vec::new();
                    for beta in reproduce::VIOLIN_BETAS {
                        for (r, e) in reproduce::logz_errors(beta, t, n, reps, &exec, seed)?.into_iter().enumerate() {
                            rows.push(vec![cell(beta), (r + 1).to_string(), cell(e)]);
                        }
                    }
                    ("logz-violin", prov, vec!["beta", "rep", "logZhat_minus_logZ"], rows)
                }
                Figure::Table1 => {
                    let n = reproduce::TABLE1_PARTICLES;
                    let prov = Provenance::new(
                        seed,
                        json!({ "command": "reproduce", "which": "table1", "steps": reproduce::TABLE1_STEPS, "particles": n, "reps": reps }),
                    );
                    let mut rows = Vec::new();
                    for t in reproduce::TABLE1_STEPS {
                        for (r, (a, b)) in reproduce::table1_pairs(t, n, reps, &exec, seed)?.into_iter().enumerate() {
                            rows.push(vec![t.to_string(), (r + 1).to_string(), cell(a), cell(b)]);
                        }
                    }
                    ("table1", prov, vec!["T", "rep", "sis", "smc"], rows)
                }
            };
            let header: Vec<String> = header.into_iter().map(String::from).collect();
            emit(Some(&dir.join(format!("{name}.csv"))), &csv_document(&prov, &header, &rows)?)
        }
    }
}

// ------------------------------------------------------- evaluate configs

/// Tempered Gaussian for BREAD: prior `N(prior_mean, prior_var)`, likelihood
/// `N(y_i; x, lik_var)`, `steps` equally spaced temperatures.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreadConfig {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub lik_var: f64,
    pub y: Vec<f64>,
    pub steps: usize,
}

impl Default for BreadConfig {
    fn default() -> Self {
        BreadConfig { prior_mean: 0.0, prior_var: 1.0, lik_var: 1.0, y: vec![1.0], steps: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub particles: usize,
    pub proposal: String,
}

/// AIDE between an approximate and a gold-standard SMC sampler on one model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AideConfig {
    /// Model file; the running example of length `steps` otherwise.
    pub model: Option<PathBuf>,
    pub steps: usize,
    pub approx: SamplerSpec,
    pub gold: SamplerSpec,
}

impl Default for AideConfig {
    fn default() -> Self {
        AideConfig {
            model: None,
            steps: 5,
            approx: SamplerSpec { particles: 2, proposal: "prior".into() },
            gold: SamplerSpec { particles: 20, proposal: "zero-variance".into() },
        }
    }
}
