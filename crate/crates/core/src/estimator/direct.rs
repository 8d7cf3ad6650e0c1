use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ln_t_prime_prefactor, EstimateReport, Method, Z95};
use crate::error::{Error, Result};
use crate::exact::{permanent_ryser, PERMANENT_CAP};
use crate::numerics::{log_mean_exp, mean_variance};
use crate::problem::{assemble_block_matrix, ProblemInstance};
use crate::random::{sample_gamma, RandomSource};
use crate::scaling::{reduced_scale, DEFAULT_MAX_ITERS, DEFAULT_TOL};

/// Samples per random stream. Sample `k` always comes from stream
/// `k / CHUNK`, whatever the thread count.
const CHUNK: u64 = 256;

fn chunked<T: Send>(samples: u64, per_chunk: impl Fn(u64, u64) -> Result<Vec<T>> + Sync) -> Result<Vec<T>> {
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(samples - c * CHUNK);
            per_chunk(c, len)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Monte Carlo estimate of `T = E per A(γ) / (Π r_i! Π c_j!)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PermanentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Sample mean of `per A(γ)` and its standard error.
    pub mean_permanent: f64,
    pub mean_permanent_stderr: f64,
    pub samples: u64,
}

pub fn estimate_expected_permanent(
    problem: &ProblemInstance,
    samples: u64,
    source: &RandomSource,
) -> Result<PermanentEstimate> {
    let order = problem.total() as usize;
    if order > PERMANENT_CAP {
        return Err(Error::PermanentCap {
            order,
            cap: PERMANENT_CAP,
        });
    }
    if samples < 2 {
        return Err(Error::InvalidConfig("at least 2 samples are required".into()));
    }
    let (m, n) = (problem.m(), problem.n());
    let pers = chunked(samples, |chunk, len| {
        let mut rng = source.stream(chunk);
        (0..len)
            .map(|_| {
                let gamma = sample_gamma(m, n, &mut rng);
                permanent_ryser(&assemble_block_matrix(problem, &gamma)?.entries)
            })
            .collect()
    })?;
    let (mean, var) = mean_variance(&pers);
    let se = (var / samples as f64).sqrt();
    let scale = (-problem.ln_margin_factorials()).exp();
    Ok(PermanentEstimate {
        estimate: mean * scale,
        stderr: se * scale,
        mean_permanent: mean,
        mean_permanent_stderr: se,
        samples,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectConfig {
    pub samples: u64,
    pub tol: f64,
    pub max_iters: usize,
    /// Replacement for zero weights; `None` picks the problem default.
    pub zero_substitute: Option<f64>,
}

impl Default for DirectConfig {
    fn default() -> Self {
        DirectConfig {
            samples: 10_000,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            zero_substitute: None,
        }
    }
}

/// Report plus the per-sample `ln σ(A(γ))` trace.
#[derive(Debug, Clone)]
pub struct DirectRun {
    pub report: EstimateReport,
    pub log_sigmas: Vec<f64>,
}

/// Plain Monte Carlo over exponential draws of `γ`, each `σ(A(γ))`
/// computed by reduced scaling. A sample whose scaling fails to converge
/// is retried once with ten times the iteration budget.
pub fn estimate_t_prime_direct(
    problem: &ProblemInstance,
    config: &DirectConfig,
    source: &RandomSource,
) -> Result<DirectRun> {
    if config.samples < 2 {
        return Err(Error::InvalidConfig("at least 2 samples are required".into()));
    }
    let zero_substitute = problem
        .has_zero_weight()
        .then(|| config.zero_substitute.unwrap_or_else(|| problem.default_zero_substitute()));
    let effective = problem.with_positive_weights(zero_substitute);
    let (m, n) = (problem.m(), problem.n());
    let log_sigmas = chunked(config.samples, |chunk, len| {
        let mut rng = source.stream(chunk);
        (0..len)
            .map(|_| {
                let gamma = sample_gamma(m, n, &mut rng);
                match reduced_scale(&effective, &gamma, config.tol, config.max_iters) {
                    Ok(r) => Ok(r.log_sigma),
                    Err(Error::NonConvergence { .. }) => {
                        let retry_iters = config.max_iters.saturating_mul(10);
                        Ok(reduced_scale(&effective, &gamma, config.tol, retry_iters)?.log_sigma)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect()
    })?;
    let report = summarize_direct(problem, &log_sigmas, zero_substitute);
    Ok(DirectRun { report, log_sigmas })
}

fn summarize_direct(problem: &ProblemInstance, log_sigmas: &[f64], zero_substitute: Option<f64>) -> EstimateReport {
    let count = log_sigmas.len();
    let shift = log_sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_sigmas.iter().map(|l| (l - shift).exp()).collect();
    let (_, var) = mean_variance(&shifted);
    let ln_mean = log_mean_exp(log_sigmas);
    let ln_pref = ln_t_prime_prefactor(problem);
    let ln_t_prime = ln_pref + ln_mean;
    let stderr = (var / count as f64).sqrt() * (ln_pref + shift).exp();
    let t_prime = ln_t_prime.exp();
    let ci = ((t_prime - Z95 * stderr).max(0.0), t_prime + Z95 * stderr);
    EstimateReport::assemble(
        problem,
        Method::Direct,
        ln_t_prime,
        stderr,
        ci,
        count as u64,
        zero_substitute,
        None,
    )
}
