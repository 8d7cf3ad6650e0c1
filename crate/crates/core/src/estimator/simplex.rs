use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hit_and_run::{gelman_rubin, hit_and_run_sample, DeltaSimplex};
use super::{
    certified_delta, lipschitz_bound, ln_t_prime_prefactor, truncation_factor, EstimateReport, Method,
    SimplexDiagnostics, Z95,
};
use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, log_sum_exp};
use crate::problem::ProblemInstance;
use crate::random::RandomSource;
use crate::scaling::{reduced_scale_values, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::Matrix;

/// Sampler settings; every field is optional and defaults by dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Steps discarded before the first stage; default `1000·mn`.
    pub burn_in: Option<usize>,
    /// Steps between kept states; default `mn`.
    pub thin: Option<usize>,
    /// Independent chains; default 8.
    pub chains: Option<usize>,
    /// Number of annealing ratios; default `min(⌈10√mn⌉, 64)`.
    pub beta_stages: Option<usize>,
    /// Kept states per chain and stage; default 200.
    pub samples_per_stage: Option<usize>,
    /// Steps discarded after each temperature change; default `10·thin`.
    pub stage_burn_in: Option<usize>,
    /// First positive inverse temperature; default `1e-3`.
    pub beta_min: Option<f64>,
}

impl McmcConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, dim: usize) -> Result<ResolvedMcmc> {
        let thin = self.thin.unwrap_or(dim).max(1);
        let r = ResolvedMcmc {
            burn_in: self.burn_in.unwrap_or(1000 * dim),
            thin,
            chains: self.chains.unwrap_or(8),
            beta_stages: self
                .beta_stages
                .unwrap_or_else(|| ((10.0 * (dim as f64).sqrt()).ceil() as usize).min(64)),
            samples_per_stage: self.samples_per_stage.unwrap_or(200),
            stage_burn_in: self.stage_burn_in.unwrap_or(10 * thin),
            beta_min: self.beta_min.unwrap_or(1e-3),
        };
        if r.chains < 2 {
            return Err(Error::InvalidConfig("at least 2 chains are required".into()));
        }
        if r.beta_stages == 0 || r.samples_per_stage < 2 {
            return Err(Error::InvalidConfig(
                "beta_stages must be positive and samples_per_stage at least 2".into(),
            ));
        }
        if !(r.beta_min > 0.0 && r.beta_min <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta_min {} is not in (0, 1]", r.beta_min)));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedMcmc {
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub beta_stages: usize,
    pub samples_per_stage: usize,
    pub stage_burn_in: usize,
    pub beta_min: f64,
}

/// `β_0 = 0` followed by `stages` geometric steps from `beta_min` to 1.
pub fn beta_schedule(stages: usize, beta_min: f64) -> Vec<f64> {
    let mut betas = vec![0.0];
    if stages <= 1 {
        betas.push(1.0);
        return betas;
    }
    let ratio = (1.0 / beta_min).ln() / (stages - 1) as f64;
    betas.extend((0..stages).map(|k| (beta_min.ln() + ratio * k as f64).exp()));
    *betas.last_mut().unwrap() = 1.0;
    betas
}

/// Annealed estimate of `ln ∫_{Δ_δ} exp(log_f) dν`.
#[derive(Debug, Clone, Serialize)]
pub struct AnnealedIntegral {
    pub ln_integral: f64,
    /// Jackknife standard error over chains.
    pub stderr: f64,
    pub stage_log_ratios: Vec<f64>,
    /// Largest `R̂` of the `log_f` traces over all stages.
    pub r_hat: f64,
    pub evaluations: u64,
    pub failures: u64,
    pub restarts: u64,
    pub chains: usize,
    pub stages: usize,
}

struct ChainTrace {
    /// `log_f` of the kept states, per stage.
    values: Vec<Vec<f64>>,
    evaluations: u64,
    failures: u64,
    restarts: u64,
}

fn run_chain<F>(
    log_f: &F,
    simplex: DeltaSimplex,
    config: &ResolvedMcmc,
    betas: &[f64],
    lipschitz: Option<f64>,
    source: &RandomSource,
    index: u64,
) -> ChainTrace
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = source.stream(index);
    let start = simplex.sample_uniform(&mut rng).values;
    let beta = Cell::new(0.0);
    let evals = Cell::new(0u64);
    let target = |x: &[f64]| {
        let b = beta.get();
        if b == 0.0 {
            0.0
        } else {
            evals.set(evals.get() + 1);
            b * log_f(x)
        }
    };
    let mut chain = hit_and_run_sample(target, simplex, config.burn_in, config.thin, rng).with_start(start);
    if let Some(l) = lipschitz {
        chain = chain.with_lipschitz(l);
    }
    let mut values = Vec::with_capacity(betas.len() - 1);
    for (k, &b) in betas[..betas.len() - 1].iter().enumerate() {
        beta.set(b);
        if k > 0 {
            chain.rewarm(config.stage_burn_in);
        }
        let stage: Vec<f64> = (0..config.samples_per_stage)
            .map(|_| {
                let p = chain.next().expect("chain is infinite");
                log_f(&p.values)
            })
            .collect();
        evals.set(evals.get() + stage.len() as u64);
        values.push(stage);
    }
    ChainTrace {
        values,
        evaluations: evals.get(),
        failures: chain.failures,
        restarts: chain.restarts,
    }
}

/// Telescoping estimate over the densities `∝ exp(β_k log_f)` on `Δ_δ`:
/// `∫ e^{log_f} = ν(Δ_δ) Π_k E_k[exp((β_{k+1} − β_k) log_f)]`, each
/// expectation from hit-and-run states drawn at `β_k`. Chains run in
/// parallel on streams `0..chains` of `source`.
pub fn annealed_log_integral<F>(
    log_f: F,
    simplex: DeltaSimplex,
    config: &ResolvedMcmc,
    betas: &[f64],
    lipschitz: Option<f64>,
    source: &RandomSource,
) -> Result<AnnealedIntegral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if betas.len() < 2 || betas[0] != 0.0 || *betas.last().unwrap() != 1.0 || betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("betas must increase from 0 to 1".into()));
    }
    let traces: Vec<ChainTrace> = (0..config.chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&log_f, simplex, config, betas, lipschitz, source, c))
        .collect();
    let stages = betas.len() - 1;
    let ln_nu = simplex.ln_measure();

    // per chain and stage: ln Σ exp(Δβ log_f)
    let chain_sums: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            (0..stages)
                .map(|k| {
                    let db = betas[k + 1] - betas[k];
                    let terms: Vec<f64> = t.values[k].iter().map(|v| db * v).collect();
                    log_sum_exp(&terms)
                })
                .collect()
        })
        .collect();
    for (c, sums) in chain_sums.iter().enumerate() {
        if sums.iter().any(|s| !s.is_finite()) {
            return Err(Error::Sampler(format!("non-finite log density on chain {c}")));
        }
    }
    let per_stage = config.samples_per_stage as f64;
    let pooled = |skip: Option<usize>| -> (f64, Vec<f64>) {
        let used = config.chains - usize::from(skip.is_some());
        let ratios: Vec<f64> = (0..stages)
            .map(|k| {
                let sums: Vec<f64> = chain_sums
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| Some(*c) != skip)
                    .map(|(_, s)| s[k])
                    .collect();
                log_sum_exp(&sums) - (used as f64 * per_stage).ln()
            })
            .collect();
        (ln_nu + ratios.iter().sum::<f64>(), ratios)
    };
    let (ln_integral, stage_log_ratios) = pooled(None);
    let leave_out: Vec<f64> = (0..config.chains).map(|c| pooled(Some(c)).0).collect();
    let c = config.chains as f64;
    let mean = leave_out.iter().sum::<f64>() / c;
    let stderr = ((c - 1.0) / c * leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt();

    let mut r_hat: f64 = 1.0;
    for k in 0..stages {
        if betas[k] == 0.0 {
            continue;
        }
        let per_chain: Vec<Vec<f64>> = traces.iter().map(|t| t.values[k].clone()).collect();
        let r = gelman_rubin(&per_chain);
        if r.is_nan() {
            continue;
        }
        r_hat = r_hat.max(r);
    }
    Ok(AnnealedIntegral {
        ln_integral,
        stderr,
        stage_log_ratios,
        r_hat,
        evaluations: traces.iter().map(|t| t.evaluations).sum(),
        failures: traces.iter().map(|t| t.failures).sum(),
        restarts: traces.iter().map(|t| t.restarts).sum(),
        chains: config.chains,
        stages,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplexConfig {
    pub epsilon: f64,
    /// Overrides the `δ` derived from `epsilon` by [`certified_delta`].
    pub delta: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub zero_substitute: Option<f64>,
    pub mcmc: McmcConfig,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig {
            epsilon: 0.1,
            delta: None,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            zero_substitute: None,
            mcmc: McmcConfig::default(),
        }
    }
}

/// `T′` from the simplex form of the orthant integral.
///
/// `ln S(γ) = ln σ(A(γ))` is evaluated by reduced scaling at each point of
/// `Δ_δ`; a point where scaling fails contributes `-inf` and aborts the run.
pub fn estimate_t_prime_simplex(
    problem: &ProblemInstance,
    config: &SimplexConfig,
    source: &RandomSource,
) -> Result<EstimateReport> {
    let zero_substitute = problem
        .has_zero_weight()
        .then(|| config.zero_substitute.unwrap_or_else(|| problem.default_zero_substitute()));
    let effective = problem.with_positive_weights(zero_substitute);
    let (m, n) = (problem.m(), problem.n());
    let w = effective.weights().clone();
    let (rows, cols) = (effective.row_margins().to_vec(), effective.col_margins().to_vec());
    let (tol, max_iters) = (config.tol, config.max_iters);
    let log_s = move |x: &[f64]| {
        let values = Matrix::from_fn(m, n, |i, j| w[(i, j)] * x[i * n + j]);
        match reduced_scale_values(&rows, &cols, &values, tol, max_iters) {
            Ok(r) => r.log_sigma,
            Err(_) => match reduced_scale_values(&rows, &cols, &values, tol, max_iters.saturating_mul(10)) {
                Ok(r) => r.log_sigma,
                Err(_) => f64::NEG_INFINITY,
            },
        }
    };
    let mut report = estimate_t_prime_simplex_with_density(problem, config, source, log_s)?;
    report.zero_substitute = zero_substitute;
    Ok(report)
}

/// The simplex pipeline with `ln S` replaced by `log_s` (defined on the
/// flattened `m × n` point). With `log_s ≡ 0` the result is the closed-form
/// value `ν(Δ_δ) (N+mn−1)!/√mn` times the prefactor.
pub fn estimate_t_prime_simplex_with_density<F>(
    problem: &ProblemInstance,
    config: &SimplexConfig,
    source: &RandomSource,
    log_s: F,
) -> Result<EstimateReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (m, n, total) = (problem.m(), problem.n(), problem.total());
    let dim = m * n;
    let ln_scale = ln_t_prime_prefactor(problem) + ln_factorial(total + dim as u64 - 1) - 0.5 * (dim as f64).ln();
    if dim == 1 {
        // Δ is the single point γ = 1
        let ln_integral = log_s(&[1.0]);
        let ln_t_prime = ln_scale + ln_integral;
        let t_prime = ln_t_prime.exp();
        let diagnostics = SimplexDiagnostics {
            epsilon: config.epsilon,
            delta: 0.0,
            truncation_factor: 1.0,
            ln_integral,
            ln_integral_stderr: 0.0,
            integral_bracket: (ln_integral.exp(), ln_integral.exp()),
            t_prime_upper: t_prime,
            stages: 0,
            chains: 0,
            r_hat: 1.0,
            evaluations: 1,
            sampler_failures: 0,
            restarts: 0,
            flagged: false,
        };
        return Ok(EstimateReport::assemble(
            problem,
            Method::Simplex,
            ln_t_prime,
            0.0,
            (t_prime, t_prime),
            1,
            None,
            Some(diagnostics),
        ));
    }

    let delta = match config.delta {
        Some(d) => d,
        None => certified_delta(config.epsilon, m, n, total)?,
    };
    let simplex = DeltaSimplex::new(dim, delta)?;
    let mcmc = config.mcmc.resolve(dim)?;
    let betas = beta_schedule(mcmc.beta_stages, mcmc.beta_min);
    let lipschitz = (delta > 0.0).then(|| lipschitz_bound(delta, total));
    let integral = annealed_log_integral(log_s, simplex, &mcmc, &betas, lipschitz, source)?;

    let trunc = truncation_factor(delta, m, n, total);
    let ln_t_prime = ln_scale + integral.ln_integral;
    let t_prime = ln_t_prime.exp();
    let se = integral.stderr;
    let ci = (t_prime * (-Z95 * se).exp(), t_prime * (Z95 * se).exp());
    let flagged = integral.r_hat > 1.1 || integral.failures > 0 || !se.is_finite();
    let i_delta = integral.ln_integral.exp();
    let diagnostics = SimplexDiagnostics {
        epsilon: config.epsilon,
        delta,
        truncation_factor: trunc,
        ln_integral: integral.ln_integral,
        ln_integral_stderr: se,
        integral_bracket: (i_delta, i_delta / trunc),
        t_prime_upper: t_prime / trunc,
        stages: integral.stages,
        chains: integral.chains,
        r_hat: integral.r_hat,
        evaluations: integral.evaluations,
        sampler_failures: integral.failures,
        restarts: integral.restarts,
        flagged,
    };
    let samples = (mcmc.chains * integral.stages * mcmc.samples_per_stage) as u64;
    Ok(EstimateReport::assemble(
        problem,
        Method::Simplex,
        ln_t_prime,
        t_prime * se,
        ci,
        samples,
        None,
        Some(diagnostics),
    ))
}
