//! Monte Carlo estimators of `T` and of the surrogate
//!
//! `T′ = N!/N^N · E σ(A(γ)) / (Π r_i! Π c_j!)`.
//!
//! [`estimate_expected_permanent`] averages Ryser permanents of `A(γ)` and
//! is an unbiased estimator of `T` itself. [`estimate_t_prime_direct`]
//! averages `σ(A(γ))` over exponential draws. [`estimate_t_prime_simplex`]
//! rewrites the orthant integral as an integral over the simplex,
//! truncates it to the `δ`-interior and integrates by annealed hit-and-run.

mod direct;
mod hit_and_run;
mod quadrature;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::bounds::alpha_factor;
use crate::error::{Error, Result};
use crate::numerics::ln_factorial;
use crate::problem::ProblemInstance;

pub use direct::{estimate_expected_permanent, estimate_t_prime_direct, DirectConfig, DirectRun, PermanentEstimate};
pub use hit_and_run::{
    gelman_rubin, hit_and_run_sample, sample_log_concave, DeltaSimplex, HitAndRun, SimplexPoint,
};
pub use quadrature::{verify_orthant_simplex_identity, IdentityCheck, RouteComparison};
pub use simplex::{
    annealed_log_integral, beta_schedule, estimate_t_prime_simplex, estimate_t_prime_simplex_with_density,
    AnnealedIntegral, McmcConfig, ResolvedMcmc, SimplexConfig,
};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Simplex,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::Direct),
            "simplex" => Ok(Method::Simplex),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Extra output of the simplex route.
#[derive(Debug, Clone, Serialize)]
pub struct SimplexDiagnostics {
    pub epsilon: f64,
    pub delta: f64,
    /// `(1 − mnδ)^{N+mn−1}`; the untruncated integral is at most the
    /// truncated one divided by this.
    pub truncation_factor: f64,
    /// `ln ∫_{Δ_δ} S dν`.
    pub ln_integral: f64,
    pub ln_integral_stderr: f64,
    /// Bracket for `∫_Δ S dν`: `[I_δ, I_δ / truncation_factor]`.
    pub integral_bracket: (f64, f64),
    /// `T′` implied by the upper end of the integral bracket.
    pub t_prime_upper: f64,
    pub stages: usize,
    pub chains: usize,
    pub r_hat: f64,
    pub evaluations: u64,
    pub sampler_failures: u64,
    pub restarts: u64,
    /// Set when a diagnostic failed (`r_hat > 1.1`, sampler failures).
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub t_prime: f64,
    pub ln_t_prime: f64,
    pub stderr: f64,
    /// 95% interval for `T′`.
    pub confidence_interval: (f64, f64),
    pub samples_used: u64,
    pub alpha: f64,
    /// `[T′, α·T′]`, the bracket for `T`.
    pub t_bracket: (f64, f64),
    /// Value substituted for zero weights, if any were present.
    pub zero_substitute: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex: Option<SimplexDiagnostics>,
}

impl EstimateReport {
    /// `[T′_lo, α·T′_hi]` from the confidence interval.
    pub fn certified_interval(&self) -> (f64, f64) {
        (self.confidence_interval.0, self.alpha * self.confidence_interval.1)
    }

    pub fn brackets(&self, value: f64) -> bool {
        let (lo, hi) = self.certified_interval();
        lo <= value && value <= hi
    }

    fn assemble(
        problem: &ProblemInstance,
        method: Method,
        ln_t_prime: f64,
        stderr: f64,
        confidence_interval: (f64, f64),
        samples_used: u64,
        zero_substitute: Option<f64>,
        simplex: Option<SimplexDiagnostics>,
    ) -> Self {
        let alpha = alpha_factor(problem.row_margins(), problem.col_margins()).alpha;
        let t_prime = ln_t_prime.exp();
        EstimateReport {
            method,
            t_prime,
            ln_t_prime,
            stderr,
            confidence_interval,
            samples_used,
            alpha,
            t_bracket: (t_prime, alpha * t_prime),
            zero_substitute,
            simplex,
        }
    }
}

/// `ln(N!/N^N) − Σ ln r_i! − Σ ln c_j!`.
pub fn ln_t_prime_prefactor(problem: &ProblemInstance) -> f64 {
    let n = problem.total();
    ln_factorial(n) - n as f64 * (n as f64).ln() - problem.ln_margin_factorials()
}

/// `δ = −ln(1 − ε) / (mn (N + mn − 1))`. Truncating the simplex to its
/// `δ`-interior then loses a factor of about `1 − ε`; see
/// [`certified_delta`] for a `δ` where the loss is at most `1 − ε`.
pub fn delta_for_epsilon(epsilon: f64, m: usize, n: usize, total: u64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let dim = m * n;
    let delta = -(-epsilon).ln_1p() / (dim as f64 * (total as f64 + dim as f64 - 1.0));
    if delta >= 1.0 / dim as f64 {
        return Err(Error::DeltaOutOfRange { delta, dim });
    }
    Ok(delta)
}

/// The largest `δ` with `(1 − mnδ)^{N+mn−1} ≥ 1 − ε`, namely
/// `(1 − (1 − ε)^{1/(N+mn−1)}) / mn`, never above [`delta_for_epsilon`].
pub fn certified_delta(epsilon: f64, m: usize, n: usize, total: u64) -> Result<f64> {
    let upper = delta_for_epsilon(epsilon, m, n, total)?;
    let dim = (m * n) as f64;
    let k = total as f64 + dim - 1.0;
    let x = -((-epsilon).ln_1p() / k).exp_m1();
    // step slightly inward so rounding cannot push the factor below 1 − ε
    Ok((x / dim * (1.0 - 1e-12)).min(upper))
}

/// Lipschitz constant `N/δ` of `ln S` in the max-norm on entries `≥ δ`.
pub fn lipschitz_bound(delta: f64, total: u64) -> f64 {
    total as f64 / delta
}

/// `(1 − mnδ)^{N+mn−1}`.
pub fn truncation_factor(delta: f64, m: usize, n: usize, total: u64) -> f64 {
    let dim = (m * n) as f64;
    ((total as f64 + dim - 1.0) * (-dim * delta).ln_1p()).exp()
}
