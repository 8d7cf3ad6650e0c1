//! Quadrature check of the orthant/simplex identity
//!
//! `∫_{R^d_+} F(γ) e^{−Σγ} dγ = (N+d−1)!/√d · ∫_Δ F dν`
//!
//! for the degree-`N` homogeneous functions `P(γ) = per A(γ)` and
//! `S(γ) = σ(A(γ))`, at `d = mn ≤ 3`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::permanent_ryser;
use crate::numerics::{gauss_laguerre, gauss_legendre_unit, ln_factorial, CompensatedSum};
use crate::problem::{assemble_block_matrix, GammaMatrix, ProblemInstance};
use crate::scaling::{reduced_scale, DEFAULT_MAX_ITERS};

const MAX_DIM: usize = 3;
const MAX_TOTAL: u64 = 4;
const NODES: usize = 24;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RouteComparison {
    pub orthant: f64,
    pub simplex: f64,
    pub relative_discrepancy: f64,
}

impl RouteComparison {
    fn new(orthant: f64, simplex: f64) -> Self {
        RouteComparison {
            orthant,
            simplex,
            relative_discrepancy: (orthant - simplex).abs() / orthant.abs().max(f64::MIN_POSITIVE),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    pub permanent: RouteComparison,
    pub sigma: RouteComparison,
    /// `|P(τγ) / (τ^N P(γ)) − 1|` at a fixed point, `τ = 2.5`.
    pub homogeneity_error: f64,
}

fn orthant<F: FnMut(&[f64]) -> f64>(dim: usize, f: &mut F) -> f64 {
    let (x, w) = gauss_laguerre(NODES);
    let mut acc = CompensatedSum::new();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        let mut weight = 1.0;
        for k in 0..dim {
            point[k] = x[idx[k]];
            weight *= w[idx[k]];
        }
        acc.add(weight * f(&point));
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] < NODES {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    acc.value()
}

/// `∫_Δ F dν`, with `dν = √d dx_1…dx_{d−1}`.
fn simplex<F: FnMut(&[f64]) -> f64>(dim: usize, f: &mut F) -> f64 {
    let (x, w) = gauss_legendre_unit(NODES);
    let root = (dim as f64).sqrt();
    match dim {
        1 => f(&[1.0]),
        2 => root * x.iter().zip(&w).map(|(&u, &wu)| wu * f(&[u, 1.0 - u])).collect::<CompensatedSum>().value(),
        3 => {
            // Duffy map (u, v) ↦ (u, (1−u)v, (1−u)(1−v)), Jacobian 1−u
            let mut acc = CompensatedSum::new();
            for (&u, &wu) in x.iter().zip(&w) {
                for (&v, &wv) in x.iter().zip(&w) {
                    let p = [u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)];
                    acc.add(wu * wv * (1.0 - u) * f(&p));
                }
            }
            root * acc.value()
        }
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Both sides of the identity for `P` and `S` on a small problem.
pub fn verify_orthant_simplex_identity(problem: &ProblemInstance) -> Result<IdentityCheck> {
    let (m, n, total) = (problem.m(), problem.n(), problem.total());
    let dim = m * n;
    if dim > MAX_DIM || total > MAX_TOTAL {
        return Err(Error::Infeasible(format!(
            "quadrature check needs mn <= {MAX_DIM} and N <= {MAX_TOTAL}, got mn = {dim}, N = {total}"
        )));
    }
    let positive = problem.with_positive_weights(None);
    let gamma = |x: &[f64]| GammaMatrix::from_flat(m, n, x);
    let mut p = |x: &[f64]| -> f64 {
        gamma(x)
            .and_then(|g| assemble_block_matrix(problem, &g))
            .and_then(|a| permanent_ryser(&a.entries))
            .unwrap_or(f64::NAN)
    };
    let mut s = |x: &[f64]| -> f64 {
        match gamma(x).and_then(|g| reduced_scale(&positive, &g, 1e-13, DEFAULT_MAX_ITERS)) {
            Ok(r) => r.log_sigma.exp(),
            Err(_) => f64::NAN,
        }
    };
    let scale = (ln_factorial(total + dim as u64 - 1) - 0.5 * (dim as f64).ln()).exp();
    let permanent = RouteComparison::new(orthant(dim, &mut p), scale * simplex(dim, &mut p));
    let sigma = RouteComparison::new(orthant(dim, &mut s), scale * simplex(dim, &mut s));

    let base: Vec<f64> = (0..dim).map(|k| 0.3 + 0.2 * k as f64).collect();
    let tau: f64 = 2.5;
    let scaled: Vec<f64> = base.iter().map(|v| tau * v).collect();
    let homogeneity_error = (p(&scaled) / (tau.powi(total as i32) * p(&base)) - 1.0).abs();
    Ok(IdentityCheck {
        permanent,
        sigma,
        homogeneity_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_two_agrees() {
        for total in [2u64, 3] {
            let cols = if total == 2 { vec![1, 1] } else { vec![2, 1] };
            let p = ProblemInstance::unweighted(&[total], &cols).unwrap();
            let c = verify_orthant_simplex_identity(&p).unwrap();
            assert!(c.permanent.relative_discrepancy < 1e-10, "{c:?}");
            assert!(c.sigma.relative_discrepancy < 1e-10, "{c:?}");
            assert!(c.homogeneity_error < 1e-12);
        }
    }

    #[test]
    fn orthant_side_matches_closed_form() {
        // R = (2), C = (1, 1): per A = 2 γ_1 γ_2, E per A = 2
        let p = ProblemInstance::unweighted(&[2], &[1, 1]).unwrap();
        let c = verify_orthant_simplex_identity(&p).unwrap();
        assert!((c.permanent.orthant - 2.0).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn three_cells_and_weights() {
        let w = crate::Matrix::from_rows(&[vec![1.0], vec![2.0], vec![0.5]]).unwrap();
        let p = crate::validate_problem(&[1, 2, 1], &[4], &w).unwrap();
        let c = verify_orthant_simplex_identity(&p).unwrap();
        assert!(c.permanent.relative_discrepancy < 1e-10, "{c:?}");
        assert!(c.sigma.relative_discrepancy < 1e-10, "{c:?}");
    }

    #[test]
    fn rejects_large_problems() {
        let p = ProblemInstance::unweighted(&[1, 1], &[1, 1]).unwrap();
        assert!(verify_orthant_simplex_identity(&p).is_err());
    }
}
