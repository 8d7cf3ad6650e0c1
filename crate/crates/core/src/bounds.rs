//! Permanent bounds for doubly stochastic matrices and the approximation
//! factor `α(R, C)` of the bracket `T′ ≤ T ≤ α·T′`.

use serde::Serialize;

use crate::error::Result;
use crate::exact::{permanent_ryser, PERMANENT_PRACTICAL};
use crate::numerics::{ln_factorial, ln_gamma};
use crate::problem::{GammaMatrix, ProblemInstance};
use crate::scaling::{reduced_scale, DEFAULT_MAX_ITERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Rows,
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationFactor {
    pub alpha: f64,
    pub log_alpha: f64,
    /// `Π r_i! / r_i^{r_i}`
    pub row_product: f64,
    /// `Π c_j! / c_j^{c_j}`
    pub col_product: f64,
    /// Side attaining the minimum; rows on ties.
    pub chosen_side: Side,
}

/// `Σ (ln t! − t ln t)` over margins.
fn ln_margin_product(margins: &[u64]) -> f64 {
    margins
        .iter()
        .map(|&t| ln_factorial(t) - t as f64 * (t as f64).ln())
        .sum()
}

/// `α(R, C) = N^N / N! · min(Π r_i!/r_i^{r_i}, Π c_j!/c_j^{c_j})`, in log domain.
pub fn alpha_factor(row_margins: &[u64], col_margins: &[u64]) -> ApproximationFactor {
    let total: u64 = row_margins.iter().sum();
    let ln_rows = ln_margin_product(row_margins);
    let ln_cols = ln_margin_product(col_margins);
    let (ln_min, chosen_side) = if ln_cols < ln_rows {
        (ln_cols, Side::Cols)
    } else {
        (ln_rows, Side::Rows)
    };
    let log_alpha = -ln_vdw(total) + ln_min;
    ApproximationFactor {
        alpha: log_alpha.exp(),
        log_alpha,
        row_product: ln_rows.exp(),
        col_product: ln_cols.exp(),
        chosen_side,
    }
}

fn checked_factorial(n: u64) -> Option<u128> {
    (2..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

fn checked_pow(base: u64, exp: u64) -> Option<u128> {
    (0..exp).try_fold(1u128, |acc, _| acc.checked_mul(base as u128))
}

/// `α(R, C)` from exact integer factorials; `None` once `u128` overflows.
pub fn alpha_factor_exact(row_margins: &[u64], col_margins: &[u64]) -> Option<f64> {
    let total: u64 = row_margins.iter().sum();
    let side = |margins: &[u64]| -> Option<(u128, u128)> {
        margins.iter().try_fold((1u128, 1u128), |(num, den), &t| {
            Some((num.checked_mul(checked_factorial(t)?)?, den.checked_mul(checked_pow(t, t)?)?))
        })
    };
    let (rn, rd) = side(row_margins)?;
    let (cn, cd) = side(col_margins)?;
    // compare rn/rd with cn/cd without division
    let (num, den) = match (rn.checked_mul(cd), cn.checked_mul(rd)) {
        (Some(a), Some(b)) if b < a => (cn, cd),
        (Some(_), Some(_)) => (rn, rd),
        _ => return None,
    };
    let num = num.checked_mul(checked_pow(total, total)?)?;
    let den = den.checked_mul(checked_factorial(total)?)?;
    Some(num as f64 / den as f64)
}

fn ln_vdw(order: u64) -> f64 {
    ln_factorial(order) - order as f64 * (order as f64).ln()
}

/// `N! / N^N`, the minimum permanent of an `N × N` doubly stochastic matrix.
pub fn vdw_lower_bound(order: u64) -> f64 {
    ln_vdw(order).exp()
}

/// `ln Π (t_i!)^{1/t_i} / t_i`.
pub fn ln_bregman_extension_bound(t: &[u64]) -> f64 {
    t.iter()
        .map(|&ti| ln_factorial(ti) / ti as f64 - (ti as f64).ln())
        .sum()
}

/// Upper bound on `per B` for `B` with unit row sums and `b_ij ≤ 1/t_i`,
/// `t_i` positive integers.
pub fn bregman_extension_bound(t: &[u64]) -> f64 {
    ln_bregman_extension_bound(t).exp()
}

/// `ln Π Γ(t_i + 1)^{1/t_i} / t_i`.
pub fn ln_soules_bound(t: &[f64]) -> f64 {
    t.iter().map(|&ti| ln_gamma(ti + 1.0) / ti - ti.ln()).sum()
}

/// The real-`t_i` version of [`bregman_extension_bound`].
pub fn soules_bound(t: &[f64]) -> f64 {
    ln_soules_bound(t).exp()
}

/// `per B` bounds for the doubly stochastic factor of a block matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginBounds {
    pub per_b_lower: f64,
    pub per_b_upper_rows: f64,
    pub per_b_upper_cols: f64,
    /// Ryser value of `per B`, when the order allows it.
    pub per_b: Option<f64>,
}

impl MarginBounds {
    pub fn upper(&self) -> f64 {
        self.per_b_upper_rows.min(self.per_b_upper_cols)
    }

    /// Whether `per B` (when computed) lies in `[lower, upper]` up to `slack`
    /// relative error.
    pub fn holds(&self, slack: f64) -> Option<bool> {
        self.per_b
            .map(|p| p >= self.per_b_lower * (1.0 - slack) && p <= self.upper() * (1.0 + slack))
    }
}

/// `N!/N^N`, and the row and column bounds obtained by applying
/// [`bregman_extension_bound`] with `t = r_i` repeated over each row block
/// (resp. `t = c_j` over each column block).
pub fn margin_permanent_bounds(row_margins: &[u64], col_margins: &[u64]) -> (f64, f64, f64) {
    let total: u64 = row_margins.iter().sum();
    let repeat = |margins: &[u64]| -> Vec<u64> {
        margins
            .iter()
            .flat_map(|&t| std::iter::repeat_n(t, t as usize))
            .collect()
    };
    (
        vdw_lower_bound(total),
        bregman_extension_bound(&repeat(row_margins)),
        bregman_extension_bound(&repeat(col_margins)),
    )
}

/// Scales `A(γ)` through the reduced route, computes `per B` by Ryser
/// when feasible, and returns it with the margin bounds.
pub fn check_margin_bounds(problem: &ProblemInstance, gamma: &GammaMatrix, tol: f64) -> Result<MarginBounds> {
    let (lower, rows, cols) = margin_permanent_bounds(problem.row_margins(), problem.col_margins());
    let per_b = if problem.total() as usize <= PERMANENT_PRACTICAL {
        let scaled = reduced_scale(problem, gamma, tol, DEFAULT_MAX_ITERS)?;
        let b = scaled.block_bistochastic(problem)?;
        Some(permanent_ryser(&b)?)
    } else {
        None
    };
    Ok(MarginBounds {
        per_b_lower: lower,
        per_b_upper_rows: rows,
        per_b_upper_cols: cols,
        per_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_factor(&[1, 1, 1], &[1, 1, 1]);
        assert!(close(a.alpha, 27.0 / 6.0, 1e-13));
        assert!(close(alpha_factor(&[1, 1], &[1, 1]).alpha, 2.0, 1e-13));
        let a = alpha_factor(&[2, 2, 2], &[2, 2, 2]);
        assert!(close(a.alpha, 8.1, 1e-12));
        assert!(close(alpha_factor_exact(&[2, 2, 2], &[2, 2, 2]).unwrap(), 8.1, 1e-15));
        assert!(a.alpha >= 1.0);
        assert!(close(alpha_factor(&[5], &[5]).alpha, 1.0, 1e-13));
    }

    #[test]
    fn alpha_prefers_smaller_side() {
        // rows (3) vs cols (1,1,1): the row side gives 3!/27 < 1
        let a = alpha_factor(&[3], &[1, 1, 1]);
        assert_eq!(a.chosen_side, Side::Rows);
        assert_eq!(alpha_factor(&[1, 1, 1], &[3]).chosen_side, Side::Cols);
        assert!(close(a.alpha, 1.0, 1e-13));
    }

    #[test]
    fn exact_alpha_overflows_gracefully() {
        assert!(alpha_factor_exact(&[40, 40], &[40, 40]).is_none());
        let exact = alpha_factor_exact(&[3, 2, 4], &[5, 4]).unwrap();
        assert!(close(alpha_factor(&[3, 2, 4], &[5, 4]).alpha, exact, 1e-12));
    }

    #[test]
    fn vdw_examples() {
        assert_eq!(vdw_lower_bound(1), 1.0);
        assert!(close(vdw_lower_bound(3), 2.0 / 9.0, 1e-14));
        for n in 1..=8u64 {
            let j = Matrix::filled(n as usize, n as usize, 1.0 / n as f64);
            assert!(close(permanent_ryser(&j).unwrap(), vdw_lower_bound(n), 1e-10));
        }
    }

    #[test]
    fn bregman_and_soules_examples() {
        assert!(close(bregman_extension_bound(&[1, 1, 1]), 1.0, 1e-15));
        assert!(close(bregman_extension_bound(&[4, 4, 4, 4]), vdw_lower_bound(4), 1e-13));
        assert!(close(soules_bound(&[1.0, 1.0]), 1.0, 1e-14));
        assert!(close(soules_bound(&[2.0]), std::f64::consts::SQRT_2 / 2.0, 1e-14));
        let ints = [1u64, 2, 3, 5, 8];
        let reals: Vec<f64> = ints.iter().map(|&t| t as f64).collect();
        assert!(close(soules_bound(&reals), bregman_extension_bound(&ints), 1e-12));
    }

    #[test]
    fn margin_bound_examples() {
        let (lo, rows, cols) = margin_permanent_bounds(&[1, 1, 1], &[1, 1, 1]);
        assert!(close(rows, 1.0, 1e-14) && close(cols, 1.0, 1e-14));
        assert!(close(lo, 2.0 / 9.0, 1e-14));
        let (lo, rows, _) = margin_permanent_bounds(&[2, 2], &[2, 2]);
        assert!(close(lo, 0.09375, 1e-13) && close(rows, 0.25, 1e-13));
        let (lo, rows, _) = margin_permanent_bounds(&[2, 2, 2], &[2, 2, 2]);
        assert!(close(rows, 0.125, 1e-13));
        assert!(close(lo, 720.0 / 46656.0, 1e-13));
    }

    #[test]
    fn checked_bounds_hold_for_block_matrix() {
        let w = Matrix::from_rows(&[vec![1.0, 3.0], vec![0.5, 2.0]]).unwrap();
        let p = crate::problem::validate_problem(&[2, 2], &[2, 2], &w).unwrap();
        let g = GammaMatrix::new(Matrix::from_rows(&[vec![0.3, 1.4], vec![2.2, 0.9]]).unwrap()).unwrap();
        let mb = check_margin_bounds(&p, &g, 1e-12).unwrap();
        let per = mb.per_b.unwrap();
        assert!(per >= 0.09375 - 1e-12 && per <= 0.25 + 1e-12, "per B = {per}");
        assert_eq!(mb.holds(1e-10), Some(true));
    }
}
