//! Brute-force ground truth: table enumeration, exact weighted totals,
//! Ryser permanents and the Fisher–Yates total.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, CompensatedSum, LogSumAccumulator};
use crate::problem::{BlockSquareMatrix, ContingencyTable, ProblemInstance};
use crate::Matrix;

/// Default limit on visited partial nodes during enumeration.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Hard cap on the order of a Ryser permanent.
pub const PERMANENT_CAP: usize = 64;

/// Largest order for which routes pick the permanent automatically.
pub const PERMANENT_PRACTICAL: usize = 24;

/// Exact `T(R, C; W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactTotal {
    pub value: f64,
    pub ln_value: f64,
    /// Tables with non-zero weight (every table when all weights are positive).
    pub table_count: u64,
    /// Partial nodes visited by the enumeration.
    pub nodes: u64,
}

struct Enumerator<'a, F> {
    rows: &'a [u64],
    cols: usize,
    allowed: Option<&'a [bool]>,
    col_rem: Vec<u64>,
    entries: Vec<u64>,
    budget: u64,
    nodes: u64,
    visit: F,
}

impl<F: FnMut(&[u64])> Enumerator<'_, F> {
    fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed.is_none_or(|a| a[i * self.cols + j])
    }

    fn fill(&mut self, i: usize, j: usize, row_rem: u64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        if i == self.rows.len() {
            (self.visit)(&self.entries);
            return Ok(());
        }
        let n = self.cols;
        // capacity of the allowed columns to the right of j in this row
        let cap_after: u64 = (j + 1..n)
            .filter(|&k| self.allowed(i, k))
            .map(|k| self.col_rem[k])
            .sum();
        let upper = if self.allowed(i, j) {
            row_rem.min(self.col_rem[j])
        } else {
            0
        };
        let lower = row_rem.saturating_sub(cap_after);
        if lower > upper {
            return Ok(());
        }
        let last = j + 1 == n;
        for d in lower..=upper {
            if last && d != row_rem {
                continue;
            }
            self.entries[i * n + j] = d;
            self.col_rem[j] -= d;
            let result = if last {
                match self.rows.get(i + 1) {
                    Some(&next) => self.fill(i + 1, 0, next),
                    None => self.fill(i + 1, 0, 0),
                }
            } else {
                self.fill(i, j + 1, row_rem - d)
            };
            self.col_rem[j] += d;
            self.entries[i * n + j] = 0;
            result?;
        }
        Ok(())
    }
}

/// Visits every table with the given margins exactly once, in
/// lexicographic row-major order. `allowed` (row-major `m·n`) forces
/// `d_ij = 0` wherever it is false. Returns the number of nodes visited.
pub fn visit_tables<F: FnMut(&[u64])>(
    row_margins: &[u64],
    col_margins: &[u64],
    allowed: Option<&[bool]>,
    budget: u64,
    visit: F,
) -> Result<u64> {
    if row_margins.is_empty() || col_margins.is_empty() {
        return Err(Error::EmptyMargins);
    }
    let rows: u64 = row_margins.iter().sum();
    let cols: u64 = col_margins.iter().sum();
    if rows != cols {
        return Err(Error::MarginSumMismatch { rows, cols });
    }
    if let Some(a) = allowed {
        if a.len() != row_margins.len() * col_margins.len() {
            return Err(Error::DimensionMismatch {
                expected_rows: row_margins.len(),
                expected_cols: col_margins.len(),
                found_rows: a.len(),
                found_cols: 1,
            });
        }
    }
    let mut e = Enumerator {
        rows: row_margins,
        cols: col_margins.len(),
        allowed,
        col_rem: col_margins.to_vec(),
        entries: vec![0; row_margins.len() * col_margins.len()],
        budget,
        nodes: 0,
        visit,
    };
    e.fill(0, 0, row_margins[0])?;
    Ok(e.nodes)
}

/// All tables with the given margins.
pub fn enumerate_tables(row_margins: &[u64], col_margins: &[u64], budget: u64) -> Result<Vec<ContingencyTable>> {
    let (m, n) = (row_margins.len(), col_margins.len());
    let mut out = Vec::new();
    visit_tables(row_margins, col_margins, None, budget, |e| {
        out.push(ContingencyTable::new(m, n, e.to_vec()))
    })?;
    Ok(out)
}

fn log_weights(w: &Matrix) -> Vec<f64> {
    w.as_slice().iter().map(|&x| x.ln()).collect()
}

/// `Σ_D Π w_ij^{d_ij}` over all tables, with `0^0 = 1`.
pub fn weighted_total_exact(problem: &ProblemInstance, budget: u64) -> Result<ExactTotal> {
    let lw = log_weights(problem.weights());
    let allowed: Vec<bool> = problem.weights().as_slice().iter().map(|&w| w > 0.0).collect();
    let mut acc = LogSumAccumulator::new();
    let nodes = visit_tables(problem.row_margins(), problem.col_margins(), Some(&allowed), budget, |e| {
        let ln_w: f64 = e
            .iter()
            .zip(&lw)
            .filter(|(d, _)| **d > 0)
            .map(|(&d, &l)| d as f64 * l)
            .sum();
        acc.add_log(ln_w);
    })?;
    let ln_value = acc.ln_sum();
    Ok(ExactTotal {
        value: ln_value.exp(),
        ln_value,
        table_count: acc.count(),
        nodes,
    })
}

/// `T` in exact integer arithmetic when every weight is a non-negative
/// integer; `None` for other weights or on `u128` overflow.
pub fn weighted_total_integer(problem: &ProblemInstance, budget: u64) -> Result<Option<u128>> {
    let mut w = Vec::with_capacity(problem.m() * problem.n());
    for &x in problem.weights().as_slice() {
        if x.fract() != 0.0 || x > u64::MAX as f64 {
            return Ok(None);
        }
        w.push(x as u128);
    }
    let allowed: Vec<bool> = w.iter().map(|&x| x > 0).collect();
    let mut total: Option<u128> = Some(0);
    visit_tables(problem.row_margins(), problem.col_margins(), Some(&allowed), budget, |e| {
        let term = e.iter().zip(&w).try_fold(1u128, |acc, (&d, &x)| {
            let p = x.checked_pow(u32::try_from(d).ok()?)?;
            acc.checked_mul(p)
        });
        total = match (total, term) {
            (Some(t), Some(v)) => t.checked_add(v),
            _ => None,
        };
    })?;
    Ok(total)
}

/// Permanent by Ryser inclusion–exclusion in the Nijenhuis–Wilf form,
/// iterating subsets in Gray-code order: `O(2^{N-1} · N)`.
pub fn permanent_ryser(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected_rows: a.rows(),
            expected_cols: a.rows(),
            found_rows: a.rows(),
            found_cols: a.cols(),
        });
    }
    let n = a.rows();
    if n > PERMANENT_CAP {
        return Err(Error::PermanentCap {
            order: n,
            cap: PERMANENT_CAP,
        });
    }
    match n {
        0 => return Ok(1.0),
        1 => return Ok(a[(0, 0)]),
        _ => {}
    }
    let mut x: Vec<f64> = (0..n)
        .map(|i| a[(i, n - 1)] - 0.5 * a.row(i).iter().sum::<f64>())
        .collect();
    let mut total = CompensatedSum::new();
    total.add(x.iter().product());
    let mut sign = 1.0;
    let subsets: u64 = 1u64 << (n - 1);
    let mut gray: u64 = 0;
    for k in 1..subsets {
        let j = k.trailing_zeros() as usize;
        gray ^= 1 << j;
        if gray & (1 << j) != 0 {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += a[(i, j)];
            }
        } else {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi -= a[(i, j)];
            }
        }
        sign = -sign;
        total.add(sign * x.iter().product::<f64>());
    }
    let parity = if n.is_multiple_of(2) { -1.0 } else { 1.0 };
    Ok(parity * 2.0 * total.value())
}

/// Fisher–Yates total `Σ_D Π w_ij^{d_ij} / d_ij!` by both routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherYatesTotal {
    /// Direct enumeration, when within budget.
    pub enumeration: Option<f64>,
    /// `per(A_det) / (Π r_i! Π c_j!)`, when the order is small enough.
    pub permanent_route: Option<f64>,
}

impl FisherYatesTotal {
    /// The enumeration value when available, else the permanent route.
    pub fn value(&self) -> f64 {
        self.enumeration
            .or(self.permanent_route)
            .expect("at least one route is present")
    }

    /// Relative gap between the two routes, when both ran.
    pub fn route_gap(&self) -> Option<f64> {
        match (self.enumeration, self.permanent_route) {
            (Some(a), Some(b)) => Some(if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) }),
            _ => None,
        }
    }
}

pub fn fisher_yates_total(problem: &ProblemInstance, budget: u64) -> Result<FisherYatesTotal> {
    let lw = log_weights(problem.weights());
    let allowed: Vec<bool> = problem.weights().as_slice().iter().map(|&w| w > 0.0).collect();
    let mut acc = LogSumAccumulator::new();
    let enumeration = visit_tables(problem.row_margins(), problem.col_margins(), Some(&allowed), budget, |e| {
        let ln_w: f64 = e
            .iter()
            .zip(&lw)
            .filter(|(d, _)| **d > 0)
            .map(|(&d, &l)| d as f64 * l - ln_factorial(d))
            .sum();
        acc.add_log(ln_w);
    });
    let enumeration = match enumeration {
        Ok(_) => Some(acc.ln_sum().exp()),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let order = problem.total() as usize;
    let permanent_route = if order <= PERMANENT_PRACTICAL {
        let a = BlockSquareMatrix::from_block_values(problem.row_margins(), problem.col_margins(), problem.weights())?;
        let per = permanent_ryser(&a.entries)?;
        Some((per.ln() - problem.ln_margin_factorials()).exp())
    } else {
        None
    };
    if enumeration.is_none() && permanent_route.is_none() {
        return Err(Error::Infeasible(format!(
            "enumeration exceeds budget {budget} and order {order} exceeds {PERMANENT_PRACTICAL}"
        )));
    }
    Ok(FisherYatesTotal {
        enumeration,
        permanent_route,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::validate_problem;

    fn count(rows: &[u64], cols: &[u64]) -> usize {
        enumerate_tables(rows, cols, DEFAULT_BUDGET).unwrap().len()
    }

    #[test]
    fn small_counts() {
        let tables = enumerate_tables(&[1, 1], &[1, 1], DEFAULT_BUDGET).unwrap();
        assert_eq!(tables.len(), 2);
        assert!(tables.iter().all(|t| t.has_margins(&[1, 1], &[1, 1])));
        assert_eq!(count(&[2, 2], &[2, 2]), 3);
        assert_eq!(count(&[2, 2, 2], &[2, 2, 2]), 21);
        assert_eq!(count(&[3, 3, 3], &[3, 3, 3]), 55);
    }

    #[test]
    fn tables_are_distinct_and_valid() {
        let tables = enumerate_tables(&[3, 1, 2], &[2, 2, 2], DEFAULT_BUDGET).unwrap();
        let set: std::collections::HashSet<_> = tables.iter().cloned().collect();
        assert_eq!(set.len(), tables.len());
        assert!(tables.iter().all(|t| t.has_margins(&[3, 1, 2], &[2, 2, 2])));
    }

    #[test]
    fn budget_is_enforced() {
        let err = enumerate_tables(&[5, 5, 5, 5], &[5, 5, 5, 5], 100).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 100 }));
    }

    #[test]
    fn weighted_examples() {
        let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = validate_problem(&[1, 1], &[1, 1], &w).unwrap();
        assert!((weighted_total_exact(&p, DEFAULT_BUDGET).unwrap().value - 5.0).abs() < 1e-12);

        let p = ProblemInstance::unweighted(&[2, 2], &[2, 2]).unwrap();
        let t = weighted_total_exact(&p, DEFAULT_BUDGET).unwrap();
        assert!((t.value - 3.0).abs() < 1e-12);
        assert_eq!(t.table_count, 3);

        let w = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let p = validate_problem(&[2, 2], &[2, 2], &w).unwrap();
        let t = weighted_total_exact(&p, DEFAULT_BUDGET).unwrap();
        assert!((t.value - 1.0).abs() < 1e-12);
        assert_eq!(t.table_count, 1);
    }

    #[test]
    fn all_zero_weights_give_zero_total() {
        let p = validate_problem(&[1], &[1], &Matrix::zeros(1, 1)).unwrap();
        let t = weighted_total_exact(&p, DEFAULT_BUDGET).unwrap();
        assert_eq!(t.value, 0.0);
        assert_eq!(t.table_count, 0);
    }

    #[test]
    fn ryser_examples() {
        assert!((permanent_ryser(&Matrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((permanent_ryser(&Matrix::filled(3, 3, 1.0)).unwrap() - 6.0).abs() < 1e-13);
        let third = permanent_ryser(&Matrix::filled(3, 3, 1.0 / 3.0)).unwrap();
        assert!((third - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(permanent_ryser(&Matrix::zeros(0, 0)).unwrap(), 1.0);
        assert_eq!(permanent_ryser(&Matrix::filled(1, 1, 4.0)).unwrap(), 4.0);
        assert!(matches!(
            permanent_ryser(&Matrix::zeros(65, 65)),
            Err(Error::PermanentCap { order: 65, .. })
        ));
        assert!(permanent_ryser(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn ryser_matches_permutation_expansion() {
        // 4x4 with distinct entries, against the N! expansion
        let a = Matrix::from_fn(4, 4, |i, j| 1.0 + (i * 4 + j) as f64 * 0.37);
        let perms = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let expected: f64 = perms
            .iter()
            .map(|p| (0..4).map(|i| a[(i, p[i])]).product::<f64>())
            .sum();
        let per = permanent_ryser(&a).unwrap();
        assert!((per - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn fisher_yates_examples() {
        let p = ProblemInstance::unweighted(&[1, 1], &[1, 1]).unwrap();
        let fy = fisher_yates_total(&p, DEFAULT_BUDGET).unwrap();
        assert!((fy.value() - 2.0).abs() < 1e-12);

        let p = ProblemInstance::unweighted(&[2, 2], &[2, 2]).unwrap();
        let fy = fisher_yates_total(&p, DEFAULT_BUDGET).unwrap();
        assert!((fy.enumeration.unwrap() - 1.5).abs() < 1e-12);
        assert!((fy.permanent_route.unwrap() - 1.5).abs() < 1e-12);
        assert!(fy.route_gap().unwrap() < 1e-9);

        let p = ProblemInstance::unweighted(&[2], &[1, 1]).unwrap();
        assert!((fisher_yates_total(&p, DEFAULT_BUDGET).unwrap().value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_yates_falls_back_to_one_route() {
        let p = ProblemInstance::unweighted(&[3, 3], &[3, 3]).unwrap();
        let fy = fisher_yates_total(&p, 2).unwrap();
        assert!(fy.enumeration.is_none());
        // tables d11 in 0..=3: Σ 1/(d!(3-d)!)^2 = 1/36 + 1/4 + 1/4 + 1/36
        assert!((fy.value() - (2.0 / 36.0 + 0.5)).abs() < 1e-12);

        let big = ProblemInstance::unweighted(&[13, 13], &[13, 13]).unwrap();
        assert!(matches!(fisher_yates_total(&big, 2), Err(Error::Infeasible(_))));
    }

    #[test]
    fn integer_totals() {
        let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = validate_problem(&[1, 1], &[1, 1], &w).unwrap();
        assert_eq!(weighted_total_integer(&p, DEFAULT_BUDGET).unwrap(), Some(5));
        let p = ProblemInstance::unweighted(&[3, 3, 3], &[3, 3, 3]).unwrap();
        assert_eq!(weighted_total_integer(&p, DEFAULT_BUDGET).unwrap(), Some(55));
        let w = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let p = validate_problem(&[2], &[1, 1], &w).unwrap();
        assert_eq!(weighted_total_integer(&p, DEFAULT_BUDGET).unwrap(), None);
    }
}
