//! Matrix scaling.
//!
//! A positive `N × N` matrix factors uniquely as `a_ij = b_ij ξ_i η_j`
//! with `B` doubly stochastic and `Π η_j = 1`; `σ(A) = Π ξ_i`. Two
//! independent routes compute `ln σ`:
//!
//! * alternating row/column normalization ([`sinkhorn_scale`]);
//! * Newton minimization of `f_A(t) = Σ_i ln Σ_j a_ij e^{t_j}` over the
//!   hyperplane `Σ t_j = 0` ([`sigma_via_minimization`]).
//!
//! [`reduced_scale`] scales the `m × n` matrix `(w_ij γ_ij)` to the margins
//! instead of the full block matrix, which yields the same `σ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, solve_linear, CompensatedSum};
use crate::problem::{GammaMatrix, ProblemInstance};
use crate::Matrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Output of [`sinkhorn_scale`].
#[derive(Debug, Clone, Serialize)]
pub struct ScalingResult {
    /// Doubly stochastic factor.
    pub b: Matrix,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub ln_xi: Vec<f64>,
    pub ln_eta: Vec<f64>,
    pub log_sigma: f64,
    pub iterations: usize,
    /// Max relative deviation of the row and column sums of `B` from 1.
    pub residual: f64,
}

impl ScalingResult {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

/// Output of [`reduced_scale`]: `w_ij γ_ij = l_ij μ_i λ_j` with the rows of
/// `L` summing to `r_i` and the columns to `c_j`.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedScalingResult {
    pub l: Matrix,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub ln_mu: Vec<f64>,
    pub ln_lambda: Vec<f64>,
    pub log_sigma: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ReducedScalingResult {
    /// The doubly stochastic factor of the full block matrix, block
    /// `R_i × C_j` filled with `l_ij / (r_i c_j)`.
    pub fn block_bistochastic(&self, problem: &ProblemInstance) -> Result<Matrix> {
        let (r, c) = (problem.row_margins(), problem.col_margins());
        let values = Matrix::from_fn(self.l.rows(), self.l.cols(), |i, j| {
            self.l[(i, j)] / (r[i] as f64 * c[j] as f64)
        });
        Ok(crate::problem::BlockSquareMatrix::from_block_values(r, c, &values)?.entries)
    }
}

struct MarginScaling {
    scaled: Matrix,
    ln_row: Vec<f64>,
    ln_col: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn check_positive(values: &Matrix) -> Result<()> {
    for i in 0..values.rows() {
        for j in 0..values.cols() {
            let v = values[(i, j)];
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveEntry { row: i, col: j, value: v });
            }
        }
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")))
    }
}

/// Sinkhorn sweeps before a stalled run switches to Newton steps.
const SINKHORN_PHASE: usize = 500;
const NEWTON_STEPS: usize = 60;

/// One row-then-column normalization sweep.
fn sinkhorn_sweep(l: &mut Matrix, ln_row: &mut [f64], ln_col: &mut [f64], row_targets: &[f64], col_targets: &[f64]) {
    let (m, n) = (l.rows(), l.cols());
    for i in 0..m {
        let row = l.row_mut(i);
        let f = row.iter().sum::<f64>() / row_targets[i];
        row.iter_mut().for_each(|v| *v /= f);
        ln_row[i] += f.ln();
    }
    let mut col_sums = vec![0.0; n];
    for i in 0..m {
        for (s, v) in col_sums.iter_mut().zip(l.row(i)) {
            *s += v;
        }
    }
    let factors: Vec<f64> = col_sums.iter().zip(col_targets).map(|(s, t)| s / t).collect();
    for i in 0..m {
        for (v, f) in l.row_mut(i).iter_mut().zip(&factors) {
            *v /= f;
        }
    }
    for (lc, f) in ln_col.iter_mut().zip(&factors) {
        *lc += f.ln();
    }
}

/// `Σ l_ij e^{x_i + y_j} − Σ r_i x_i − Σ c_j y_j`.
fn margin_potential(l: &Matrix, x: &[f64], y: &[f64], row_targets: &[f64], col_targets: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (i, xi) in x.iter().enumerate() {
        for (v, yj) in l.row(i).iter().zip(y) {
            acc.add(v * (xi + yj).exp());
        }
        acc.add(-row_targets[i] * xi);
    }
    for (cj, yj) in col_targets.iter().zip(y) {
        acc.add(-cj * yj);
    }
    acc.value()
}

/// Damped Newton steps on the convex potential whose stationary points
/// rescale `l` to the targets. Nearly decomposable matrices, where the
/// alternating sweeps contract slowly, converge here in a few steps.
/// Returns the number of steps taken, or `None` if the line search stalls.
fn newton_polish(
    l: &mut Matrix,
    ln_row: &mut [f64],
    ln_col: &mut [f64],
    row_targets: &[f64],
    col_targets: &[f64],
    tol: f64,
) -> Option<usize> {
    let (m, n) = (l.rows(), l.cols());
    let k = m + n;
    for step in 1..=NEWTON_STEPS {
        let rs = l.row_sums();
        let cs = l.col_sums();
        let grad: Vec<f64> = rs
            .iter()
            .zip(row_targets)
            .map(|(s, t)| s - t)
            .chain(cs.iter().zip(col_targets).map(|(s, t)| s - t))
            .collect();
        // Hessian plus vvᵀ with v = (1, …, 1, −1, …, −1) spanning its kernel
        let sign = |a: usize| if a < m { 1.0 } else { -1.0 };
        let mut h = Matrix::from_fn(k, k, |a, b| sign(a) * sign(b));
        for i in 0..m {
            h[(i, i)] += rs[i];
            for j in 0..n {
                h[(i, m + j)] += l[(i, j)];
                h[(m + j, i)] += l[(i, j)];
            }
        }
        for j in 0..n {
            h[(m + j, m + j)] += cs[j];
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let d = solve_linear(h, rhs)?;
        let slope: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
        let zero_x = vec![0.0; m];
        let zero_y = vec![0.0; n];
        let f0 = margin_potential(l, &zero_x, &zero_y, row_targets, col_targets);
        let noise = 8.0 * f64::EPSILON * f0.abs().max(1.0);
        let mut alpha = 1.0;
        let (x, y) = loop {
            let x: Vec<f64> = d[..m].iter().map(|v| alpha * v).collect();
            let y: Vec<f64> = d[m..].iter().map(|v| alpha * v).collect();
            if margin_potential(l, &x, &y, row_targets, col_targets) <= f0 + 1e-4 * alpha * slope + noise {
                break (x, y);
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return None;
            }
        };
        for i in 0..m {
            for j in 0..n {
                l[(i, j)] *= (x[i] + y[j]).exp();
            }
            ln_row[i] -= x[i];
        }
        for j in 0..n {
            ln_col[j] -= y[j];
        }
        if margin_residual(l, row_targets, col_targets) <= tol {
            return Some(step);
        }
    }
    None
}

/// Normalization of `values` to the given row and column targets.
/// Factors are accumulated in log domain while the working matrix stays
/// near unit scale. Alternating sweeps run first; if they have not
/// converged after a few hundred sweeps and the budget allows, Newton
/// steps take over, and further sweeps resume if those stall.
fn scale_to_margins(
    values: &Matrix,
    row_targets: &[f64],
    col_targets: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<MarginScaling> {
    check_tol(tol)?;
    check_positive(values)?;
    let (m, n) = (values.rows(), values.cols());
    let vmax = values.max_entry();
    let mut l = values.scaled(1.0 / vmax);
    let mut ln_row = vec![vmax.ln(); m];
    let mut ln_col = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut polished = false;
    let mut iteration = 0;
    while iteration < max_iters {
        iteration += 1;
        sinkhorn_sweep(&mut l, &mut ln_row, &mut ln_col, row_targets, col_targets);
        residual = margin_residual(&l, row_targets, col_targets);
        if residual <= tol {
            return Ok(MarginScaling {
                scaled: l,
                ln_row,
                ln_col,
                iterations: iteration,
                residual,
            });
        }
        if !residual.is_finite() {
            break;
        }
        if !polished && iteration == SINKHORN_PHASE && max_iters > SINKHORN_PHASE {
            polished = true;
            let mut trial = (l.clone(), ln_row.clone(), ln_col.clone());
            if let Some(steps) = newton_polish(&mut trial.0, &mut trial.1, &mut trial.2, row_targets, col_targets, tol) {
                let residual = margin_residual(&trial.0, row_targets, col_targets);
                return Ok(MarginScaling {
                    scaled: trial.0,
                    ln_row: trial.1,
                    ln_col: trial.2,
                    iterations: iteration + steps,
                    residual,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual,
    })
}

fn margin_residual(l: &Matrix, row_targets: &[f64], col_targets: &[f64]) -> f64 {
    let rows = l
        .row_sums()
        .iter()
        .zip(row_targets)
        .map(|(s, t)| (s - t).abs() / t)
        .fold(0.0, f64::max);
    let cols = l
        .col_sums()
        .iter()
        .zip(col_targets)
        .map(|(s, t)| (s - t).abs() / t)
        .fold(0.0, f64::max);
    rows.max(cols)
}

/// Scales a positive square matrix to doubly stochastic form, then fixes
/// the gauge so that `Π η_j = 1`.
pub fn sinkhorn_scale(a: &Matrix, tol: f64, max_iters: usize) -> Result<ScalingResult> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected_rows: a.rows(),
            expected_cols: a.rows(),
            found_rows: a.rows(),
            found_cols: a.cols(),
        });
    }
    let n = a.rows();
    let ones = vec![1.0; n];
    let s = scale_to_margins(a, &ones, &ones, tol, max_iters)?;
    let tau = s.ln_col.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ln_eta: Vec<f64> = s.ln_col.iter().map(|v| v - tau).collect();
    let ln_xi: Vec<f64> = s.ln_row.iter().map(|v| v + tau).collect();
    let log_sigma = ln_xi.iter().copied().collect::<CompensatedSum>().value();
    Ok(ScalingResult {
        b: s.scaled,
        xi: ln_xi.iter().map(|v| v.exp()).collect(),
        eta: ln_eta.iter().map(|v| v.exp()).collect(),
        ln_xi,
        ln_eta,
        log_sigma,
        iterations: s.iterations,
        residual: s.residual,
    })
}

/// `ln σ(A)` by Sinkhorn iteration.
pub fn log_sigma(a: &Matrix, tol: f64) -> Result<f64> {
    Ok(sinkhorn_scale(a, tol, DEFAULT_MAX_ITERS)?.log_sigma)
}

/// `σ(A)` by Sinkhorn iteration.
pub fn sigma(a: &Matrix, tol: f64) -> Result<f64> {
    Ok(log_sigma(a, tol)?.exp())
}

/// Minimizer of `f_A` on the hyperplane `Σ t = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct Minimization {
    pub log_sigma: f64,
    pub t: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

struct Objective {
    ln_a: Matrix,
}

impl Objective {
    /// `f(t)` and the row-normalized matrix `P_ij = a_ij e^{t_j} / Σ_k a_ik e^{t_k}`.
    fn eval(&self, t: &[f64]) -> (f64, Matrix) {
        let n = self.ln_a.rows();
        let mut p = Matrix::zeros(n, n);
        let mut f = CompensatedSum::new();
        let mut buf = vec![0.0; n];
        for i in 0..n {
            for (b, (la, tj)) in buf.iter_mut().zip(self.ln_a.row(i).iter().zip(t)) {
                *b = la + tj;
            }
            let lse = log_sum_exp(&buf);
            f.add(lse);
            for (pv, b) in p.row_mut(i).iter_mut().zip(&buf) {
                *pv = (b - lse).exp();
            }
        }
        (f.value(), p)
    }

    fn value(&self, t: &[f64]) -> f64 {
        let n = self.ln_a.rows();
        let mut buf = vec![0.0; n];
        let mut f = CompensatedSum::new();
        for i in 0..n {
            for (b, (la, tj)) in buf.iter_mut().zip(self.ln_a.row(i).iter().zip(t)) {
                *b = la + tj;
            }
            f.add(log_sum_exp(&buf));
        }
        f.value()
    }
}

/// `ln σ(A) = min_{Σt=0} f_A(t)` by damped Newton steps restricted to the
/// hyperplane.
pub fn minimize_on_hyperplane(a: &Matrix, tol: f64, max_iters: usize) -> Result<Minimization> {
    check_tol(tol)?;
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected_rows: a.rows(),
            expected_cols: a.rows(),
            found_rows: a.rows(),
            found_cols: a.cols(),
        });
    }
    check_positive(a)?;
    let n = a.rows();
    let obj = Objective {
        ln_a: Matrix::from_fn(n, n, |i, j| a[(i, j)].ln()),
    };
    let mut t = vec![0.0; n];
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..max_iters {
        let (f, p) = obj.eval(&t);
        let grad: Vec<f64> = p.col_sums().iter().map(|g| g - 1.0).collect();
        gradient_norm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gradient_norm <= tol {
            return Ok(Minimization {
                log_sigma: f,
                t,
                gradient_norm,
                iterations: iteration,
            });
        }
        // Hessian of f plus 11ᵀ, which is invertible and keeps the step in H
        let mut h = Matrix::filled(n, n, 1.0);
        for i in 0..n {
            let row = p.row(i);
            for j in 0..n {
                h[(j, j)] += row[j];
                for k in 0..n {
                    h[(j, k)] -= row[j] * row[k];
                }
            }
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut step = match solve_linear(h, rhs) {
            Some(d) => d,
            None => grad.iter().map(|g| -g).collect(),
        };
        let mean = step.iter().sum::<f64>() / n as f64;
        step.iter_mut().for_each(|d| *d -= mean);
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        // near the minimum the decrease drops below the rounding of f
        let noise = 8.0 * f64::EPSILON * f.abs().max(1.0);
        while alpha > 1e-12 {
            let trial: Vec<f64> = t.iter().zip(&step).map(|(ti, d)| ti + alpha * d).collect();
            if obj.value(&trial) <= f + 1e-4 * alpha * slope + noise {
                t = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no further decrease is representable; accept a near-stationary point
            if gradient_norm <= tol.max(1e-8) {
                return Ok(Minimization {
                    log_sigma: f,
                    t,
                    gradient_norm,
                    iterations: iteration,
                });
            }
            return Err(Error::OptimizerStall {
                iterations: iteration,
                gradient_norm,
            });
        }
    }
    Err(Error::OptimizerStall {
        iterations: max_iters,
        gradient_norm,
    })
}

/// `σ(A)` by convex minimization; independent of [`sigma`].
pub fn sigma_via_minimization(a: &Matrix, tol: f64) -> Result<f64> {
    Ok(minimize_on_hyperplane(a, tol, 500)?.log_sigma.exp())
}

/// Scales `values` (an `m × n` positive matrix) to the margins.
pub fn reduced_scale_values(
    row_margins: &[u64],
    col_margins: &[u64],
    values: &Matrix,
    tol: f64,
    max_iters: usize,
) -> Result<ReducedScalingResult> {
    if values.rows() != row_margins.len() || values.cols() != col_margins.len() {
        return Err(Error::DimensionMismatch {
            expected_rows: row_margins.len(),
            expected_cols: col_margins.len(),
            found_rows: values.rows(),
            found_cols: values.cols(),
        });
    }
    let r: Vec<f64> = row_margins.iter().map(|&v| v as f64).collect();
    let c: Vec<f64> = col_margins.iter().map(|&v| v as f64).collect();
    let s = scale_to_margins(values, &r, &c, tol, max_iters)?;
    let mut acc = CompensatedSum::new();
    for (lm, ri) in s.ln_row.iter().zip(&r) {
        acc.add(ri * (lm + ri.ln()));
    }
    for (ll, cj) in s.ln_col.iter().zip(&c) {
        acc.add(cj * (ll + cj.ln()));
    }
    Ok(ReducedScalingResult {
        l: s.scaled,
        mu: s.ln_row.iter().map(|v| v.exp()).collect(),
        lambda: s.ln_col.iter().map(|v| v.exp()).collect(),
        ln_mu: s.ln_row,
        ln_lambda: s.ln_col,
        log_sigma: acc.value(),
        iterations: s.iterations,
        residual: s.residual,
    })
}

/// Reduced scaling of `(w_ij γ_ij)`; its `log_sigma` equals
/// `ln σ(A(γ))` of the full block matrix.
pub fn reduced_scale(
    problem: &ProblemInstance,
    gamma: &GammaMatrix,
    tol: f64,
    max_iters: usize,
) -> Result<ReducedScalingResult> {
    let g = gamma.values();
    if g.rows() != problem.m() || g.cols() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected_rows: problem.m(),
            expected_cols: problem.n(),
            found_rows: g.rows(),
            found_cols: g.cols(),
        });
    }
    let w = problem.weights();
    let values = Matrix::from_fn(problem.m(), problem.n(), |i, j| w[(i, j)] * g[(i, j)]);
    reduced_scale_values(problem.row_margins(), problem.col_margins(), &values, tol, max_iters)
}
