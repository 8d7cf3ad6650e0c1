//! Randomized self-test suites behind `contab validate`.
//!
//! Each suite draws its instances from a fixed seed and reports, per
//! property, how many cases were checked, how many violated the property
//! and the worst observed error. Failures are data, not errors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{
    alpha_factor, bregman_extension_bound, check_margin_bounds, soules_bound, vdw_lower_bound, Side,
};
use crate::estimator::{estimate_expected_permanent, verify_orthant_simplex_identity, DeltaSimplex};
use crate::exact::{permanent_ryser, weighted_total_exact, DEFAULT_BUDGET};
use crate::flows::{count_flows_exact, count_flows_via_tables, reduce_flow_problem, FlowProblem};
use crate::problem::{assemble_block_matrix, ProblemInstance};
use crate::random::{sample_gamma, RandomSource};
use crate::scaling::{log_sigma, minimize_on_hyperplane, reduced_scale, reduced_scale_values, sinkhorn_scale};
use crate::{validate_problem, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Scaling,
    Expectation,
    Bounds,
    Identity,
    Lipschitz,
    Flows,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Scaling,
        Suite::Expectation,
        Suite::Bounds,
        Suite::Identity,
        Suite::Lipschitz,
        Suite::Flows,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub tolerance: f64,
    pub checked: usize,
    pub violations: usize,
    /// Largest observed error, in the units of `tolerance`.
    pub worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    pub passed: bool,
}

struct Check {
    name: &'static str,
    tolerance: f64,
    checked: usize,
    violations: usize,
    worst: f64,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            tolerance,
            checked: 0,
            violations: 0,
            worst: 0.0,
        }
    }

    /// Records an error value; NaN counts as a violation.
    fn error(&mut self, err: f64) {
        self.checked += 1;
        if err.is_nan() || err > self.tolerance {
            self.violations += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }

    fn holds(&mut self, ok: bool) {
        self.error(if ok { 0.0 } else { f64::INFINITY });
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            tolerance: self.tolerance,
            checked: self.checked,
            violations: self.violations,
            worst: self.worst,
            passed: self.violations == 0 && self.checked > 0,
        }
    }
}

fn positive_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(0.05..2.0))
}

/// `n` positive parts summing to `total` (`total ≥ n`).
fn composition(rng: &mut ChaCha8Rng, total: u64, n: usize) -> Vec<u64> {
    let mut parts = vec![1u64; n];
    for _ in 0..total - n as u64 {
        parts[rng.random_range(0..n)] += 1;
    }
    parts
}

/// Random margins with `N ≤ max_total` and positive random weights.
fn random_problem(rng: &mut ChaCha8Rng, max_total: u64) -> ProblemInstance {
    let m = rng.random_range(1..=3usize);
    let n = rng.random_range(1..=3usize);
    let lo = m.max(n) as u64;
    let total = rng.random_range(lo..=max_total.max(lo));
    let rows = composition(rng, total, m);
    let cols = composition(rng, total, n);
    let w = positive_matrix(rng, m, n);
    validate_problem(&rows, &cols, &w).expect("margins are consistent")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    let source = RandomSource::new(seed).derive(suite as u64);
    let properties = match suite {
        Suite::Scaling => scaling_suite(&source),
        Suite::Expectation => expectation_suite(&source),
        Suite::Bounds => bounds_suite(&source),
        Suite::Identity => identity_suite(),
        Suite::Lipschitz => lipschitz_suite(&source),
        Suite::Flows => flows_suite(&source),
    };
    let passed = properties.iter().all(|p| p.passed);
    SuiteReport {
        suite,
        seed,
        properties,
        passed,
    }
}

fn scaling_suite(source: &RandomSource) -> Vec<PropertyResult> {
    let mut rng = source.rng();
    let mut residual = Check::new("residual", 1e-10);
    let mut reconstruction = Check::new("reconstruction", 1e-9);
    let mut gauge = Check::new("eta_product", 1e-10);
    let mut routes = Check::new("fixed_point_vs_convex", 1e-6);
    let mut concave = Check::new("log_concavity", 1e-7);
    let mut monotone = Check::new("monotonicity", 1e-7);
    let mut homogeneous = Check::new("homogeneity", 1e-8);
    for _ in 0..100 {
        let n = rng.random_range(1..=8usize);
        let a = positive_matrix(&mut rng, n, n);
        let Ok(s) = sinkhorn_scale(&a, 1e-12, 100_000) else {
            residual.error(f64::NAN);
            continue;
        };
        residual.error(s.residual);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max(rel(s.b[(i, j)] * s.xi[i] * s.eta[j], a[(i, j)]));
            }
        }
        reconstruction.error(worst);
        gauge.error(s.ln_eta.iter().sum::<f64>().exp_m1().abs());
        match minimize_on_hyperplane(&a, 1e-12, 500) {
            Ok(mnz) => routes.error((mnz.log_sigma - s.log_sigma).abs()),
            Err(_) => routes.error(f64::NAN),
        }

        let b = positive_matrix(&mut rng, n, n);
        let mid = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + b[(i, j)]));
        let bump = Matrix::from_fn(n, n, |i, j| a[(i, j)] + rng.random_range(0.0..0.5));
        let tau = rng.random_range(0.2..5.0);
        let la = s.log_sigma;
        if let (Ok(lb), Ok(lm), Ok(lu), Ok(lt)) = (
            log_sigma(&b, 1e-12),
            log_sigma(&mid, 1e-12),
            log_sigma(&bump, 1e-12),
            log_sigma(&a.scaled(tau), 1e-12),
        ) {
            concave.error(0.5 * (la + lb) - lm);
            monotone.error(la - lu);
            homogeneous.error((lt - la - n as f64 * f64::ln(tau)).abs() / la.abs().max(1.0));
        } else {
            concave.error(f64::NAN);
        }
    }

    let mut reduced = Check::new("reduced_vs_full", 1e-8);
    for _ in 0..50 {
        let p = random_problem(&mut rng, 12);
        let g = sample_gamma(p.m(), p.n(), &mut rng);
        let full = assemble_block_matrix(&p, &g).and_then(|a| log_sigma(&a.entries, 1e-13));
        let red = reduced_scale(&p, &g, 1e-13, 100_000);
        match (full, red) {
            (Ok(f), Ok(r)) => reduced.error((f - r.log_sigma).abs()),
            _ => reduced.error(f64::NAN),
        }
    }
    [residual, reconstruction, gauge, routes, concave, monotone, homogeneous, reduced]
        .into_iter()
        .map(Check::finish)
        .collect()
}

/// Problems with `N ≤ 6` used for the Monte Carlo identity check.
pub fn builtin_problems() -> Vec<(&'static str, ProblemInstance)> {
    let m = |rows: &[Vec<f64>]| Matrix::from_rows(rows).expect("rectangular");
    vec![
        ("perm-2x2", validate_problem(&[1, 1], &[1, 1], &m(&[vec![2.0, 1.0], vec![1.0, 2.0]])).unwrap()),
        ("ones-2x2-t2", ProblemInstance::unweighted(&[2, 2], &[2, 2]).unwrap()),
        ("ones-3x3-t1", ProblemInstance::unweighted(&[1, 1, 1], &[1, 1, 1]).unwrap()),
        ("magic-3x3-t2", ProblemInstance::unweighted(&[2, 2, 2], &[2, 2, 2]).unwrap()),
        (
            "weighted-2x3",
            validate_problem(&[2, 1], &[1, 1, 1], &m(&[vec![0.5, 1.0, 2.0], vec![1.5, 1.0, 0.25]])).unwrap(),
        ),
        ("single-cell", validate_problem(&[3], &[3], &Matrix::filled(1, 1, 1.5)).unwrap()),
    ]
}

fn expectation_suite(source: &RandomSource) -> Vec<PropertyResult> {
    let mut agree = Check::new("mc_within_4_stderr", 4.0);
    for (k, (_, p)) in builtin_problems().iter().enumerate() {
        let exact = weighted_total_exact(p, DEFAULT_BUDGET).map(|e| e.value);
        let est = estimate_expected_permanent(p, 10_000, &source.derive(k as u64));
        match (exact, est) {
            (Ok(t), Ok(e)) => agree.error((e.estimate - t).abs() / e.stderr.max(f64::MIN_POSITIVE)),
            _ => agree.error(f64::NAN),
        }
    }
    vec![agree.finish()]
}

fn random_doubly_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Option<Matrix> {
    let a = Matrix::from_fn(n, n, |_, _| {
        let x: f64 = rng.random_range(0.0..1.0);
        x * x * x + 1e-3
    });
    sinkhorn_scale(&a, 1e-14, 1_000_000).ok().map(|s| s.b)
}

fn bounds_suite(source: &RandomSource) -> Vec<PropertyResult> {
    let mut rng = source.rng();
    let mut witness = Check::new("vdw_equality_witness", 1e-10);
    for n in 1..=8usize {
        match permanent_ryser(&Matrix::filled(n, n, 1.0 / n as f64)) {
            Ok(p) => witness.error(rel(p, vdw_lower_bound(n as u64))),
            Err(_) => witness.error(f64::NAN),
        }
    }
    let mut lower = Check::new("vdw_lower", 1e-10);
    let mut upper = Check::new("bregman_upper", 1e-10);
    for _ in 0..100 {
        let n = rng.random_range(1..=7usize);
        let Some(b) = random_doubly_stochastic(&mut rng, n) else {
            lower.error(f64::NAN);
            continue;
        };
        let per = permanent_ryser(&b).unwrap_or(f64::NAN);
        let t: Vec<u64> = (0..n)
            .map(|i| (1.0 / b.row(i).iter().copied().fold(0.0, f64::max)).floor().max(1.0) as u64)
            .collect();
        lower.error(vdw_lower_bound(n as u64) - per);
        upper.error(per - bregman_extension_bound(&t));
    }
    let mut soules = Check::new("soules_equals_bregman", 1e-12);
    for _ in 0..50 {
        let t: Vec<u64> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(1..=10)).collect();
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        soules.error(rel(soules_bound(&tf), bregman_extension_bound(&t)));
    }
    let mut margin = Check::new("margin_bounds", 1e-9);
    for _ in 0..50 {
        let p = random_problem(&mut rng, 8);
        let g = sample_gamma(p.m(), p.n(), &mut rng);
        match check_margin_bounds(&p, &g, 1e-13).map(|b| b.holds(1e-9)) {
            Ok(Some(ok)) => margin.holds(ok),
            _ => margin.error(f64::NAN),
        }
    }
    let mut symmetry = Check::new("alpha_symmetry", 1e-12);
    for _ in 0..50 {
        let p = random_problem(&mut rng, 10);
        let (r, c) = (p.row_margins().to_vec(), p.col_margins().to_vec());
        let a = alpha_factor(&r, &c);
        let mut rr = r.clone();
        rr.reverse();
        let swapped = alpha_factor(&c, &r);
        let same_side = a.row_product == a.col_product
            || (a.chosen_side == Side::Rows) == (swapped.chosen_side == Side::Cols);
        let err = rel(alpha_factor(&rr, &c).alpha, a.alpha).max(rel(swapped.alpha, a.alpha));
        symmetry.error(if same_side && a.alpha >= 1.0 - 1e-12 { err } else { f64::INFINITY });
    }
    [witness, lower, upper, soules, margin, symmetry]
        .into_iter()
        .map(Check::finish)
        .collect()
}

fn identity_suite() -> Vec<PropertyResult> {
    let mut p_check = Check::new("permanent_orthant_vs_simplex", 1e-3);
    let mut s_check = Check::new("sigma_orthant_vs_simplex", 1e-3);
    let mut h_check = Check::new("permanent_homogeneity", 1e-12);
    let cases = [
        ProblemInstance::unweighted(&[2], &[1, 1]).unwrap(),
        ProblemInstance::unweighted(&[3], &[2, 1]).unwrap(),
        validate_problem(&[2, 1, 1], &[4], &Matrix::from_vec(3, 1, vec![1.0, 0.5, 3.0])).unwrap(),
    ];
    for p in &cases {
        match verify_orthant_simplex_identity(p) {
            Ok(c) => {
                p_check.error(c.permanent.relative_discrepancy);
                s_check.error(c.sigma.relative_discrepancy);
                h_check.error(c.homogeneity_error);
            }
            Err(_) => p_check.error(f64::NAN),
        }
    }
    [p_check, s_check, h_check].into_iter().map(Check::finish).collect()
}

/// `ln S` at a flattened simplex point.
fn ln_s(p: &ProblemInstance, x: &[f64]) -> f64 {
    let w = p.weights();
    let n = p.n();
    let values = Matrix::from_fn(p.m(), n, |i, j| w[(i, j)] * x[i * n + j]);
    reduced_scale_values(p.row_margins(), p.col_margins(), &values, 1e-13, 100_000)
        .map(|r| r.log_sigma)
        .unwrap_or(f64::NAN)
}

/// Problem and `δ` settings for the Lipschitz check.
pub fn lipschitz_settings() -> Vec<(ProblemInstance, f64)> {
    vec![
        (ProblemInstance::unweighted(&[1, 1], &[1, 1]).unwrap(), 0.05),
        (ProblemInstance::unweighted(&[2, 2], &[2, 2]).unwrap(), 0.01),
        (
            validate_problem(&[2, 1], &[1, 1, 1], &Matrix::from_vec(2, 3, vec![0.5, 1.0, 2.0, 1.5, 1.0, 0.25]))
                .unwrap(),
            0.02,
        ),
    ]
}

fn lipschitz_suite(source: &RandomSource) -> Vec<PropertyResult> {
    let mut rng = source.rng();
    let mut check = Check::new("lipschitz_excess", 1e-6);
    for (p, delta) in lipschitz_settings() {
        let simplex = DeltaSimplex::new(p.m() * p.n(), delta).expect("delta below 1/mn");
        let l = crate::estimator::lipschitz_bound(delta, p.total());
        for k in 0..200 {
            let x = simplex.sample_uniform(&mut rng).values;
            let y = if k % 2 == 0 {
                simplex.sample_uniform(&mut rng).values
            } else {
                // nearby pair along a random segment to x
                let z = simplex.sample_uniform(&mut rng).values;
                let t = rng.random_range(0.0..0.05);
                x.iter().zip(&z).map(|(a, b)| a + t * (b - a)).collect()
            };
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check.error((ln_s(&p, &x) - ln_s(&p, &y)).abs() - l * dist);
        }
    }
    vec![check.finish()]
}

fn random_dag(rng: &mut ChaCha8Rng, vertices: usize, max_edges: usize) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (0..vertices).collect();
    for i in (1..vertices).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for a in 0..vertices {
        for b in a + 1..vertices {
            if edges.len() < max_edges && rng.random_bool(0.5) {
                edges.push((perm[a], perm[b]));
            }
        }
    }
    edges
}

fn random_excess(rng: &mut ChaCha8Rng, vertices: usize, bound: i64) -> Vec<i64> {
    loop {
        let mut a: Vec<i64> = (0..vertices - 1).map(|_| rng.random_range(-bound..=bound)).collect();
        let last = -a.iter().sum::<i64>();
        if last.abs() <= bound {
            a.push(last);
            return a;
        }
    }
}

fn flows_suite(source: &RandomSource) -> Vec<PropertyResult> {
    let mut rng = source.rng();
    let mut agree = Check::new("reduction_count", 0.0);
    let mut margins = Check::new("margin_positivity", 0.0);
    for _ in 0..100 {
        let v = rng.random_range(1..=6usize);
        let edges = random_dag(&mut rng, v, 10);
        let a = random_excess(&mut rng, v, 3);
        let Ok(f) = FlowProblem::from_indices(v, &edges, &a) else {
            agree.error(f64::NAN);
            continue;
        };
        match (count_flows_exact(&f, DEFAULT_BUDGET), count_flows_via_tables(&f, DEFAULT_BUDGET)) {
            (Ok(x), Ok(y)) => agree.holds(x == y),
            _ => agree.error(f64::NAN),
        }
        if let Ok(r) = reduce_flow_problem(&f) {
            margins.holds(r.problem.row_margins().iter().all(|&m| m >= 1) && r.problem.col_margins().iter().all(|&m| m >= 1));
        }
    }
    [agree, margins].into_iter().map(Check::finish).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for suite in Suite::ALL {
            let r = run_suite(suite, 20240901);
            for p in &r.properties {
                assert!(p.passed, "{suite:?}: {p:?}");
            }
        }
    }

    #[test]
    fn check_counts_nan_as_violation() {
        let mut c = Check::new("x", 1.0);
        c.error(0.5);
        c.error(f64::NAN);
        let r = c.finish();
        assert_eq!((r.checked, r.violations, r.passed), (2, 1, false));
    }
}
