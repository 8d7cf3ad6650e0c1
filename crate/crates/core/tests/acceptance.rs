//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print. Exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{big_alpha, brute_total, fixture, permanent_by_permutations, TestRng};
use contab::bounds::{alpha_factor, bregman_extension_bound, soules_bound, vdw_lower_bound};
use contab::estimator::{
    estimate_expected_permanent, estimate_t_prime_direct, estimate_t_prime_simplex, lipschitz_bound,
    verify_orthant_simplex_identity, DirectConfig, SimplexConfig,
};
use contab::exact::{enumerate_tables, permanent_ryser, weighted_total_exact, DEFAULT_BUDGET};
use contab::flows::{count_flows_exact, reduce_flow_problem, FlowProblem};
use contab::scaling::{log_sigma, minimize_on_hyperplane, reduced_scale, sinkhorn_scale};
use contab::{assemble_block_matrix, sample_gamma, validate_problem, GammaMatrix, Matrix, ProblemInstance, RandomSource};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn load(name: &str) -> ProblemInstance {
    let text = std::fs::read_to_string(fixture(&format!("problems/{name}.json"))).unwrap();
    ProblemInstance::from_json(&text).unwrap()
}

/// Every fixture problem that validates.
fn valid_fixtures() -> Vec<(String, ProblemInstance)> {
    let mut out = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(fixture("problems"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    for p in paths {
        let text = std::fs::read_to_string(&p).unwrap();
        if let Ok(problem) = ProblemInstance::from_json(&text) {
            out.push((p.file_stem().unwrap().to_string_lossy().into_owned(), problem));
        }
    }
    out
}

fn oracle_total(p: &ProblemInstance) -> (f64, u64) {
    brute_total(p.row_margins(), p.col_margins(), &p.weights().to_rows())
}

// 1
fn oracle_counts() -> Outcome {
    let cases: [(&[u64], u64); 3] = [(&[1, 1], 2), (&[2, 2], 3), (&[2, 2, 2], 21)];
    let mut details = Vec::new();
    let mut ok = true;
    for (margins, expected) in cases {
        let listed = enumerate_tables(margins, margins, DEFAULT_BUDGET).unwrap().len() as u64;
        let w = vec![vec![1.0; margins.len()]; margins.len()];
        let (_, brute) = brute_total(margins, margins, &w);
        ok &= listed == expected && brute == expected;
        details.push(format!("{margins:?}: {listed} (odometer {brute})"));
    }
    outcome(ok, details.join(", "))
}

// 2
fn permanent_identity() -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = TestRng(2);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let n = 1 + k % 8;
        let w = rng.matrix(n, n, 0.1, 3.0);
        let ones = vec![1u64; n];
        let p = validate_problem(&ones, &ones, &to_matrix(&w)).unwrap();
        let total = weighted_total_exact(&p, DEFAULT_BUDGET).unwrap().value;
        let per = permanent_ryser(&to_matrix(&w)).unwrap();
        let brute = permanent_by_permutations(&w);
        worst = worst.max(rel(total, per)).max(rel(per, brute));
    }
    outcome(worst <= TOL, format!("20 matrices, worst relative gap {worst:.2e} (tol {TOL:e})"))
}

// 3
fn expected_permanent() -> Outcome {
    const SAMPLES: u64 = 100_000;
    const K: f64 = 4.0;
    let mut ok = true;
    let mut details = Vec::new();
    for (idx, (name, p)) in valid_fixtures().into_iter().enumerate() {
        if p.total() > 6 {
            continue;
        }
        let (t, _) = oracle_total(&p);
        let est = estimate_expected_permanent(&p, SAMPLES, &RandomSource::new(300 + idx as u64)).unwrap();
        let z = (est.estimate - t).abs() / est.stderr.max(f64::MIN_POSITIVE);
        // a zero-variance estimator must hit the value to rounding
        let hit = if est.stderr == 0.0 { rel(est.estimate, t) < 1e-12 } else { z <= K };
        ok &= hit;
        details.push(format!("{name} {z:.2}σ"));
    }
    outcome(ok, format!("{SAMPLES} samples each, within {K}σ: {}", details.join(", ")))
}

fn random_positive(rng: &mut TestRng, n: usize) -> Matrix {
    to_matrix(&rng.matrix(n, n, 0.05, 2.0))
}

// 4
fn scaling_correctness() -> Outcome {
    let mut rng = TestRng(4);
    let (mut res, mut rec, mut gauge, mut route): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..100 {
        let n = 1 + k % 10;
        let a = random_positive(&mut rng, n);
        let s = sinkhorn_scale(&a, 1e-12, 100_000).unwrap();
        res = res.max(s.residual);
        for i in 0..n {
            for j in 0..n {
                rec = rec.max(rel(s.b[(i, j)] * s.xi[i] * s.eta[j], a[(i, j)]));
            }
        }
        gauge = gauge.max((s.eta.iter().product::<f64>() - 1.0).abs());
        let convex = minimize_on_hyperplane(&a, 1e-12, 500).unwrap().log_sigma;
        route = route.max((convex - s.log_sigma).abs());
    }
    let ok = res <= 1e-10 && rec <= 1e-9 && gauge <= 1e-10 && route <= 1e-6;
    outcome(
        ok,
        format!("residual {res:.1e}, reconstruction {rec:.1e}, |Πη−1| {gauge:.1e}, route gap {route:.1e}"),
    )
}

// 5
fn sigma_properties() -> Outcome {
    const SLACK: f64 = 1e-7;
    let mut rng = TestRng(5);
    let (mut concave, mut monotone, mut homogeneous) = (0, 0, 0);
    for k in 0..200 {
        let n = 1 + k % 8;
        let a = random_positive(&mut rng, n);
        let b = random_positive(&mut rng, n);
        let t = rng.range(0.0, 1.0);
        let mix = Matrix::from_fn(n, n, |i, j| t * a[(i, j)] + (1.0 - t) * b[(i, j)]);
        let bump = Matrix::from_fn(n, n, |i, j| a[(i, j)] + rng.range(0.0, 0.5));
        let tau = rng.range(0.1, 10.0);
        let (la, lb) = (log_sigma(&a, 1e-12).unwrap(), log_sigma(&b, 1e-12).unwrap());
        if log_sigma(&mix, 1e-12).unwrap() < t * la + (1.0 - t) * lb - SLACK {
            concave += 1;
        }
        if log_sigma(&bump, 1e-12).unwrap() < la - SLACK {
            monotone += 1;
        }
        let lt = log_sigma(&a.scaled(tau), 1e-12).unwrap();
        if (lt - la - n as f64 * tau.ln()).abs() > SLACK * la.abs().max(1.0) {
            homogeneous += 1;
        }
    }
    outcome(
        concave + monotone + homogeneous == 0,
        format!("200 cases: {concave} concavity, {monotone} monotonicity, {homogeneous} homogeneity violations"),
    )
}

fn random_problem(rng: &mut TestRng, max_total: u64) -> ProblemInstance {
    let m = 1 + rng.below(3) as usize;
    let n = 1 + rng.below(3) as usize;
    let lo = m.max(n) as u64;
    let total = lo + rng.below(max_total - lo + 1);
    let rows = rng.composition(total, m);
    let cols = rng.composition(total, n);
    validate_problem(&rows, &cols, &to_matrix(&rng.matrix(m, n, 0.1, 3.0))).unwrap()
}

// 6
fn reduced_scaling() -> Outcome {
    const TOL: f64 = 1e-8;
    let mut rng = TestRng(6);
    let source = RandomSource::new(6);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let p = random_problem(&mut rng, 12);
        let g = sample_gamma(p.m(), p.n(), &mut source.stream(k));
        let full = log_sigma(&assemble_block_matrix(&p, &g).unwrap().entries, 1e-13).unwrap();
        let reduced = reduced_scale(&p, &g, 1e-13, 100_000).unwrap().log_sigma;
        worst = worst.max((full - reduced).abs());
    }
    outcome(worst <= TOL, format!("50 problems, worst |Δ ln σ| {worst:.1e} (tol {TOL:e})"))
}

// 7
fn sandwich() -> Outcome {
    const SEEDS: u64 = 20;
    const MAX_RATE: f64 = 0.05;
    let mut runs = 0;
    let mut misses = Vec::new();
    for (name, p) in valid_fixtures() {
        let (t, _) = oracle_total(&p);
        for seed in 0..SEEDS {
            let cfg = DirectConfig {
                samples: 10_000,
                ..DirectConfig::default()
            };
            let r = estimate_t_prime_direct(&p, &cfg, &RandomSource::new(700 + seed)).unwrap().report;
            runs += 1;
            if !r.brackets(t) {
                misses.push(format!("{name}/{seed}"));
            }
        }
    }
    let rate = misses.len() as f64 / runs as f64;
    let log_alpha = alpha_factor(&[2, 2, 2], &[2, 2, 2]).alpha;
    let big = big_alpha(&[2, 2, 2], &[2, 2, 2]);
    let alpha_ok = rel(log_alpha, big) <= 1e-12 && rel(big, 8.1) <= 1e-15;
    outcome(
        rate <= MAX_RATE && alpha_ok,
        format!(
            "{} misses in {runs} runs ({:.1}%, max {:.0}%) {misses:?}; α(2,2,2) = {log_alpha} vs integer {big}",
            misses.len(),
            100.0 * rate,
            100.0 * MAX_RATE
        ),
    )
}

fn random_doubly_stochastic(rng: &mut TestRng, n: usize) -> Vec<Vec<f64>> {
    // sparse-ish entries make some t_i exceed 1
    let a = Matrix::from_fn(n, n, |_, _| {
        let x = rng.uniform();
        x * x * x + 1e-3
    });
    sinkhorn_scale(&a, 1e-14, 1_000_000).unwrap().b.to_rows()
}

// 8
fn permanent_bounds() -> Outcome {
    let mut witness: f64 = 0.0;
    for n in 1..=8usize {
        let j = Matrix::filled(n, n, 1.0 / n as f64);
        let exact: f64 = (1..=n).map(|k| k as f64 / n as f64).product();
        witness = witness.max(rel(permanent_ryser(&j).unwrap(), exact));
        witness = witness.max(rel(vdw_lower_bound(n as u64), exact));
    }
    let mut rng = TestRng(8);
    let mut violations = 0;
    let mut tight = 0;
    for k in 0..100 {
        let n = 1 + k % 7;
        let b = random_doubly_stochastic(&mut rng, n);
        let per = permanent_by_permutations(&b);
        let t: Vec<u64> = b
            .iter()
            .map(|row| (1.0 / row.iter().copied().fold(0.0, f64::max)).floor().max(1.0) as u64)
            .collect();
        if t.iter().any(|&v| v > 1) {
            tight += 1;
        }
        if per < vdw_lower_bound(n as u64) - 1e-10 || per > bregman_extension_bound(&t) + 1e-10 {
            violations += 1;
        }
    }
    let mut soules: f64 = 0.0;
    for _ in 0..100 {
        let t: Vec<u64> = (0..1 + rng.below(8)).map(|_| 1 + rng.below(12)).collect();
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        soules = soules.max(rel(soules_bound(&tf), bregman_extension_bound(&t)));
    }
    outcome(
        witness <= 1e-10 && violations == 0 && soules <= 1e-12,
        format!(
            "per(J/N) gap {witness:.1e}; {violations} bound violations in 100 ({tight} with some t_i > 1); Soules gap {soules:.1e}"
        ),
    )
}

// 9
fn quadrature_identity() -> Outcome {
    const TOL: f64 = 1e-3;
    let mut ok = true;
    let mut details = Vec::new();
    for (total, cols) in [(2u64, vec![1u64, 1]), (3, vec![2, 1])] {
        let p = ProblemInstance::unweighted(&[total], &cols).unwrap();
        let c = verify_orthant_simplex_identity(&p).unwrap();
        // rank one: per A = N! Π γ_j^{c_j}, so E per A = N! Π c_j!
        let closed: f64 = (1..=total).product::<u64>() as f64
            * cols.iter().map(|&c| (1..=c).product::<u64>() as f64).product::<f64>();
        ok &= c.permanent.relative_discrepancy <= TOL
            && c.sigma.relative_discrepancy <= TOL
            && rel(c.permanent.orthant, closed) <= TOL;
        details.push(format!(
            "(1,2,{total}): P gap {:.1e}, S gap {:.1e}, E per A {:.6} vs {closed}",
            c.permanent.relative_discrepancy, c.sigma.relative_discrepancy, c.permanent.orthant
        ));
    }
    outcome(ok, details.join("; "))
}

// 10
fn simplex_vs_direct() -> Outcome {
    const EPS_BRACKET: f64 = 0.1;
    const EPS_AGREE: f64 = 1e-3;
    const K: f64 = 3.0;
    let mut ok = true;
    let mut details = Vec::new();
    for name in ["ones-2x2-t1", "ones-2x2-t2"] {
        let p = load(name);
        let direct = estimate_t_prime_direct(
            &p,
            &DirectConfig {
                samples: 100_000,
                ..DirectConfig::default()
            },
            &RandomSource::new(1000),
        )
        .unwrap()
        .report;
        let fine = estimate_t_prime_simplex(
            &p,
            &SimplexConfig {
                epsilon: EPS_AGREE,
                ..SimplexConfig::default()
            },
            &RandomSource::new(1001),
        )
        .unwrap();
        let coarse = estimate_t_prime_simplex(
            &p,
            &SimplexConfig {
                epsilon: EPS_BRACKET,
                ..SimplexConfig::default()
            },
            &RandomSource::new(1002),
        )
        .unwrap();
        let combined = (direct.stderr.powi(2) + fine.stderr.powi(2)).sqrt();
        let z = (direct.t_prime - fine.t_prime).abs() / combined;
        let d = coarse.simplex.as_ref().unwrap();
        let width = d.integral_bracket.1 / d.integral_bracket.0;
        let contains = coarse.t_prime <= direct.t_prime && direct.t_prime <= d.t_prime_upper;
        ok &= z <= K && width <= 1.0 / (1.0 - EPS_BRACKET);
        details.push(format!(
            "{name}: direct {:.4}±{:.4}, simplex(ε={EPS_AGREE}) {:.4}±{:.4} → {z:.2}σ; ε={EPS_BRACKET} width {width:.5} ≤ {:.5}, bracket [{:.4}, {:.4}] holds direct: {contains}",
            direct.t_prime,
            direct.stderr,
            fine.t_prime,
            fine.stderr,
            1.0 / (1.0 - EPS_BRACKET),
            coarse.t_prime,
            d.t_prime_upper
        ));
    }
    outcome(ok, details.join("; "))
}

fn brute_flows(f: &FlowProblem) -> u64 {
    let bound: u64 = f.excess().iter().filter(|&&a| a > 0).map(|&a| a as u64).sum();
    let e = f.edges().len();
    let mut x = vec![0u64; e];
    let mut count = 0;
    loop {
        let mut net = vec![0i64; f.vertices().len()];
        for (&(t, h), &v) in f.edges().iter().zip(&x) {
            net[h] += v as i64;
            net[t] -= v as i64;
        }
        if net == f.excess() {
            count += 1;
        }
        let mut k = 0;
        while k < e {
            x[k] += 1;
            if x[k] <= bound {
                break;
            }
            x[k] = 0;
            k += 1;
        }
        if k == e {
            return count;
        }
    }
}

// 11
fn flow_reduction() -> Outcome {
    let mut cases = 0u64;
    let mut mismatches = 0u64;
    for v in 1..=4usize {
        let pairs: Vec<(usize, usize)> = (0..v).flat_map(|a| (0..v).filter(move |&b| b != a).map(move |b| (a, b))).collect();
        let excesses: Vec<Vec<i64>> = {
            let mut out = Vec::new();
            let mut a = vec![-2i64; v];
            loop {
                if a.iter().sum::<i64>() == 0 {
                    out.push(a.clone());
                }
                let mut k = 0;
                while k < v {
                    a[k] += 1;
                    if a[k] <= 2 {
                        break;
                    }
                    a[k] = -2;
                    k += 1;
                }
                if k == v {
                    break;
                }
            }
            out
        };
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            let probe = FlowProblem::from_indices(v, &edges, &vec![0; v]).unwrap();
            if !probe.is_acyclic() {
                continue;
            }
            for a in &excesses {
                let f = FlowProblem::from_indices(v, &edges, a).unwrap();
                let flows = count_flows_exact(&f, DEFAULT_BUDGET).unwrap();
                let r = reduce_flow_problem(&f).unwrap();
                let tables = weighted_total_exact(&r.problem, DEFAULT_BUDGET).unwrap().table_count;
                cases += 1;
                if flows != tables {
                    mismatches += 1;
                }
            }
        }
    }
    let mut named = Vec::new();
    let mut named_ok = true;
    for (file, expected) in [("single-edge", 1), ("triangle", 3), ("parallel-paths", 3)] {
        let text = std::fs::read_to_string(fixture(&format!("graphs/{file}.json"))).unwrap();
        let f = FlowProblem::from_json(&text).unwrap();
        let c = count_flows_exact(&f, DEFAULT_BUDGET).unwrap();
        let t = weighted_total_exact(&reduce_flow_problem(&f).unwrap().problem, DEFAULT_BUDGET)
            .unwrap()
            .table_count;
        named_ok &= c == expected && t == expected && brute_flows(&f) == expected;
        named.push(format!("{file} {c}"));
    }
    outcome(
        mismatches == 0 && named_ok,
        format!("{mismatches} mismatches over {cases} (graph, excess) cases; {}", named.join(", ")),
    )
}

fn uniform_simplex(rng: &mut TestRng, dim: usize, delta: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| delta + (1.0 - dim as f64 * delta) * x / s).collect()
}

fn ln_s_full(p: &ProblemInstance, x: &[f64]) -> f64 {
    let g = GammaMatrix::from_flat(p.m(), p.n(), x).unwrap();
    let a = assemble_block_matrix(p, &g).unwrap();
    sinkhorn_scale(&a.entries, 1e-13, 1_000_000).unwrap().log_sigma
}

// 12
fn lipschitz() -> Outcome {
    const SLACK: f64 = 1e-6;
    let settings = [
        (load("ones-2x2-t1"), 0.05),
        (load("ones-2x2-t2"), 0.01),
        (load("weighted-2x3"), 0.02),
    ];
    let mut rng = TestRng(12);
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for (p, delta) in &settings {
        let dim = p.m() * p.n();
        let l = lipschitz_bound(*delta, p.total());
        for k in 0..200 {
            let x = uniform_simplex(&mut rng, dim, *delta);
            let y = if k % 2 == 0 {
                uniform_simplex(&mut rng, dim, *delta)
            } else {
                let z = uniform_simplex(&mut rng, dim, *delta);
                let t = rng.range(0.0, 0.02);
                x.iter().zip(&z).map(|(a, b)| a + t * (b - a)).collect()
            };
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let gap = (ln_s_full(p, &x) - ln_s_full(p, &y)).abs();
            if gap > l * dist + SLACK {
                violations += 1;
            }
            if dist > 0.0 {
                tightest = tightest.max(gap / (l * dist));
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over 600 pairs; largest ratio to the bound {tightest:.3}"),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 12] = [
        ("oracle counts", Duration::from_secs(1), oracle_counts),
        ("permanent identity", Duration::from_secs(10), permanent_identity),
        ("expected permanent", Duration::from_secs(60), expected_permanent),
        ("scaling correctness", Duration::from_secs(30), scaling_correctness),
        ("concavity, monotonicity, homogeneity", Duration::from_secs(30), sigma_properties),
        ("reduced scaling", Duration::from_secs(30), reduced_scaling),
        ("sandwich bracket", Duration::from_secs(300), sandwich),
        ("permanent bounds", Duration::from_secs(60), permanent_bounds),
        ("orthant/simplex quadrature", Duration::from_secs(60), quadrature_identity),
        ("simplex vs direct", Duration::from_secs(300), simplex_vs_direct),
        ("flow reduction", Duration::from_secs(120), flow_reduction),
        ("Lipschitz bound", Duration::from_secs(60), lipschitz),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= *limit, o.detail),
            Err(_) => (false, "panicked".to_string()),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<38} {} [{:.2}s / {}s] {}",
            k + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            detail
        );
    }
    println!("acceptance: {} of 12 passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
