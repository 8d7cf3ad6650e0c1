use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, log_sum_exp, mean_variance};
use crate::random::standard_exponential;

/// `Δ_δ = {γ ∈ R^dim : Σγ = 1, γ_k > δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaSimplex {
    pub dim: usize,
    pub delta: f64,
}

impl DeltaSimplex {
    pub fn new(dim: usize, delta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("simplex dimension must be positive".into()));
        }
        if !(delta >= 0.0 && delta * (dim as f64) < 1.0) {
            return Err(Error::DeltaOutOfRange { delta, dim });
        }
        Ok(DeltaSimplex { dim, delta })
    }

    pub fn centroid(&self) -> Vec<f64> {
        vec![1.0 / self.dim as f64; self.dim]
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.dim
            && point.iter().all(|&x| x >= self.delta - tol)
            && (point.iter().sum::<f64>() - 1.0).abs() <= tol.max(1e-12)
    }

    /// `1 − dim·δ`, the side scale of `Δ_δ` relative to `Δ`.
    pub fn shrink(&self) -> f64 {
        1.0 - self.dim as f64 * self.delta
    }

    /// `ln ν(Δ_δ)` for the surface measure on the hyperplane:
    /// `ν(Δ_δ) = (1 − dim·δ)^{dim−1} √dim / (dim−1)!`.
    pub fn ln_measure(&self) -> f64 {
        let d = self.dim as f64;
        (d - 1.0) * (-d * self.delta).ln_1p() + 0.5 * d.ln() - ln_factorial(self.dim as u64 - 1)
    }

    /// Exact uniform draw: `δ + (1 − dim·δ)·Dirichlet(1, …, 1)`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> SimplexPoint {
        let e: Vec<f64> = (0..self.dim).map(|_| standard_exponential(rng)).collect();
        let total: f64 = e.iter().sum();
        let s = self.shrink();
        SimplexPoint {
            values: e.iter().map(|x| self.delta + s * x / total).collect(),
        }
    }

    /// The parameter range `[lo, hi]` keeping `x + t·d` inside `Δ_δ`.
    fn chord(&self, x: &[f64], d: &[f64]) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (&xi, &di) in x.iter().zip(d) {
            if di > 0.0 {
                lo = lo.max((self.delta - xi) / di);
            } else if di < 0.0 {
                hi = hi.min((self.delta - xi) / di);
            }
        }
        (lo.min(0.0), hi.max(0.0))
    }
}

/// A point of the simplex, coordinates in row-major `(i, j)` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexPoint {
    pub values: Vec<f64>,
}

impl SimplexPoint {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    ya: f64,
    slope: f64,
}

impl Piece {
    fn at(&self, x: f64) -> f64 {
        self.ya + self.slope * (x - self.a)
    }

    /// `ln ∫_a^b exp(upper)`.
    fn ln_mass(&self) -> f64 {
        let w = self.b - self.a;
        self.ya + w.ln() + ln_expm1_ratio(self.slope * w)
    }

    /// Inverse CDF of the normalized exponential on `[a, b]`.
    fn invert(&self, u: f64) -> f64 {
        let w = self.b - self.a;
        let z = self.slope * w;
        let t = if z.abs() < 1e-12 {
            u * w
        } else if z > 0.0 {
            w + (u + (1.0 - u) * (-z).exp()).ln() / self.slope
        } else {
            (u * z.exp_m1()).ln_1p() / self.slope
        };
        self.a + t.clamp(0.0, w)
    }
}

/// `ln(expm1(z)/z)` without overflow.
fn ln_expm1_ratio(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        0.5 * z
    } else if z > 0.0 {
        z + (-(-z).exp_m1()).ln() - z.ln()
    } else {
        (-z.exp_m1()).ln() - (-z).ln()
    }
}

/// Line through `(x0, y0)` and `(x1, y1)`.
#[derive(Clone, Copy)]
struct Line {
    x0: f64,
    y0: f64,
    slope: f64,
}

impl Line {
    fn through(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Line {
            x0,
            y0,
            slope: (y1 - y0) / (x1 - x0),
        }
    }

    fn at(&self, x: f64) -> f64 {
        self.y0 + self.slope * (x - self.x0)
    }
}

fn push_piece(pieces: &mut Vec<Piece>, a: f64, b: f64, line: Line) {
    if b > a {
        pieces.push(Piece {
            a,
            b,
            ya: line.at(a),
            slope: line.slope,
        });
    }
}

/// Secant-extension upper hull of a concave function on `[lo, hi]` from
/// sorted abscissae `xs` (at least three) with values `hs`.
fn upper_hull(lo: f64, hi: f64, xs: &[f64], hs: &[f64]) -> Vec<Piece> {
    let k = xs.len();
    let line = |i: usize| Line::through(xs[i], hs[i], xs[i + 1], hs[i + 1]);
    let mut pieces = Vec::with_capacity(2 * k);
    push_piece(&mut pieces, lo, xs[0], line(0));
    for i in 0..k - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        let left = (i >= 1).then(|| line(i - 1));
        let right = (i + 2 < k).then(|| line(i + 1));
        match (left, right) {
            (Some(l), Some(r)) => {
                let cross = if l.slope != r.slope {
                    (r.y0 - l.y0 + l.slope * l.x0 - r.slope * r.x0) / (l.slope - r.slope)
                } else {
                    f64::NAN
                };
                if cross > a && cross < b {
                    let (first, second) = if l.at(a) <= r.at(a) { (l, r) } else { (r, l) };
                    push_piece(&mut pieces, a, cross, first);
                    push_piece(&mut pieces, cross, b, second);
                } else {
                    let mid = 0.5 * (a + b);
                    push_piece(&mut pieces, a, b, if l.at(mid) <= r.at(mid) { l } else { r });
                }
            }
            (Some(l), None) => push_piece(&mut pieces, a, b, l),
            (None, Some(r)) => push_piece(&mut pieces, a, b, r),
            (None, None) => unreachable!("hull needs three abscissae"),
        }
    }
    push_piece(&mut pieces, xs[k - 1], hi, line(k - 2));
    pieces
}

const ARS_MAX_TRIALS: usize = 200;

/// One draw from the density `∝ exp(h)` on `[lo, hi]`, `h` concave, by
/// derivative-free adaptive rejection sampling. `init` are starting
/// abscissae inside `(lo, hi)`; at least three distinct ones are needed.
/// Returns the draw and the number of evaluations of `h`.
pub fn sample_log_concave<H, R>(h: &mut H, lo: f64, hi: f64, init: &[f64], rng: &mut R) -> Result<(f64, usize)>
where
    H: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Sampler(format!("bad interval [{lo}, {hi}]")));
    }
    let mut xs: Vec<f64> = init.iter().copied().filter(|&x| x > lo && x < hi).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::Sampler("adaptive rejection needs three abscissae".into()));
    }
    let mut hs = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = h(x);
        if !v.is_finite() {
            return Err(Error::Sampler(format!("log density is {v} at {x}")));
        }
        hs.push(v);
    }
    let mut evals = xs.len();
    for _ in 0..ARS_MAX_TRIALS {
        let pieces = upper_hull(lo, hi, &xs, &hs);
        let masses: Vec<f64> = pieces.iter().map(Piece::ln_mass).collect();
        let total = log_sum_exp(&masses);
        if !total.is_finite() {
            return Err(Error::Sampler("envelope mass is not finite".into()));
        }
        let mut u = rng.random::<f64>();
        let mut chosen = pieces.len() - 1;
        for (idx, m) in masses.iter().enumerate() {
            let p = (m - total).exp();
            if u < p {
                chosen = idx;
                break;
            }
            u -= p;
        }
        let piece = pieces[chosen];
        let x = piece.invert(rng.random::<f64>());
        let hx = h(x);
        evals += 1;
        if !hx.is_finite() {
            return Err(Error::Sampler(format!("log density is {hx} at {x}")));
        }
        let ln_v = (1.0 - rng.random::<f64>()).ln();
        if ln_v <= hx - piece.at(x) {
            return Ok((x, evals));
        }
        let pos = xs.partition_point(|&p| p < x);
        if pos < xs.len() && xs[pos] == x {
            continue;
        }
        xs.insert(pos, x);
        hs.insert(pos, hx);
    }
    Err(Error::Sampler(format!(
        "adaptive rejection did not accept within {ARS_MAX_TRIALS} proposals"
    )))
}

/// Hit-and-run chain on `Δ_δ` targeting `exp(log_density)`.
///
/// Each step draws an isotropic direction in the hyperplane `Σγ = 0`,
/// restricts the density to the chord through the current point and
/// resamples along it. The iterator emits every `thin`-th state after the
/// first `burn_in` steps.
pub struct HitAndRun<F, R> {
    log_density: F,
    simplex: DeltaSimplex,
    rng: R,
    current: Vec<f64>,
    burn_in: usize,
    thin: usize,
    burned: bool,
    grid: usize,
    pub evaluations: u64,
    pub failures: u64,
    pub restarts: u64,
    pub steps: u64,
}

/// Hit-and-run started at the centroid of `simplex`.
pub fn hit_and_run_sample<F, R>(log_density: F, simplex: DeltaSimplex, burn_in: usize, thin: usize, rng: R) -> HitAndRun<F, R>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    HitAndRun {
        log_density,
        simplex,
        rng,
        current: simplex.centroid(),
        burn_in,
        thin: thin.max(1),
        burned: false,
        grid: 3,
        evaluations: 0,
        failures: 0,
        restarts: 0,
        steps: 0,
    }
}

impl<F, R> HitAndRun<F, R>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        assert!(self.simplex.contains(&start, 1e-9), "start point outside the simplex");
        self.current = start;
        self
    }

    /// Size the initial rejection grid from a Lipschitz constant `L` of the
    /// log density (max-norm): a chord over which `L` times the coordinate
    /// span is large gets more starting abscissae, up to 9.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        let span = 1.0 - self.simplex.dim as f64 * self.simplex.delta;
        let grid = (lipschitz * span / 8.0).log2().ceil();
        self.grid = if grid.is_finite() { grid.clamp(3.0, 9.0) as usize } else { 3 };
        self
    }

    /// Run another `steps` burn-in steps before the next emitted state.
    pub fn rewarm(&mut self, steps: usize) {
        self.burn_in = steps;
        self.burned = false;
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn step(&mut self) {
        self.steps += 1;
        let dim = self.simplex.dim;
        if dim == 1 {
            return;
        }
        let mut d: Vec<f64> = (0..dim).map(|_| self.rng.sample(StandardNormal)).collect();
        let mean = d.iter().sum::<f64>() / dim as f64;
        d.iter_mut().for_each(|v| *v -= mean);
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) {
            self.failures += 1;
            return;
        }
        d.iter_mut().for_each(|v| *v /= norm);

        let (lo, hi) = self.simplex.chord(&self.current, &d);
        if !(hi - lo > 1e-14) || !lo.is_finite() || !hi.is_finite() {
            self.restarts += 1;
            self.current = self.simplex.centroid();
            return;
        }
        let g = self.grid;
        let mut init: Vec<f64> = (0..g).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / g as f64).collect();
        init.push(0.0);
        let x = &self.current;
        let density = &mut self.log_density;
        let mut point = vec![0.0; dim];
        let mut h = |t: f64| {
            for k in 0..dim {
                point[k] = x[k] + t * d[k];
            }
            density(&point)
        };
        match sample_log_concave(&mut h, lo, hi, &init, &mut self.rng) {
            Ok((t, evals)) => {
                self.evaluations += evals as u64;
                let delta = self.simplex.delta;
                let mut next: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| (xi + t * di).max(delta)).collect();
                // pull rounding drift back onto the hyperplane
                let drift = (next.iter().sum::<f64>() - 1.0) / dim as f64;
                next.iter_mut().for_each(|v| *v -= drift);
                if next.iter().all(|&v| v >= delta - 1e-15) {
                    self.current = next;
                } else {
                    self.failures += 1;
                }
            }
            Err(_) => {
                self.failures += 1;
            }
        }
    }
}

impl<F, R> Iterator for HitAndRun<F, R>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    type Item = SimplexPoint;

    fn next(&mut self) -> Option<SimplexPoint> {
        if !self.burned {
            for _ in 0..self.burn_in {
                self.step();
            }
            self.burned = true;
        }
        for _ in 0..self.thin {
            self.step();
        }
        Some(SimplexPoint {
            values: self.current.clone(),
        })
    }
}

/// Potential scale reduction `R̂` for scalar traces from several chains
/// (equal lengths; at least two chains of at least two draws).
pub fn gelman_rubin(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m < 2 || n < 2 {
        return f64::NAN;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_variance(&c[..n])).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let (_, between) = mean_variance(&means);
    let b = n as f64 * between;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt()
}
