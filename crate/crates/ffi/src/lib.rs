//! C interface to `contab`.
//!
//! Problems and flow networks are opaque handles created by `*_new` and
//! released by `*_free`. Every fallible call returns a [`ContabStatus`];
//! on failure, [`contab_last_error`] describes the most recent error on
//! the calling thread. Results go through caller-provided out-pointers,
//! which are left untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use contab::bounds::alpha_factor;
use contab::estimator::{estimate_t_prime_direct, DirectConfig};
use contab::exact::{permanent_ryser, weighted_total_exact};
use contab::flows::{count_flows_exact, FlowProblem};
use contab::scaling::{log_sigma, DEFAULT_TOL};
use contab::{validate_problem, Error, Matrix, ProblemInstance, RandomSource};

/// Status codes; the non-zero values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContabStatus {
    Ok = 0,
    /// Malformed input, including null pointers.
    InputError = 2,
    /// A precondition failed: cyclic graph, budget, infeasible route.
    PreconditionError = 3,
    /// Scaling or sampling did not converge.
    NumericalError = 4,
    /// A Rust panic was caught at the boundary.
    InternalError = 5,
}

/// Opaque problem handle.
pub struct ContabProblem(ProblemInstance);

/// Opaque flow network handle.
pub struct ContabFlowProblem(FlowProblem);

/// Result of [`contab_estimate_direct`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ContabReport {
    pub t_prime: f64,
    pub ln_t_prime: f64,
    /// Standard error of `T′`.
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    /// `T′`
    pub bracket_low: f64,
    /// `α·T′`
    pub bracket_high: f64,
    pub samples: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ContabStatus {
    match e.exit_code() {
        2 => ContabStatus::InputError,
        3 => ContabStatus::PreconditionError,
        4 => ContabStatus::NumericalError,
        _ => ContabStatus::InternalError,
    }
}

struct Fail(ContabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn input(message: &str) -> Fail {
    Fail(ContabStatus::InputError, message.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ContabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ContabStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ContabStatus::InternalError
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(input(&format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller promises a valid, exclusive pointer when non-null.
    unsafe { ptr.as_mut() }.ok_or_else(|| input(&format!("{what} is null")))
}

fn problem_handle<'a>(p: *const ContabProblem) -> Result<&'a ProblemInstance, Fail> {
    // SAFETY: handles come from contab_problem_new and are not yet freed.
    unsafe { p.as_ref() }.map(|h| &h.0).ok_or_else(|| input("problem handle is null"))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn contab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn contab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a problem. `weights` is row-major `m × n`, or null for all ones.
///
/// # Safety
/// `rows` and `cols` must point to `m` and `n` values, `weights` (if
/// non-null) to `m·n`, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contab_problem_new(
    rows: *const u64,
    m: usize,
    cols: *const u64,
    n: usize,
    weights: *const f64,
    out_problem: *mut *mut ContabProblem,
) -> ContabStatus {
    guard(|| {
        let r = slice(rows, m, "rows")?;
        let c = slice(cols, n, "cols")?;
        let w = if weights.is_null() {
            Matrix::filled(m, n, 1.0)
        } else {
            Matrix::from_vec(m, n, slice(weights, m * n, "weights")?.to_vec())
        };
        let slot = out(out_problem, "out_problem")?;
        *slot = Box::into_raw(Box::new(ContabProblem(validate_problem(r, c, &w)?)));
        Ok(())
    })
}

/// Parses a problem from `{"rows": [...], "cols": [...], "weights": [[...]]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_problem` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_problem_from_json(
    json: *const c_char,
    out_problem: *mut *mut ContabProblem,
) -> ContabStatus {
    guard(|| {
        if json.is_null() {
            return Err(input("json is null"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| input("json is not UTF-8"))?;
        let slot = out(out_problem, "out_problem")?;
        *slot = Box::into_raw(Box::new(ContabProblem(ProblemInstance::from_json(text)?)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from a `contab_problem_*` constructor and not be
/// used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn contab_problem_free(problem: *mut ContabProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Table total `N`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn contab_problem_total(problem: *const ContabProblem) -> u64 {
    problem.as_ref().map_or(0, |p| p.0.total())
}

/// Exact `T` by enumeration, visiting at most `budget` nodes. `out_tables`
/// may be null.
///
/// # Safety
/// `problem` must be a live handle; `out_total` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_exact_total(
    problem: *const ContabProblem,
    budget: u64,
    out_total: *mut f64,
    out_tables: *mut u64,
) -> ContabStatus {
    guard(|| {
        let t = weighted_total_exact(problem_handle(problem)?, budget)?;
        *out(out_total, "out_total")? = t.value;
        if let Some(tables) = out_tables.as_mut() {
            *tables = t.table_count;
        }
        Ok(())
    })
}

/// Direct Monte Carlo estimate of `T′` with its bracket.
///
/// # Safety
/// `problem` must be a live handle; `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_estimate_direct(
    problem: *const ContabProblem,
    samples: u64,
    seed: u64,
    out_report: *mut ContabReport,
) -> ContabStatus {
    guard(|| {
        let config = DirectConfig {
            samples,
            ..DirectConfig::default()
        };
        let r = estimate_t_prime_direct(problem_handle(problem)?, &config, &RandomSource::new(seed))?.report;
        *out(out_report, "out_report")? = ContabReport {
            t_prime: r.t_prime,
            ln_t_prime: r.ln_t_prime,
            std_error: r.stderr,
            ci_low: r.confidence_interval.0,
            ci_high: r.confidence_interval.1,
            alpha: r.alpha,
            bracket_low: r.t_bracket.0,
            bracket_high: r.t_bracket.1,
            samples: r.samples_used,
        };
        Ok(())
    })
}

/// The approximation factor `α(R, C)`.
///
/// # Safety
/// `rows` and `cols` must point to `m` and `n` values; `out_alpha` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_alpha(
    rows: *const u64,
    m: usize,
    cols: *const u64,
    n: usize,
    out_alpha: *mut f64,
) -> ContabStatus {
    guard(|| {
        let r = slice(rows, m, "rows")?;
        let c = slice(cols, n, "cols")?;
        if r.is_empty() || c.is_empty() || r.contains(&0) || c.contains(&0) {
            return Err(input("margins must be non-empty and positive"));
        }
        if r.iter().sum::<u64>() != c.iter().sum::<u64>() {
            return Err(input("margin sums differ"));
        }
        *out(out_alpha, "out_alpha")? = alpha_factor(r, c).alpha;
        Ok(())
    })
}

/// Ryser permanent of a row-major `n × n` matrix.
///
/// # Safety
/// `a` must point to `n·n` values; `out_permanent` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_permanent(a: *const f64, n: usize, out_permanent: *mut f64) -> ContabStatus {
    guard(|| {
        let m = Matrix::from_vec(n, n, slice(a, n * n, "a")?.to_vec());
        *out(out_permanent, "out_permanent")? = permanent_ryser(&m)?;
        Ok(())
    })
}

/// `ln σ(A)` of a positive row-major `n × n` matrix; `tol <= 0` picks the
/// default.
///
/// # Safety
/// `a` must point to `n·n` values; `out_log_sigma` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_log_sigma(
    a: *const f64,
    n: usize,
    tol: f64,
    out_log_sigma: *mut f64,
) -> ContabStatus {
    guard(|| {
        if n == 0 {
            return Err(input("matrix is empty"));
        }
        let m = Matrix::from_vec(n, n, slice(a, n * n, "a")?.to_vec());
        let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };
        *out(out_log_sigma, "out_log_sigma")? = log_sigma(&m, tol)?;
        Ok(())
    })
}

/// Builds a flow network on vertices `0..vertices` with edges
/// `tails[k] → heads[k]` and per-vertex `excess`.
///
/// # Safety
/// `tails`, `heads` must point to `edges` values, `excess` to `vertices`
/// values; `out_flow` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_flow_new(
    vertices: usize,
    tails: *const usize,
    heads: *const usize,
    edges: usize,
    excess: *const i64,
    out_flow: *mut *mut ContabFlowProblem,
) -> ContabStatus {
    guard(|| {
        let t = slice(tails, edges, "tails")?;
        let h = slice(heads, edges, "heads")?;
        let a = slice(excess, vertices, "excess")?;
        let pairs: Vec<(usize, usize)> = t.iter().copied().zip(h.iter().copied()).collect();
        let slot = out(out_flow, "out_flow")?;
        *slot = Box::into_raw(Box::new(ContabFlowProblem(FlowProblem::from_indices(vertices, &pairs, a)?)));
        Ok(())
    })
}

/// # Safety
/// `flow` must come from [`contab_flow_new`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn contab_flow_free(flow: *mut ContabFlowProblem) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Exact number of integer flows, visiting at most `budget` nodes.
///
/// # Safety
/// `flow` must be a live handle; `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn contab_flow_count(
    flow: *const ContabFlowProblem,
    budget: u64,
    out_count: *mut u64,
) -> ContabStatus {
    guard(|| {
        let f = flow.as_ref().ok_or_else(|| input("flow handle is null"))?;
        *out(out_count, "out_count")? = count_flows_exact(&f.0, budget)?;
        Ok(())
    })
}
