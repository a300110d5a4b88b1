//! C ABI for `lowertail`.
//!
//! Objects cross the boundary as opaque handles created by `lt_*_new` and
//! released by the matching `lt_*_free`. Every fallible function returns an
//! `LtStatus`; on failure a message is kept per thread and read with
//! `lt_last_error_message`. Panics are caught and reported as `LT_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lowertail::graph::{count_copies, CopyHypergraph, Graph};
use lowertail::increment::energy;
use lowertail::metrics::{cut_norm_exact, cut_norm_heuristic, spectral_cut_bound, SquareMatrix};
use lowertail::sampler::{ChainConfig, ExactConditional, LowerTailEvent, McmcRun};
use lowertail::variational::{eta_threshold, solve_phi, SolverConfig, VariationalProblem};
use lowertail::Error;

/// Status codes. The nonzero library codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtStatus {
    Ok = 0,
    Failure = 1,
    InvalidInput = 2,
    Resource = 3,
    NotConverged = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Cut-norm evaluation method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtCutMethod {
    Exact = 0,
    Heuristic = 1,
    Spectral = 2,
}

/// Opaque graph handle.
pub struct LtGraph(Graph);

/// Opaque handle to an exact conditional law.
pub struct LtExact(ExactConditional);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.as_bytes().to_vec());
}

fn status_of(e: &Error) -> LtStatus {
    match e.exit_code() {
        2 => LtStatus::InvalidInput,
        3 => LtStatus::Resource,
        4 => LtStatus::NotConverged,
        _ => LtStatus::Failure,
    }
}

fn guard<F: FnOnce() -> Result<(), (LtStatus, String)>>(f: F) -> LtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside lowertail");
            LtStatus::Panic
        }
    }
}

fn lib<T>(r: lowertail::Result<T>) -> Result<T, (LtStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LtStatus, String) {
    (LtStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (LtStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), (LtStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn write_slice(buf: *mut f64, len: usize, values: &[f64]) -> Result<(), (LtStatus, String)> {
    if len < values.len() {
        return Err((
            LtStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Empty graph on `n` vertices.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_graph_new(n: usize, out: *mut *mut LtGraph) -> LtStatus {
    guard(|| write(out, Box::into_raw(Box::new(LtGraph(Graph::empty(n)))), "out"))
}

/// Named graph such as `K3`, `C4` or `P3`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_graph_builtin(name: *const c_char, out: *mut *mut LtGraph) -> LtStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let s = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (LtStatus::InvalidInput, "name is not UTF-8".to_string()))?;
        let g = lib(Graph::builtin(s))?;
        write(out, Box::into_raw(Box::new(LtGraph(g))), "out")
    })
}

/// # Safety
/// `g` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lt_graph_free(g: *mut LtGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Adds edge `{a, b}`; `added` receives 1 if it was new.
///
/// # Safety
/// `g` must be a live handle and `added` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_graph_add_edge(g: *mut LtGraph, a: usize, b: usize, added: *mut i32) -> LtStatus {
    guard(|| {
        let g = g.as_mut().ok_or_else(|| null("graph"))?;
        let n = g.0.n();
        if a >= n || b >= n || a == b {
            return Err((LtStatus::InvalidInput, format!("bad edge ({a}, {b}) for n = {n}")));
        }
        let new = g.0.add_edge(a, b);
        if !added.is_null() {
            added.write(new as i32);
        }
        Ok(())
    })
}

/// # Safety
/// `g` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_graph_edge_count(g: *const LtGraph, out: *mut usize) -> LtStatus {
    guard(|| write(out, deref(g, "graph")?.0.edge_count(), "out"))
}

/// Number of copies of `h` in `g`.
///
/// # Safety
/// `h`, `g` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_count_copies(h: *const LtGraph, g: *const LtGraph, out: *mut u64) -> LtStatus {
    guard(|| {
        let h = &deref(h, "pattern")?.0;
        if h.edge_count() == 0 {
            return Err((LtStatus::InvalidInput, "pattern has no edges".into()));
        }
        write(out, count_copies(h, &deref(g, "graph")?.0), "out")
    })
}

/// Root of the threshold equation for `e(H) = r`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_eta_threshold(r: usize, out: *mut f64) -> LtStatus {
    guard(|| write(out, lib(eta_threshold(r))?.eta, "out"))
}

/// Solves the variational problem for `h` on `n` vertices: the sparse limit
/// when `p <= 0`, otherwise the finite-`p` problem. `q_out` receives the
/// minimizer in slot order when non-null. On `LT_NOT_CONVERGED` the outputs
/// hold the best iterate.
///
/// # Safety
/// `h` must be a live handle, `value` valid for writes, and `q_out` null or
/// valid for `q_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lt_solve(
    h: *const LtGraph,
    n: usize,
    p: f64,
    eta: f64,
    seed: u64,
    value: *mut f64,
    q_out: *mut f64,
    q_len: usize,
) -> LtStatus {
    guard(|| {
        let hg = lib(CopyHypergraph::enumerate(&deref(h, "pattern")?.0, n))?;
        let prob = if p <= 0.0 {
            lib(VariationalProblem::sparse_limit(&hg, eta))?
        } else {
            lib(VariationalProblem::finite_p(&hg, p, eta))?
        };
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default()
        };
        let (sol, failure) = match solve_phi(&prob, &cfg) {
            Ok(s) => (s, None),
            Err(Error::NotConverged { restarts, best }) => {
                let msg = format!("solver did not converge after {restarts} restarts");
                (*best, Some((LtStatus::NotConverged, msg)))
            }
            Err(e) => return Err((status_of(&e), e.to_string())),
        };
        write(value, sol.value, "value")?;
        if !q_out.is_null() {
            write_slice(q_out, q_len, &sol.q_star)?;
        }
        failure.map_or(Ok(()), Err)
    })
}

/// Cut norm (normalized by `n^2`) of a row-major `n x n` matrix.
///
/// # Safety
/// `a` must be valid for `n * n` doubles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_cut_norm(a: *const f64, n: usize, method: LtCutMethod, seed: u64, out: *mut f64) -> LtStatus {
    guard(|| {
        if a.is_null() && n > 0 {
            return Err(null("matrix"));
        }
        let data = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(a, n * n).to_vec() };
        let m = lib(SquareMatrix::new(n, data))?;
        let v = match method {
            LtCutMethod::Exact => lib(cut_norm_exact(&m))?,
            LtCutMethod::Heuristic => cut_norm_heuristic(&m, 16, seed),
            LtCutMethod::Spectral => lib(spectral_cut_bound(&m))?,
        };
        write(out, v, "out")
    })
}

/// Enumerates the law of `G(n, p)` conditioned on the lower-tail event of `h`.
///
/// # Safety
/// `h` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_new(h: *const LtGraph, n: usize, p: f64, eta: f64, out: *mut *mut LtExact) -> LtStatus {
    guard(|| {
        let event = lib(LowerTailEvent::new(&deref(h, "pattern")?.0, n, p, eta))?;
        let ex = lib(ExactConditional::new(&event))?;
        write(out, Box::into_raw(Box::new(LtExact(ex))), "out")
    })
}

/// # Safety
/// `e` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_free(e: *mut LtExact) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of edge slots `C(n, 2)`.
///
/// # Safety
/// `e` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_slots(e: *const LtExact, out: *mut usize) -> LtStatus {
    guard(|| write(out, deref(e, "exact")?.0.slots(), "out"))
}

/// Probability of the event and conditional mean of the pattern count.
///
/// # Safety
/// `e` must be a live handle; outputs must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_summary(e: *const LtExact, probability: *mut f64, mean_count: *mut f64) -> LtStatus {
    guard(|| {
        let ex = &deref(e, "exact")?.0;
        if !probability.is_null() {
            probability.write(ex.z());
        }
        if !mean_count.is_null() {
            mean_count.write(ex.expect_count());
        }
        Ok(())
    })
}

/// Conditional edge marginals in slot order.
///
/// # Safety
/// `e` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_marginals(e: *const LtExact, buf: *mut f64, len: usize) -> LtStatus {
    guard(|| write_slice(buf, len, &deref(e, "exact")?.0.marginals()))
}

/// Entropy-increment energy of `W` with both sides of the Cauchy-Schwarz bound.
///
/// # Safety
/// `e` must be a live handle, `w` valid for `w_len` entries (or null when
/// `w_len` is 0), and outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_exact_energy(
    e: *const LtExact,
    w: *const usize,
    w_len: usize,
    energy_out: *mut f64,
    lhs: *mut f64,
    rhs: *mut f64,
) -> LtStatus {
    guard(|| {
        let ex = &deref(e, "exact")?.0;
        if w.is_null() && w_len > 0 {
            return Err(null("w"));
        }
        let slots = if w_len == 0 { Vec::new() } else { std::slice::from_raw_parts(w, w_len).to_vec() };
        let rep = lib(energy(ex, &slots, false))?;
        for (p, v) in [(energy_out, rep.energy), (lhs, rep.lhs_cs), (rhs, rep.rhs_cs)] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Runs `chains` Metropolis chains on the conditioned law and reports the mean
/// pattern count and the effective sample size.
///
/// # Safety
/// `h` must be a live handle; outputs must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lt_mcmc_mean_count(
    h: *const LtGraph,
    n: usize,
    p: f64,
    eta: f64,
    steps: u64,
    chains: usize,
    seed: u64,
    mean: *mut f64,
    ess: *mut f64,
) -> LtStatus {
    guard(|| {
        let event = lib(LowerTailEvent::new(&deref(h, "pattern")?.0, n, p, eta))?;
        let cfg = ChainConfig {
            steps,
            burn_in: steps / 10,
            chains,
            seed,
            ..ChainConfig::default()
        };
        if chains == 0 {
            return Err((LtStatus::InvalidInput, "chains must be positive".into()));
        }
        let run = lib(McmcRun::run(&event, &cfg, None, false))?;
        if !mean.is_null() {
            mean.write(run.mean_count);
        }
        if !ess.is_null() {
            ess.write(run.ess);
        }
        Ok(())
    })
}
