//! C ABI over `dopt-core`.
//!
//! Every fallible function returns a [`DoptStatus`]; on anything but
//! `DOPT_STATUS_OK` a message is available from [`dopt_last_error_message`] on the
//! same thread. Handles are opaque and owned by the caller, who releases them
//! with the matching `*_free` function. Strings returned through `char **`
//! are released with [`dopt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dopt::consensus::{default_cap, run_consensus, run_push_sum, RunTrace};
use dopt::graphs::{build_graph, Family, FamilySpec, GraphSequence, GraphSnapshot};
use dopt::harness::{cmd_consensus, cmd_optimize, cmd_scaling, ConsensusAlgorithm, ExperimentConfig};
use dopt::mixing::{second_singular_value, MixingMatrix, MixingRule, WeightRule};
use dopt::{Error, NodeStates};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    GraphError = 4,
    NotStochastic = 5,
    /// A run stopped at its cap or diverged.
    NotConverged = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Io = 9,
    Panic = 10,
}

/// A graph snapshot (self-loops included).
pub struct DoptGraph(GraphSnapshot);

/// A weight matrix built from a graph.
pub struct DoptMatrix(MixingMatrix);

/// Result of a consensus or push-sum run.
pub struct DoptRun(RunTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> DoptStatus {
    match e {
        Error::InvalidNodeCount { .. }
        | Error::ConnectivityNotAchieved { .. }
        | Error::DirectedGraph(_)
        | Error::Disconnected
        | Error::NoInNeighbors(_)
        | Error::ZeroOutDegree(_) => DoptStatus::GraphError,
        Error::NotStochastic { .. } => DoptStatus::NotStochastic,
        Error::Diverged { .. } => DoptStatus::NotConverged,
        Error::MassUnderflow { .. } | Error::NonFinite(_) | Error::Optimality(_) => DoptStatus::Numerical,
        Error::Config { .. } | Error::Parse(_) => DoptStatus::Config,
        Error::Io(_) => DoptStatus::Io,
        Error::EpsilonOutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidArgument(_)
        | Error::UnsupportedObjective { .. }
        | Error::EmptyIntersection => DoptStatus::InvalidArgument,
    }
}

fn fail(status: DoptStatus, msg: impl Into<String>) -> DoptStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), DoptStatus>) -> DoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DoptStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(DoptStatus::Panic, "internal panic"),
    }
}

fn core<T>(r: dopt::Result<T>) -> Result<T, DoptStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DoptStatus> {
    if p.is_null() {
        return Err(fail(DoptStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DoptStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, DoptStatus> {
    p.as_ref().ok_or_else(|| fail(DoptStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], DoptStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(DoptStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), DoptStatus> {
    if out.is_null() {
        return Err(fail(DoptStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_to(values: &[f64], out: *mut f64, len: usize) -> Result<(), DoptStatus> {
    if len < values.len() {
        return Err(fail(
            DoptStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(fail(DoptStatus::NullPointer, "output buffer is null"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

fn parse_rule(s: &str) -> Result<WeightRule, DoptStatus> {
    core(s.parse())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a graph. `family` uses the CLI names, e.g. `"path"`,
/// `"erdos-renyi:1"`, `"gridk:3"`.
///
/// # Safety
/// `family` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_new(
    family: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut DoptGraph,
) -> DoptStatus {
    guard(|| {
        let family: Family = core(str_arg(family, "family")?.parse())?;
        let g = core(build_graph(&FamilySpec::new(family, n), seed))?;
        write_out(out, DoptGraph(g))
    })
}

/// Builds a graph from `m` arcs given as `(from[i], to[i])`. Self-loops are
/// added to every node.
///
/// # Safety
/// `from` and `to` must each point to `m` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_from_edges(
    n: usize,
    directed: bool,
    from: *const usize,
    to: *const usize,
    m: usize,
    out: *mut *mut DoptGraph,
) -> DoptStatus {
    guard(|| {
        let edges: Vec<(usize, usize)> = if m == 0 {
            Vec::new()
        } else {
            if from.is_null() || to.is_null() {
                return Err(fail(DoptStatus::NullPointer, "edge arrays are null"));
            }
            let (a, b) = (std::slice::from_raw_parts(from, m), std::slice::from_raw_parts(to, m));
            a.iter().copied().zip(b.iter().copied()).collect()
        };
        let g = core(GraphSnapshot::from_edges(n, directed, &edges))?.with_self_loops();
        write_out(out, DoptGraph(g))
    })
}

/// # Safety
/// `graph` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_free(graph: *mut DoptGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a NULL handle.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_node_count(graph: *const DoptGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.n())
}

/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_is_directed(graph: *const DoptGraph) -> bool {
    graph.as_ref().is_some_and(|g| g.0.is_directed())
}

/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_graph_is_connected(graph: *const DoptGraph) -> bool {
    graph.as_ref().is_some_and(|g| g.0.is_strongly_connected())
}

/// Weight matrix for `rule`: `"metropolis"`, `"lazy-metropolis"`,
/// `"equal-neighbor"`, `"epsilon:<eps>"` or `"push-sum"`.
///
/// # Safety
/// `graph` must be a live handle, `rule` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_matrix_new(
    graph: *const DoptGraph,
    rule: *const c_char,
    out: *mut *mut DoptMatrix,
) -> DoptStatus {
    guard(|| {
        let g = ref_arg(graph, "graph")?;
        let rule = parse_rule(str_arg(rule, "rule")?)?;
        let m = core(rule.build(&g.0))?;
        write_out(out, DoptMatrix(m))
    })
}

/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_matrix_free(matrix: *mut DoptMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Row-major entries into `out`, which must hold `n * n` values.
///
/// # Safety
/// `matrix` must be a live handle; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dopt_matrix_entries(matrix: *const DoptMatrix, out: *mut f64, len: usize) -> DoptStatus {
    guard(|| {
        let m = &ref_arg(matrix, "matrix")?.0;
        let n = m.n();
        let values: Vec<f64> = (0..n * n).map(|k| m.get(k / n, k % n)).collect();
        copy_to(&values, out, len)
    })
}

/// Second-largest singular value.
///
/// # Safety
/// `matrix` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_matrix_sigma2(matrix: *const DoptMatrix, out: *mut f64) -> DoptStatus {
    guard(|| {
        let m = &ref_arg(matrix, "matrix")?.0;
        if out.is_null() {
            return Err(fail(DoptStatus::NullPointer, "out is null"));
        }
        *out = second_singular_value(m);
        Ok(())
    })
}

/// Runs `x <- A x` on a fixed graph until the deviation from the initial
/// mean shrinks by `eps`. `cap = 0` selects the default cap. A run that hits
/// its cap still yields a handle; query it with [`dopt_run_t_eps`].
///
/// # Safety
/// `graph` must be a live handle, `rule` a NUL-terminated string, `x0` must
/// point to `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_consensus(
    graph: *const DoptGraph,
    rule: *const c_char,
    x0: *const f64,
    n: usize,
    eps: f64,
    cap: usize,
    out: *mut *mut DoptRun,
) -> DoptStatus {
    guard(|| {
        let g = ref_arg(graph, "graph")?;
        let rule = parse_rule(str_arg(rule, "rule")?)?;
        let x0 = NodeStates::from_scalars(slice_arg(x0, n, "x0")?);
        let cap = if cap == 0 { default_cap(g.0.n(), eps) } else { cap };
        let seq = GraphSequence::fixed(g.0.clone());
        let trace = if rule == WeightRule::PushSum {
            core(run_push_sum(&seq, &x0, eps, cap))?
        } else {
            core(run_consensus(&seq, &rule, &x0, eps, cap))?
        };
        write_out(out, DoptRun(trace))
    })
}

/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_run_free(run: *mut DoptRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// First step meeting the tolerance; `DOPT_STATUS_NOT_CONVERGED` if the cap was hit.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dopt_run_t_eps(run: *const DoptRun, out: *mut usize) -> DoptStatus {
    guard(|| {
        let r = &ref_arg(run, "run")?.0;
        if out.is_null() {
            return Err(fail(DoptStatus::NullPointer, "out is null"));
        }
        match r.t_eps {
            Some(t) => {
                *out = t;
                Ok(())
            }
            None => Err(fail(DoptStatus::NotConverged, "run reached its cap")),
        }
    })
}

/// Number of recorded rows (steps + 1).
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dopt_run_len(run: *const DoptRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Per-step consensus error; `out` must hold [`dopt_run_len`] values.
///
/// # Safety
/// `run` must be a live handle; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dopt_run_errors(run: *const DoptRun, out: *mut f64, len: usize) -> DoptStatus {
    guard(|| copy_to(&ref_arg(run, "run")?.0.errors(), out, len))
}

/// Final node values (ratios for push-sum).
///
/// # Safety
/// `run` must be a live handle; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dopt_run_final_state(run: *const DoptRun, out: *mut f64, len: usize) -> DoptStatus {
    guard(|| copy_to(ref_arg(run, "run")?.0.final_state.as_slice(), out, len))
}

/// Runs a JSON experiment config, as accepted by `dopt --config`, and
/// returns its summary (or scaling report) as JSON in `*out`. Output paths in
/// the config are honored.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` writable. Free the
/// result with [`dopt_string_free`].
#[no_mangle]
pub unsafe extern "C" fn dopt_run_experiment(config: *const c_char, out: *mut *mut c_char) -> DoptStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DoptStatus::NullPointer, "out is null"));
        }
        let cfg = core(ExperimentConfig::from_json(str_arg(config, "config")?))?;
        let json = match cfg {
            ExperimentConfig::Consensus(c) => core(serde_json::to_string(&core(cmd_consensus(&c))?.summary).map_err(Error::from))?,
            ExperimentConfig::Pushsum(c) => {
                let c = dopt::harness::ConsensusConfig {
                    algorithm: ConsensusAlgorithm::PushSum,
                    ..c
                };
                core(serde_json::to_string(&core(cmd_consensus(&c))?.summary).map_err(Error::from))?
            }
            ExperimentConfig::Optimize(c) => core(serde_json::to_string(&core(cmd_optimize(&c))?.summary).map_err(Error::from))?,
            ExperimentConfig::Scaling(c) => core(serde_json::to_string(&core(cmd_scaling(&c))?).map_err(Error::from))?,
        };
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
