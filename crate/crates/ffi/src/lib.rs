//! C ABI over the graph, adjustment-set and estimation routines of `muas-core`.
//!
//! Every fallible function returns a [`MuasStatus`]; on failure the message is
//! available from [`muas_last_error_message`] on the same thread. Handles
//! returned through `out` pointers are owned by the caller and released with
//! the matching `*_free` function. Strings returned through `char **` are
//! released with [`muas_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use muas_core::adjustment::{check_backdoor_valid, find_muas, AdjustmentOptions, MuasResult};
use muas_core::estimation::{s_learner, BaseLearner};
use muas_core::{CausalGraph, Error, ErrorCode};
use nalgebra::{DMatrix, DVector};

/// Opaque causal graph.
pub struct MuasGraph {
    graph: CausalGraph,
}

/// Opaque adjustment-set search result.
pub struct MuasSearch {
    result: MuasResult,
    json: String,
}

/// Status codes. `MUAS_STATUS_OK` is zero; the rest mirror the library error codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Panic = 3,
    InvalidEncoding = 10,
    DimensionMismatch,
    DuplicateName,
    UnknownVertex,
    EdgeNotFound,
    EdgeNotDirected,
    GraphNotDag,
    VertexOverlap,
    GraphTooLarge,
    InvalidZ,
    InvalidCandidate,
    NoValidAdjustmentSet,
    InsufficientSamples,
    SingularCovariance,
    NonContinuousData,
    UnknownPlugin,
    ProviderUnavailable,
    ConflictingBeliefs,
    WouldCreateCycle,
    SingularDesign,
    DegenerateTreatment,
    PropensityDegenerate,
    UnknownColumn,
    TreatmentNotBinary,
    ParseError,
    SessionClosed,
    UnknownStep,
    UnknownSession,
    OutOfOrder,
    InvalidInput,
    PayloadTooLarge,
    NotFound,
    Internal,
}

impl From<ErrorCode> for MuasStatus {
    fn from(c: ErrorCode) -> Self {
        use MuasStatus as S;
        match c {
            ErrorCode::InvalidEncoding => S::InvalidEncoding,
            ErrorCode::DimensionMismatch => S::DimensionMismatch,
            ErrorCode::DuplicateName => S::DuplicateName,
            ErrorCode::UnknownVertex => S::UnknownVertex,
            ErrorCode::EdgeNotFound => S::EdgeNotFound,
            ErrorCode::EdgeNotDirected => S::EdgeNotDirected,
            ErrorCode::GraphNotDAG => S::GraphNotDag,
            ErrorCode::VertexOverlap => S::VertexOverlap,
            ErrorCode::GraphTooLarge => S::GraphTooLarge,
            ErrorCode::InvalidZ => S::InvalidZ,
            ErrorCode::InvalidCandidate => S::InvalidCandidate,
            ErrorCode::NoValidAdjustmentSet => S::NoValidAdjustmentSet,
            ErrorCode::InsufficientSamples => S::InsufficientSamples,
            ErrorCode::SingularCovariance => S::SingularCovariance,
            ErrorCode::NonContinuousData => S::NonContinuousData,
            ErrorCode::UnknownPlugin => S::UnknownPlugin,
            ErrorCode::ProviderUnavailable => S::ProviderUnavailable,
            ErrorCode::ConflictingBeliefs => S::ConflictingBeliefs,
            ErrorCode::WouldCreateCycle => S::WouldCreateCycle,
            ErrorCode::SingularDesign => S::SingularDesign,
            ErrorCode::DegenerateTreatment => S::DegenerateTreatment,
            ErrorCode::PropensityDegenerate => S::PropensityDegenerate,
            ErrorCode::UnknownColumn => S::UnknownColumn,
            ErrorCode::TreatmentNotBinary => S::TreatmentNotBinary,
            ErrorCode::ParseError => S::ParseError,
            ErrorCode::SessionClosed => S::SessionClosed,
            ErrorCode::UnknownStep => S::UnknownStep,
            ErrorCode::UnknownSession => S::UnknownSession,
            ErrorCode::OutOfOrder => S::OutOfOrder,
            ErrorCode::InvalidInput => S::InvalidInput,
            ErrorCode::PayloadTooLarge => S::PayloadTooLarge,
            ErrorCode::NotFound => S::NotFound,
            ErrorCode::Internal => S::Internal,
        }
    }
}

/// One edge uncertainty `u(from -> to)` for [`muas_find_muas`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MuasEdgeUncertainty {
    pub from: usize,
    pub to: usize,
    pub u: f64,
}

/// Outcome model for [`muas_ate_s_learner`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuasLearner {
    Ols = 0,
    Ridge = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Status(MuasStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(MuasStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MuasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MuasStatus::Ok
        }
        Ok(Err(Failure::Status(s, m))) => {
            set_error(&m);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            e.code().into()
        }
        Err(_) => {
            set_error("internal panic");
            MuasStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(MuasStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn graph<'a>(g: *const MuasGraph) -> Result<&'a CausalGraph, Failure> {
    g.as_ref().map(|h| &h.graph).ok_or_else(|| null("graph"))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure::Status(MuasStatus::Internal, "string has NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn muas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn muas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn muas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a graph from a row-major `n × n` signed adjacency matrix
/// (`m[i][j] = -1, m[j][i] = 1` for `i -> j`; `1, 1` undirected; `0, 0` none).
/// `names` may be null, giving `V0..V{n-1}`.
///
/// # Safety
/// `matrix` must point to `n * n` values and `names`, when non-null, to `n` C strings.
#[no_mangle]
pub unsafe extern "C" fn muas_graph_from_matrix(
    matrix: *const i32,
    n: usize,
    names: *const *const c_char,
    out: *mut *mut MuasGraph,
) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = slice(matrix, n * n, "matrix")?;
        let rows: Vec<Vec<i32>> = m.chunks(n.max(1)).map(<[i32]>::to_vec).collect();
        let labels: Vec<String> = if names.is_null() {
            (0..n).map(|i| format!("V{i}")).collect()
        } else {
            slice(names, n, "names")?
                .iter()
                .map(|p| c_str(*p, "name").map(String::from))
                .collect::<Result<_, _>>()?
        };
        let graph = CausalGraph::from_signed_matrix(&rows, &labels)?;
        *out = Box::into_raw(Box::new(MuasGraph { graph }));
        Ok(())
    })
}

/// Builds a graph from `{"nodes": [...], "matrix": [[...]], "edge_meta": {...}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn muas_graph_from_json(json: *const c_char, out: *mut *mut MuasGraph) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(json, "json")?;
        let graph: CausalGraph = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        *out = Box::into_raw(Box::new(MuasGraph { graph }));
        Ok(())
    })
}

/// # Safety
/// `g` must be a valid graph handle; `out` receives a string for [`muas_string_free`].
#[no_mangle]
pub unsafe extern "C" fn muas_graph_to_json(g: *const MuasGraph, out: *mut *mut c_char) -> MuasStatus {
    guard(|| {
        let s = serde_json::to_string(graph(g)?).map_err(Error::from)?;
        out_string(s, out)
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `g` must be a valid graph handle or null.
#[no_mangle]
pub unsafe extern "C" fn muas_graph_node_count(g: *const MuasGraph) -> usize {
    g.as_ref().map_or(0, |h| h.graph.n())
}

/// # Safety
/// `g` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn muas_graph_free(g: *mut MuasGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Whether `z` d-separates every vertex of `a` from every vertex of `b`. The
/// graph must be fully directed.
///
/// # Safety
/// Array pointers must be valid for their lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn muas_d_separated(
    g: *const MuasGraph,
    a: *const usize,
    na: usize,
    b: *const usize,
    nb: usize,
    z: *const usize,
    nz: usize,
    out: *mut bool,
) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = graph(g)?.d_separated(slice(a, na, "a")?, slice(b, nb, "b")?, slice(z, nz, "z")?)?;
        *out = r;
        Ok(())
    })
}

/// Back-door validity of `z` for the effect of `w` on `y`.
///
/// # Safety
/// `z` must be valid for `nz` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn muas_check_backdoor(
    g: *const MuasGraph,
    w: usize,
    y: usize,
    z: *const usize,
    nz: usize,
    out: *mut bool,
) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = check_backdoor_valid(graph(g)?, w, y, slice(z, nz, "z")?)?;
        Ok(())
    })
}

/// Minimum-uncertainty adjustment set with at most `max_size` covariates.
/// Edges not listed in `u` have uncertainty 0.
///
/// # Safety
/// `u` must be valid for `nu` entries; `out` receives a handle for [`muas_search_free`].
#[no_mangle]
pub unsafe extern "C" fn muas_find_muas(
    g: *const MuasGraph,
    w: usize,
    y: usize,
    u: *const MuasEdgeUncertainty,
    nu: usize,
    max_size: usize,
    out: *mut *mut MuasSearch,
) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = graph(g)?;
        let umap: BTreeMap<(usize, usize), f64> = slice(u, nu, "u")?.iter().map(|e| ((e.from, e.to), e.u)).collect();
        let opts = AdjustmentOptions {
            max_size,
            ..AdjustmentOptions::default()
        };
        let result = find_muas(g, w, y, &umap, &opts)?;
        let json = serde_json::to_string(&result.report(g)).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(MuasSearch { result, json }));
        Ok(())
    })
}

/// Size of the chosen set, or 0 for a null handle.
///
/// # Safety
/// `r` must be a valid search handle or null.
#[no_mangle]
pub unsafe extern "C" fn muas_search_set_len(r: *const MuasSearch) -> usize {
    r.as_ref().map_or(0, |h| h.result.chosen.z.len())
}

/// Copies up to `cap` vertex indices of the chosen set into `buf`; returns the
/// full set size.
///
/// # Safety
/// `buf` must be writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn muas_search_set(r: *const MuasSearch, buf: *mut usize, cap: usize) -> usize {
    let Some(h) = r.as_ref() else { return 0 };
    let z = &h.result.chosen.z;
    if !buf.is_null() {
        ptr::copy_nonoverlapping(z.as_ptr(), buf, z.len().min(cap));
    }
    z.len()
}

/// Cost of the chosen set; NaN for a null handle.
///
/// # Safety
/// `r` must be a valid search handle or null.
#[no_mangle]
pub unsafe extern "C" fn muas_search_cost(r: *const MuasSearch) -> f64 {
    r.as_ref().map_or(f64::NAN, |h| h.result.chosen.cost)
}

/// Whether several candidates shared the minimum cost.
///
/// # Safety
/// `r` must be a valid search handle or null.
#[no_mangle]
pub unsafe extern "C" fn muas_search_tie_broken(r: *const MuasSearch) -> bool {
    r.as_ref().is_some_and(|h| h.result.tie_broken)
}

/// Full result as JSON (chosen set, candidates, skipped flips).
///
/// # Safety
/// `r` must be a valid search handle; `out` receives a string for [`muas_string_free`].
#[no_mangle]
pub unsafe extern "C" fn muas_search_to_json(r: *const MuasSearch, out: *mut *mut c_char) -> MuasStatus {
    guard(|| {
        let h = r.as_ref().ok_or_else(|| null("search"))?;
        out_string(h.json.clone(), out)
    })
}

/// # Safety
/// `r` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn muas_search_free(r: *mut MuasSearch) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Average treatment effect by S-learner regression of `y` on `t` and the
/// `n × d` row-major covariates `x`. `lambda` is used by the ridge learner.
///
/// # Safety
/// `y`, `t` must hold `n` values, `x` `n * d` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn muas_ate_s_learner(
    y: *const f64,
    t: *const f64,
    x: *const f64,
    n: usize,
    d: usize,
    learner: MuasLearner,
    lambda: f64,
    out: *mut f64,
) -> MuasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let yv = DVector::from_column_slice(slice(y, n, "y")?);
        let tv = DVector::from_column_slice(slice(t, n, "t")?);
        let xm = DMatrix::from_row_slice(n, d, slice(x, n * d, "x")?);
        let base = match learner {
            MuasLearner::Ols => BaseLearner::Ols,
            MuasLearner::Ridge => BaseLearner::Ridge { lambda },
        };
        let tau = s_learner(&yv, &tv, &xm, &base)?;
        *out = tau.mean();
        Ok(())
    })
}
