//! C ABI over `adaptive_views`.
//!
//! Handles are opaque pointers created by `av_*_create`/`av_store_query*` and
//! released by the matching `*_free`. Every fallible function returns an
//! [`AvStatus`]; on failure, [`av_last_error_message`] describes the error
//! for the calling thread. Panics never cross the boundary.
//!
//! A store is not thread-safe: calls on one store must be serialized.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adaptive_views::page_mapper::Backend;
use adaptive_views::physical_store::{PhysicalColumn, RowId};
use adaptive_views::query_engine::{
    answer_full_scan_only, CandidateOutcome, EngineConfig, QueryEngine, QueryOutcome, RangeQuery,
};
use adaptive_views::update_engine::{apply_and_realign, UpdateRecord};
use adaptive_views::view_index::{IndexConfig, RoutingMode, SuggestVerdict, ViewIndex};
use adaptive_views::workload::{fill_column, DistributionKind, DistributionSpec};
use adaptive_views::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfBounds = 3,
    StaleUpdate = 4,
    BackendUnavailable = 5,
    ResourceExhausted = 6,
    RemapFailed = 7,
    Io = 8,
    Panic = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvBackend {
    Os = 0,
    Sim = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvRoutingMode {
    Single = 0,
    Multi = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvDistribution {
    Uniform = 0,
    Linear = 1,
    Sine = 2,
    Sparse = 3,
}

/// What happened to the candidate view built by a query.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AvCandidate {
    NotConstructed = 0,
    DiscardedEmpty = 1,
    Aborted = 2,
    Accepted = 3,
    ReplacedExisting = 4,
    DiscardedSubset = 5,
    DiscardedLargerThanFull = 6,
    DiscardedCapReached = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AvRow {
    pub row_id: u64,
    pub value: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AvUpdate {
    pub row_id: u64,
    pub old_value: u64,
    pub new_value: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AvStoreOptions {
    pub num_pages: usize,
    pub backend: AvBackend,
    pub mode: AvRoutingMode,
    pub max_views: usize,
    pub discard_tolerance: usize,
    pub replace_tolerance: usize,
    /// Non-zero to apply remaps on a mapping worker thread.
    pub async_mapper: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AvQueryStats {
    pub scanned_pages: usize,
    pub views_used: usize,
    pub candidate: AvCandidate,
    pub candidate_pages: usize,
    pub remap_calls: u64,
    pub elapsed_ns: u64,
}

/// A column with its view index.
pub struct AvStore {
    col: PhysicalColumn,
    idx: ViewIndex,
    engine: QueryEngine,
}

/// Rows and statistics of one query.
pub struct AvQueryResult {
    rows: Vec<AvRow>,
    stats: AvQueryStats,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AvStatus {
    match e {
        Error::OutOfBounds { .. } => AvStatus::OutOfBounds,
        Error::StaleOldValue { .. } => AvStatus::StaleUpdate,
        Error::BackendUnavailable(_) => AvStatus::BackendUnavailable,
        Error::ResourceExhausted(_) => AvStatus::ResourceExhausted,
        Error::RemapFailed(_) | Error::MapperStopped => AvStatus::RemapFailed,
        Error::Io(_) | Error::Csv(_) => AvStatus::Io,
        Error::InvalidPageSize { .. }
        | Error::InvalidCount(_)
        | Error::InvalidRange { .. }
        | Error::LengthMismatch { .. }
        | Error::Config(_) => AvStatus::InvalidArgument,
        _ => AvStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), AvStatus>) -> AvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AvStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            AvStatus::Panic
        }
    }
}

fn fail(e: Error) -> AvStatus {
    let s = status_of(&e);
    set_last_error(e.to_string());
    s
}

fn null(what: &str) -> AvStatus {
    set_last_error(format!("{what} is null"));
    AvStatus::NullPointer
}

unsafe fn store_mut<'a>(store: *mut AvStore) -> Result<&'a mut AvStore, AvStatus> {
    store.as_mut().ok_or_else(|| null("store"))
}

unsafe fn out_ref<'a, T>(out: *mut T, what: &str) -> Result<&'a mut T, AvStatus> {
    out.as_mut().ok_or_else(|| null(what))
}

unsafe fn input_slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], AvStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn candidate_code(c: &CandidateOutcome) -> AvCandidate {
    match c {
        CandidateOutcome::NotConstructed => AvCandidate::NotConstructed,
        CandidateOutcome::DiscardedEmpty => AvCandidate::DiscardedEmpty,
        CandidateOutcome::Aborted(_) => AvCandidate::Aborted,
        CandidateOutcome::Suggested(v) => match v {
            SuggestVerdict::Accepted => AvCandidate::Accepted,
            SuggestVerdict::ReplacedExisting { .. } => AvCandidate::ReplacedExisting,
            SuggestVerdict::DiscardedSubset { .. } => AvCandidate::DiscardedSubset,
            SuggestVerdict::DiscardedLargerThanFull => AvCandidate::DiscardedLargerThanFull,
            SuggestVerdict::DiscardedCapReached => AvCandidate::DiscardedCapReached,
        },
    }
}

fn into_result(o: QueryOutcome) -> Box<AvQueryResult> {
    Box::new(AvQueryResult {
        stats: AvQueryStats {
            scanned_pages: o.scanned_pages,
            views_used: o.views_used,
            candidate: candidate_code(&o.candidate),
            candidate_pages: o.candidate_pages,
            remap_calls: o.remaps.calls,
            elapsed_ns: o.elapsed.as_nanos().min(u64::MAX as u128) as u64,
        },
        rows: o
            .result
            .into_iter()
            .map(|(r, v)| AvRow {
                row_id: r.0,
                value: v,
            })
            .collect(),
    })
}

/// Options with the library defaults for a column of `num_pages` pages.
#[no_mangle]
pub extern "C" fn av_store_options_default(num_pages: usize) -> AvStoreOptions {
    let idx = IndexConfig::default();
    AvStoreOptions {
        num_pages,
        backend: AvBackend::Sim,
        mode: AvRoutingMode::Single,
        max_views: idx.max_views,
        discard_tolerance: idx.discard_tolerance,
        replace_tolerance: idx.replace_tolerance,
        async_mapper: 1,
    }
}

/// Creates a zero-filled store. `*out` receives the handle.
#[no_mangle]
pub unsafe extern "C" fn av_store_create(
    options: *const AvStoreOptions,
    out: *mut *mut AvStore,
) -> AvStatus {
    guard(|| {
        let o = *options.as_ref().ok_or_else(|| null("options"))?;
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let backend = match o.backend {
            AvBackend::Os => Backend::Os,
            AvBackend::Sim => Backend::Sim,
        };
        let col = PhysicalColumn::create(o.num_pages, backend).map_err(fail)?;
        let idx = ViewIndex::new(
            &col,
            IndexConfig {
                max_views: o.max_views,
                discard_tolerance: o.discard_tolerance,
                replace_tolerance: o.replace_tolerance,
                mode: match o.mode {
                    AvRoutingMode::Single => RoutingMode::Single,
                    AvRoutingMode::Multi => RoutingMode::Multi,
                },
            },
        );
        let engine = QueryEngine::new(EngineConfig {
            async_mapper: o.async_mapper != 0,
            ..EngineConfig::default()
        });
        *out = Box::into_raw(Box::new(AvStore { col, idx, engine }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn av_store_free(store: *mut AvStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

#[no_mangle]
pub unsafe extern "C" fn av_store_num_rows(store: *const AvStore, out: *mut u64) -> AvStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        *out_ref(out, "out")? = s.col.num_rows();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn av_store_num_views(store: *const AvStore, out: *mut usize) -> AvStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        *out_ref(out, "out")? = s.idx.partials().len();
        Ok(())
    })
}

/// Overwrites the whole column in row order. `len` must equal the row count.
/// Existing partial views are dropped.
#[no_mangle]
pub unsafe extern "C" fn av_store_fill(store: *mut AvStore, values: *const u64, len: usize) -> AvStatus {
    guard(|| {
        let s = store_mut(store)?;
        let values = input_slice(values, len, "values")?;
        s.col.fill_from_iter(values.iter().copied()).map_err(fail)?;
        s.idx = ViewIndex::new(&s.col, *s.idx.config());
        Ok(())
    })
}

/// Fills the column from a built-in distribution over `[lo, hi]`. Existing
/// partial views are dropped.
#[no_mangle]
pub unsafe extern "C" fn av_store_fill_distribution(
    store: *mut AvStore,
    distribution: AvDistribution,
    lo: u64,
    hi: u64,
    seed: u64,
) -> AvStatus {
    guard(|| {
        let s = store_mut(store)?;
        let kind = match distribution {
            AvDistribution::Uniform => DistributionKind::Uniform,
            AvDistribution::Linear => DistributionKind::Linear,
            AvDistribution::Sine => DistributionKind::Sine,
            AvDistribution::Sparse => DistributionKind::Sparse,
        };
        let mut spec = DistributionSpec::new(kind, seed);
        spec.lo = lo;
        spec.hi = hi;
        fill_column(&mut s.col, spec).map_err(fail)?;
        s.idx = ViewIndex::new(&s.col, *s.idx.config());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn av_store_read(store: *const AvStore, row_id: u64, out: *mut u64) -> AvStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        *out_ref(out, "out")? = s.col.read_value(RowId(row_id)).map_err(fail)?;
        Ok(())
    })
}

/// Applies a batch of overwrites and realigns every partial view. Nothing is
/// written if any record's old value is stale.
#[no_mangle]
pub unsafe extern "C" fn av_store_apply_updates(
    store: *mut AvStore,
    updates: *const AvUpdate,
    len: usize,
) -> AvStatus {
    guard(|| {
        let s = store_mut(store)?;
        let batch: Vec<UpdateRecord> = input_slice(updates, len, "updates")?
            .iter()
            .map(|u| UpdateRecord::new(u.row_id, u.old_value, u.new_value))
            .collect();
        apply_and_realign(&mut s.col, &mut s.idx, &batch, s.engine.config().coalesce).map_err(fail)?;
        Ok(())
    })
}

/// Answers `[lower, upper]` and maintains the partial views.
#[no_mangle]
pub unsafe extern "C" fn av_store_query(
    store: *mut AvStore,
    lower: u64,
    upper: u64,
    out: *mut *mut AvQueryResult,
) -> AvStatus {
    guard(|| {
        let s = store_mut(store)?;
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let q = RangeQuery::new(lower, upper).map_err(fail)?;
        let o = s.engine.answer_and_maintain(&s.col, &mut s.idx, q).map_err(fail)?;
        *out = Box::into_raw(into_result(o));
        Ok(())
    })
}

/// Answers `[lower, upper]` with a full scan, leaving the views alone.
#[no_mangle]
pub unsafe extern "C" fn av_store_query_full_scan(
    store: *const AvStore,
    lower: u64,
    upper: u64,
    out: *mut *mut AvQueryResult,
) -> AvStatus {
    guard(|| {
        let s = store.as_ref().ok_or_else(|| null("store"))?;
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let q = RangeQuery::new(lower, upper).map_err(fail)?;
        *out = Box::into_raw(into_result(answer_full_scan_only(&s.col, q)));
        Ok(())
    })
}

/// Number of rows in a result; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn av_result_len(result: *const AvQueryResult) -> usize {
    result.as_ref().map_or(0, |r| r.rows.len())
}

/// Pointer to the result's rows, valid until the result is freed.
#[no_mangle]
pub unsafe extern "C" fn av_result_rows(result: *const AvQueryResult) -> *const AvRow {
    result.as_ref().map_or(ptr::null(), |r| r.rows.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn av_result_stats(
    result: *const AvQueryResult,
    out: *mut AvQueryStats,
) -> AvStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        *out_ref(out, "out")? = r.stats;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn av_result_free(result: *mut AvQueryResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Message of the calling thread's last failure, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn av_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn av_status_name(status: AvStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        AvStatus::Ok => b"ok\0",
        AvStatus::NullPointer => b"null pointer\0",
        AvStatus::InvalidArgument => b"invalid argument\0",
        AvStatus::OutOfBounds => b"out of bounds\0",
        AvStatus::StaleUpdate => b"stale update\0",
        AvStatus::BackendUnavailable => b"backend unavailable\0",
        AvStatus::ResourceExhausted => b"resource exhausted\0",
        AvStatus::RemapFailed => b"remap failed\0",
        AvStatus::Io => b"i/o error\0",
        AvStatus::Panic => b"panic\0",
        AvStatus::Internal => b"internal error\0",
    };
    s.as_ptr().cast()
}
