//! C ABI for cueload.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns a
//! [`CueloadStatus`]; on failure [`cueload_last_error`] describes the error
//! for the calling thread. Panics never cross the boundary and are reported
//! as `CUELOAD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use cueload::app::{self, CorpusData, RunConfig};
use cueload::pipeline::{feature_table_csv, FeatureRecord, TextScope};
use cueload::stats::kruskal_wallis;
use cueload::syntax::{syntactic_complexity, TreeStats};
use cueload::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueloadStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    DataError = 4,
    IoError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueloadTextScope {
    Explainer = 0,
    Both = 1,
}

/// Understanding states in class-index order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueloadState {
    U = 0,
    Pu = 1,
    Nu = 2,
    Mu = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueloadQuantifyOptions {
    pub lambda: f64,
    pub ngram_order: u32,
    pub gaze_order: u32,
    pub smoothing_k: f64,
    pub text_scope: CueloadTextScope,
}

/// One feature row. Cue order: information value, gaze entropy, syntactic
/// complexity, average dependency length. Missing values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueloadFeatureRow {
    pub label: CueloadState,
    pub raw: [f64; 4],
    pub normalized: [f64; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueloadKruskal {
    pub h: f64,
    pub p: f64,
    pub eta_squared: f64,
    pub df: u32,
}

/// Parsed corpus with its context windows.
pub struct CueloadCorpus {
    inner: CorpusData,
}

/// Quantified feature table.
pub struct CueloadFeatures {
    records: Vec<FeatureRecord>,
    window_ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CueloadStatus {
    match e {
        Error::InvalidParameter(_) => CueloadStatus::InvalidArgument,
        Error::Parse { .. } => CueloadStatus::ParseError,
        Error::Io { .. } => CueloadStatus::IoError,
        _ => CueloadStatus::DataError,
    }
}

struct Failure(CueloadStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CueloadStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic for [`cueload_last_error`].
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> CueloadStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CueloadStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            CueloadStatus::Panic
        }
    }
}

unsafe fn c_path(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        Failure(
            CueloadStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cueload_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next cueload call on the same thread.
#[no_mangle]
pub extern "C" fn cueload_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Defaults used by the command-line tool.
#[no_mangle]
pub extern "C" fn cueload_quantify_options_default() -> CueloadQuantifyOptions {
    let d = RunConfig::default();
    CueloadQuantifyOptions {
        lambda: d.lambda,
        ngram_order: d.ngram_order as u32,
        gaze_order: d.gaze_order as u32,
        smoothing_k: d.smoothing_k,
        text_scope: CueloadTextScope::Explainer,
    }
}

/// Loads a corpus from files. `gaze_path` may be NULL.
///
/// # Safety
/// Paths must be NULL or valid NUL-terminated strings; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cueload_corpus_load(
    transcripts_path: *const c_char,
    gaze_path: *const c_char,
    annotations_path: *const c_char,
    out: *mut *mut CueloadCorpus,
) -> CueloadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig {
            transcripts: Some(c_path(transcripts_path, "transcripts_path")?),
            annotations: Some(c_path(annotations_path, "annotations_path")?),
            gaze: if gaze_path.is_null() {
                None
            } else {
                Some(c_path(gaze_path, "gaze_path")?)
            },
            ..RunConfig::default()
        };
        let inner = app::load_corpus(&cfg)?;
        *out = Box::into_raw(Box::new(CueloadCorpus { inner }));
        Ok(())
    })
}

/// Parses a corpus from in-memory buffers. `gaze` may be NULL.
///
/// # Safety
/// Each non-NULL buffer must be readable for its length; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cueload_corpus_parse(
    transcripts: *const u8,
    transcripts_len: usize,
    gaze: *const u8,
    gaze_len: usize,
    annotations: *const u8,
    annotations_len: usize,
    out: *mut *mut CueloadCorpus,
) -> CueloadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = bytes(transcripts, transcripts_len, "transcripts")?;
        let a = bytes(annotations, annotations_len, "annotations")?;
        let g = if gaze.is_null() {
            None
        } else {
            Some(bytes(gaze, gaze_len, "gaze")?)
        };
        let inner = app::corpus_from_sources(t, g, a)?;
        *out = Box::into_raw(Box::new(CueloadCorpus { inner }));
        Ok(())
    })
}

/// Number of context windows (one per annotation); 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueload_corpus_window_count(corpus: *const CueloadCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.windows.len())
}

/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cueload_corpus_free(corpus: *mut CueloadCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Quantifies every window; normalized values are fitted on all windows.
/// `options` may be NULL for defaults.
///
/// # Safety
/// `corpus` must be a live handle, `options` NULL or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cueload_quantify(
    corpus: *const CueloadCorpus,
    options: *const CueloadQuantifyOptions,
    out: *mut *mut CueloadFeatures,
) -> CueloadStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| cueload_quantify_options_default());
        let mut cfg = RunConfig {
            lambda: opts.lambda,
            ngram_order: opts.ngram_order as usize,
            gaze_order: opts.gaze_order as usize,
            smoothing_k: opts.smoothing_k,
            text_scope: match opts.text_scope {
                CueloadTextScope::Explainer => TextScope::Explainer,
                CueloadTextScope::Both => TextScope::Both,
            },
            ..RunConfig::default()
        };
        cfg.finalize()?;
        let q = app::quantify(&cfg, &corpus.inner)?;
        let window_ids = q
            .records
            .iter()
            .map(|r| CString::new(r.window_id.replace('\0', " ")).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(CueloadFeatures {
            records: q.records,
            window_ids,
        }));
        Ok(())
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueload_features_len(features: *const CueloadFeatures) -> usize {
    features.as_ref().map_or(0, |f| f.records.len())
}

/// # Safety
/// `features` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cueload_features_row(
    features: *const CueloadFeatures,
    index: usize,
    out: *mut CueloadFeatureRow,
) -> CueloadStatus {
    guard(|| {
        let f = features.as_ref().ok_or_else(|| null("features"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = f.records.get(index).ok_or_else(|| {
            Failure(
                CueloadStatus::InvalidArgument,
                format!("row {index} out of range ({} rows)", f.records.len()),
            )
        })?;
        let nan = |v: &[Option<f64>; 4]| v.map(|x| x.unwrap_or(f64::NAN));
        *out = CueloadFeatureRow {
            label: match r.label.index() {
                0 => CueloadState::U,
                1 => CueloadState::Pu,
                2 => CueloadState::Nu,
                _ => CueloadState::Mu,
            },
            raw: nan(&r.raw),
            normalized: nan(&r.normalized),
        };
        Ok(())
    })
}

/// Window id of a row (`dialogue:utterance`), or NULL when out of range.
/// Owned by the handle.
///
/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueload_features_window_id(
    features: *const CueloadFeatures,
    index: usize,
) -> *const c_char {
    features
        .as_ref()
        .and_then(|f| f.window_ids.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Feature table in the CSV layout of the command-line tool, or NULL on
/// error. Release with [`cueload_string_free`].
///
/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cueload_features_csv(features: *const CueloadFeatures) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let f = features.as_ref().ok_or_else(|| null("features"))?;
        let csv = feature_table_csv(&f.records);
        result = CString::new(csv.replace('\0', " "))
            .unwrap_or_default()
            .into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `features` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cueload_features_free(features: *mut CueloadFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cueload_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Syntactic complexity score from tree length, distinct head count and
/// depth (in nodes).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cueload_syntactic_complexity(
    length: usize,
    heads: usize,
    depth: usize,
    lambda: f64,
    out: *mut f64,
) -> CueloadStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let stats = TreeStats {
            length,
            heads,
            depth,
            arcs: Vec::new(),
        };
        *out = syntactic_complexity(&stats, lambda)?;
        Ok(())
    })
}

/// Tie-corrected Kruskal-Wallis test over `n` observations assigned to
/// groups `0..k` by `groups`.
///
/// # Safety
/// `values` and `groups` must be readable for `n` elements; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cueload_kruskal_wallis(
    values: *const f64,
    groups: *const u32,
    n: usize,
    k: u32,
    out: *mut CueloadKruskal,
) -> CueloadStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if values.is_null() || groups.is_null() {
            return Err(null("values or groups"));
        }
        let values = slice::from_raw_parts(values, n);
        let groups = slice::from_raw_parts(groups, n);
        let mut grouped = vec![Vec::new(); k as usize];
        for (&v, &g) in values.iter().zip(groups) {
            let slot = grouped.get_mut(g as usize).ok_or_else(|| {
                Failure(
                    CueloadStatus::InvalidArgument,
                    format!("group index {g} out of range for k = {k}"),
                )
            })?;
            slot.push(v);
        }
        let kw = kruskal_wallis("values", &grouped)?;
        *out = CueloadKruskal {
            h: kw.h,
            p: kw.p,
            eta_squared: kw.eta_squared,
            df: kw.df as u32,
        };
        Ok(())
    })
}
