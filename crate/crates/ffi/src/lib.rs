//! C interface to the eDBN anomaly detector.
//!
//! Objects are opaque handles created by `edbn_*` constructors and released
//! with the matching `*_free` function. Fallible calls return an
//! [`EdbnStatus`]; on failure, [`edbn_last_error`] describes the problem for
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use edbn::detect::{rank_traces, Ranking};
use edbn::eval::{auc, LabeledScore};
use edbn::{learn_edbn, parse_log, AttributeSchema, EdbnError, EventLog, ParseOptions};

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdbnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    SchemaMismatch = 6,
    ModelFormat = 7,
    ModelVersion = 8,
    EmptyLog = 9,
    Evaluation = 10,
    Internal = 11,
    Panic = 12,
}

/// A parsed event log.
pub struct EdbnLog {
    inner: EventLog,
}

/// A learned model.
pub struct EdbnModel {
    inner: edbn::EdbnModel,
}

/// Traces ranked from most to least anomalous.
pub struct EdbnRanking {
    ids: Vec<CString>,
    scores: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(EdbnStatus, String);

impl From<EdbnError> for Failure {
    fn from(e: EdbnError) -> Self {
        let status = match &e {
            EdbnError::EmptyLog => EdbnStatus::EmptyLog,
            EdbnError::Parse { .. } => EdbnStatus::Parse,
            EdbnError::InvalidArgument(_) | EdbnError::UnknownVariable(_) | EdbnError::Generation(_) => {
                EdbnStatus::InvalidArgument
            }
            EdbnError::SchemaMismatch(_) => EdbnStatus::SchemaMismatch,
            EdbnError::ModelFormat(_) => EdbnStatus::ModelFormat,
            EdbnError::ModelVersion(_) => EdbnStatus::ModelVersion,
            EdbnError::Evaluation(_) => EdbnStatus::Evaluation,
            EdbnError::Internal(_) => EdbnStatus::Internal,
            EdbnError::Io(_) => EdbnStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(EdbnStatus::Io, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EdbnStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EdbnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EdbnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EdbnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EdbnStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `edbn_*` call on the same thread.
#[no_mangle]
pub extern "C" fn edbn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn edbn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses `len` bytes of delimited text with a header row. `attrs` lists
/// `n_attrs` attribute column names; `id_col` may be NULL to number events
/// by row.
///
/// # Safety
/// Pointers must be valid for the given lengths; strings must be
/// nul-terminated. `out` receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn edbn_log_parse(
    data: *const u8,
    len: usize,
    trace_col: *const c_char,
    id_col: *const c_char,
    attrs: *const *const c_char,
    n_attrs: usize,
    delimiter: u8,
    out: *mut *mut EdbnLog,
) -> EdbnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        if attrs.is_null() && n_attrs > 0 {
            return Err(null("attrs"));
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let names = (0..n_attrs).map(|i| text(*attrs.add(i), "attrs[i]")).collect::<Result<Vec<_>, _>>()?;
        let mut schema = AttributeSchema::new(names, text(trace_col, "trace_col")?)?;
        if !id_col.is_null() {
            schema = schema.with_event_id_column(text(id_col, "id_col")?)?;
        }
        let log = parse_log(bytes, &schema, ParseOptions { delimiter, has_header: true })?;
        write_out(out, EdbnLog { inner: log });
        Ok(())
    })
}

/// Number of traces in `log`, or 0 for NULL.
///
/// # Safety
/// `log` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edbn_log_trace_count(log: *const EdbnLog) -> usize {
    log.as_ref().map_or(0, |l| l.inner.traces().len())
}

/// # Safety
/// `log` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn edbn_log_free(log: *mut EdbnLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Learns a model with history length `k` and FD threshold `fd_threshold`.
///
/// # Safety
/// `log` must be a live handle; `out` receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn edbn_model_learn(
    log: *const EdbnLog,
    k: usize,
    fd_threshold: f64,
    out: *mut *mut EdbnModel,
) -> EdbnStatus {
    guard(|| {
        let log = log.as_ref().ok_or_else(|| null("log"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = learn_edbn(&log.inner, k, fd_threshold)?;
        write_out(out, EdbnModel { inner: model });
        Ok(())
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` receives a handle owned by
/// the caller.
#[no_mangle]
pub unsafe extern "C" fn edbn_model_load(path: *const c_char, out: *mut *mut EdbnModel) -> EdbnStatus {
    guard(|| {
        let path = text(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = edbn::EdbnModel::load(BufReader::new(File::open(path)?))?;
        write_out(out, EdbnModel { inner: model });
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn edbn_model_save(model: *const EdbnModel, path: *const c_char) -> EdbnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let mut w = BufWriter::new(File::create(text(path, "path")?)?);
        model.inner.save(&mut w)?;
        w.flush()?;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn edbn_model_free(model: *mut EdbnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores every trace of `log` and ranks them, most anomalous first.
///
/// # Safety
/// `model` and `log` must be live handles; `out` receives a handle owned by
/// the caller.
#[no_mangle]
pub unsafe extern "C" fn edbn_model_score(
    model: *const EdbnModel,
    log: *const EdbnLog,
    out: *mut *mut EdbnRanking,
) -> EdbnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let log = log.as_ref().ok_or_else(|| null("log"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let Ranking { scores } = rank_traces(&model.inner, &log.inner)?;
        let ids = scores
            .iter()
            .map(|s| CString::new(s.trace_id.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure(EdbnStatus::InvalidArgument, "trace id contains a nul byte".into()))?;
        write_out(out, EdbnRanking { ids, scores: scores.iter().map(|s| s.score).collect() });
        Ok(())
    })
}

/// Number of ranked traces, or 0 for NULL.
///
/// # Safety
/// `ranking` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn edbn_ranking_len(ranking: *const EdbnRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.ids.len())
}

/// Trace id and score at rank `index` (0 is most anomalous). The id stays
/// valid while the ranking lives.
///
/// # Safety
/// `ranking` must be a live handle; `trace_id` and `score` may each be NULL.
#[no_mangle]
pub unsafe extern "C" fn edbn_ranking_get(
    ranking: *const EdbnRanking,
    index: usize,
    trace_id: *mut *const c_char,
    score: *mut f64,
) -> EdbnStatus {
    guard(|| {
        let r = ranking.as_ref().ok_or_else(|| null("ranking"))?;
        let (Some(id), Some(s)) = (r.ids.get(index), r.scores.get(index)) else {
            return Err(Failure(
                EdbnStatus::InvalidArgument,
                format!("index {index} out of range for {} traces", r.ids.len()),
            ));
        };
        if !trace_id.is_null() {
            *trace_id = id.as_ptr();
        }
        if !score.is_null() {
            *score = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `ranking` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn edbn_ranking_free(ranking: *mut EdbnRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

/// ROC AUC of `n` scores where nonzero `anomalous[i]` marks the positive
/// class and lower scores are more anomalous.
///
/// # Safety
/// `scores` and `anomalous` must point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn edbn_auc(scores: *const f64, anomalous: *const u8, n: usize, out: *mut f64) -> EdbnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n > 0 && (scores.is_null() || anomalous.is_null()) {
            return Err(null("scores"));
        }
        let labeled: Vec<LabeledScore> = (0..n)
            .map(|i| LabeledScore { trace_id: i.to_string(), score: *scores.add(i), anomalous: *anomalous.add(i) != 0 })
            .collect();
        *out = auc(&labeled)?;
        Ok(())
    })
}
