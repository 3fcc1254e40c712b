//! C interface to saved opspam models.
//!
//! Every function returns an [`OpspamStatus`]. On failure a message is kept
//! per thread and can be read with [`opspam_last_error`]. Panics never cross
//! the boundary; they are reported as `OPSPAM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use opspam::pipeline::Predictor;
use opspam::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpspamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    VersionMismatch = 6,
    BufferTooSmall = 7,
    Runtime = 8,
    Panic = 9,
}

/// A loaded model. Create with [`opspam_model_load`], release with
/// [`opspam_model_free`]. A model may be shared between threads for
/// prediction.
pub struct OpspamModel {
    predictor: Predictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> OpspamStatus {
    match e {
        Error::Io { .. } | Error::Corpus { .. } => OpspamStatus::Io,
        Error::Parse { .. } => OpspamStatus::Parse,
        Error::VersionMismatch { .. } => OpspamStatus::VersionMismatch,
        Error::InvalidArgument(_)
        | Error::EmptyDocuments(_)
        | Error::EmbeddingFormat { .. }
        | Error::DimensionMismatch { .. } => OpspamStatus::InvalidArgument,
        _ => OpspamStatus::Runtime,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (OpspamStatus, String)>) -> OpspamStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OpspamStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OpspamStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (OpspamStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (OpspamStatus, String) {
    (OpspamStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (OpspamStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (OpspamStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Copy `s` plus a NUL into `buf`. `needed` receives the size including the
/// NUL even when the buffer is too small.
unsafe fn write_str(
    s: &str,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> Result<(), (OpspamStatus, String)> {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || buf_len < n {
        return Err((
            OpspamStatus::BufferTooSmall,
            format!("buffer of {buf_len} bytes, {n} needed"),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opspam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn opspam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Load a model file written by `opspam train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opspam_model_load(path: *const c_char, out: *mut *mut OpspamModel) -> OpspamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let predictor = Predictor::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OpspamModel { predictor }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`opspam_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn opspam_model_free(model: *mut OpspamModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// Classify one text. `label` receives 1 for deceptive and 0 for truthful;
/// `score` the model's raw score (log-odds, decision value or probability).
///
/// # Safety
/// All pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn opspam_model_predict(
    model: *const OpspamModel,
    text: *const c_char,
    label: *mut i32,
    score: *mut f64,
) -> OpspamStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if label.is_null() || score.is_null() {
            return Err(null("label or score"));
        }
        let text = str_arg(text, "text")?;
        let p = model.predictor.predict(&[text]).map_err(lib_err)?;
        *label = i32::from(p[0].label.as_u8());
        *score = p[0].score;
        Ok(())
    })
}

/// Name of the model type, e.g. "mnb" or "bilstm-attn".
///
/// # Safety
/// `model` must be valid; `buf` must hold `buf_len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn opspam_model_type(
    model: *const OpspamModel,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> OpspamStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        write_str(model.predictor.model().model_type.name(), buf, buf_len, needed)
    })
}

/// ROC-AUC of `scores` against 0/1 `labels`, both of length `n`.
///
/// # Safety
/// `labels` and `scores` must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn opspam_roc_auc(
    labels: *const u8,
    scores: *const f64,
    n: usize,
    out: *mut f64,
) -> OpspamStatus {
    guard(|| {
        if labels.is_null() || scores.is_null() || out.is_null() {
            return Err(null("labels, scores or out"));
        }
        let y = std::slice::from_raw_parts(labels, n);
        let s = std::slice::from_raw_parts(scores, n);
        *out = opspam::metrics::roc_auc(y, s).map_err(lib_err)?;
        Ok(())
    })
}

/// Porter stem of one lowercase word.
///
/// # Safety
/// `word` must be NUL-terminated; `buf` must hold `buf_len` bytes; `needed`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn opspam_stem(
    word: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> OpspamStatus {
    guard(|| {
        let word = str_arg(word, "word")?;
        write_str(&opspam::textprep::stem(word), buf, buf_len, needed)
    })
}
