//! C ABI over `spt-core`.
//!
//! Every fallible function returns an [`SptStatus`]; on failure the message
//! is available from [`spt_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spt_core::seqdata::{one_hot_encode, parse_sequence, ProteinRecord};
use spt_core::seqscore::{sequence_score, Target};
use spt_core::sptmodel::{argmax, load_checkpoint, SptModel as CoreModel};
use spt_core::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Checkpoint = 4,
    InvalidSequence = 5,
    TooLong = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// A loaded classifier.
pub struct SptModel {
    inner: CoreModel<f64>,
}

/// Per-residue scores for one sequence.
pub struct SptScores {
    class: usize,
    predicted: usize,
    scores: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> SptStatus {
    match e {
        Error::Io { .. } => SptStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => SptStatus::Checkpoint,
        Error::InvalidResidue { .. } | Error::EmptySequence => SptStatus::InvalidSequence,
        Error::TooLong { .. } => SptStatus::TooLong,
        Error::Invalid(_) | Error::PositionOutOfRange { .. } => SptStatus::OutOfRange,
        _ => SptStatus::Internal,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (SptStatus, String)>) -> SptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SptStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside spt");
            SptStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (SptStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SptStatus, String) {
    (SptStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SptStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SptStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn model_arg<'a>(m: *const SptModel) -> Result<&'a SptModel, (SptStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn spt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spt_model_load(path: *const c_char, out: *mut *mut SptModel) -> SptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = load_checkpoint::<f64>(Path::new(path)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(SptModel { inner }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`spt_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn spt_model_free(model: *mut SptModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_model_num_classes(model: *const SptModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().num_classes)
}

/// Number of transformer blocks, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_model_num_layers(model: *const SptModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().layers)
}

/// Longest accepted sequence, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_model_max_len(model: *const SptModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.config().max_len)
}

/// Total scalar parameter count, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_model_param_count(model: *const SptModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.param_count())
}

/// Writes the raw logits for `sequence` (one-letter codes) into
/// `logits[0..num_classes]` and the argmax into `*predicted` when non-NULL.
///
/// # Safety
/// `logits` must have room for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn spt_classify(
    model: *const SptModel,
    sequence: *const c_char,
    logits: *mut f64,
    capacity: usize,
    predicted: *mut usize,
) -> SptStatus {
    guard(|| {
        let m = model_arg(model)?;
        let seq = parse_sequence(str_arg(sequence, "sequence")?).map_err(core_err)?;
        let c = m.inner.config().num_classes;
        if logits.is_null() {
            return Err(null("logits"));
        }
        if capacity < c {
            return Err((
                SptStatus::BufferTooSmall,
                format!("logits buffer holds {capacity}, need {c}"),
            ));
        }
        let y = m.inner.classify(&one_hot_encode(&seq)).map_err(core_err)?;
        std::slice::from_raw_parts_mut(logits, c).copy_from_slice(&y);
        if !predicted.is_null() {
            *predicted = argmax(&y);
        }
        Ok(())
    })
}

/// Computes residue scores into `*out`.
///
/// `class` < 0 explains the predicted class; `block` 0 selects the last
/// block, otherwise it is 1-based.
///
/// # Safety
/// `sequence` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn spt_sequence_score(
    model: *const SptModel,
    sequence: *const c_char,
    class: i64,
    block: usize,
    out: *mut *mut SptScores,
) -> SptStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model_arg(model)?;
        let seq = parse_sequence(str_arg(sequence, "sequence")?).map_err(core_err)?;
        let target = if class < 0 { Target::Predicted } else { Target::Class(class as usize) };
        let record = ProteinRecord::new("ffi", seq, 0);
        let s = sequence_score(&m.inner, &record, target, (block > 0).then_some(block)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(SptScores {
            class: s.class,
            predicted: s.predicted,
            scores: s.scores,
        }));
        Ok(())
    })
}

/// Number of scores (the sequence length), 0 for NULL.
///
/// # Safety
/// `scores` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_scores_len(scores: *const SptScores) -> usize {
    scores.as_ref().map_or(0, |s| s.scores.len())
}

/// Pointer to the scores, valid until [`spt_scores_free`]; NULL for NULL.
///
/// # Safety
/// `scores` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_scores_data(scores: *const SptScores) -> *const f64 {
    scores.as_ref().map_or(ptr::null(), |s| s.scores.as_ptr())
}

/// Class the scores explain.
///
/// # Safety
/// `scores` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_scores_class(scores: *const SptScores) -> usize {
    scores.as_ref().map_or(0, |s| s.class)
}

/// Model prediction for the scored sequence.
///
/// # Safety
/// `scores` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_scores_predicted(scores: *const SptScores) -> usize {
    scores.as_ref().map_or(0, |s| s.predicted)
}

/// Releases scores. NULL is ignored.
///
/// # Safety
/// `scores` must come from [`spt_sequence_score`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn spt_scores_free(scores: *mut SptScores) {
    if !scores.is_null() {
        drop(Box::from_raw(scores));
    }
}
