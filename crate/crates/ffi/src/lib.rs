//! C interface to a trained run directory.
//!
//! Every function returns a [`HigStatus`]. On failure the message is
//! available from [`hig_last_error`] on the same thread. Strings handed out
//! by the library must be released with [`hig_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use higformer::data::MatchId;
use higformer::match_net::Thresholds;
use higformer::pipeline::{PipelineConfig, Snapshot};
use higformer::service::{predict_lineup, run_whatif, Loaded, PredictRequest, WhatIfRequest};
use higformer::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HigStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed request or argument.
    InvalidArgument = 3,
    /// Unknown team, player or match.
    NotFound = 4,
    /// A player has no match history.
    NoHistory = 5,
    /// Missing or unreadable files.
    Io = 6,
    /// A stored artifact is corrupt or incompatible.
    Format = 7,
    Internal = 8,
    Panic = 9,
}

/// Opaque handle to a loaded model snapshot.
pub struct HigModel {
    loaded: Loaded,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> HigStatus {
    match e {
        Error::UnknownTeam(_) | Error::UnknownPlayer(_) | Error::UnknownMatch(_) => HigStatus::NotFound,
        Error::NoHistory(_) => HigStatus::NoHistory,
        Error::Io(_) => HigStatus::Io,
        Error::Format(_) => HigStatus::Format,
        Error::Domain(_) | Error::Config(_) | Error::Json(_) | Error::Parse { .. } | Error::Schema { .. } | Error::LengthMismatch { .. } => {
            HigStatus::InvalidArgument
        }
        _ => HigStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HigStatus, String)>) -> HigStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HigStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside higformer");
            HigStatus::Panic
        }
    }
}

fn fail(e: Error) -> (HigStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (HigStatus, String)> {
    if p.is_null() {
        return Err((HigStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HigStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn hand_out(s: String, out: *mut *mut c_char) -> Result<(), (HigStatus, String)> {
    let c = CString::new(s).map_err(|_| (HigStatus::Internal, "response contains NUL".to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Loads the run directory `run_dir`. `checkpoint` may be null to use the
/// run's stage-2 checkpoint. On success `*out` receives a handle to release
/// with [`hig_model_free`].
///
/// # Safety
/// `run_dir` and a non-null `checkpoint` must be NUL-terminated strings; `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hig_model_open(run_dir: *const c_char, checkpoint: *const c_char, out: *mut *mut HigModel) -> HigStatus {
    guard(|| {
        if out.is_null() {
            return Err((HigStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let dir = read_str(run_dir, "run_dir")?;
        let mut cfg = PipelineConfig {
            run_dir: PathBuf::from(dir),
            ..PipelineConfig::default()
        };
        if !checkpoint.is_null() {
            cfg.checkpoint = Some(PathBuf::from(read_str(checkpoint, "checkpoint")?));
        }
        let loaded = Snapshot::load(&cfg).and_then(Loaded::new).map_err(fail)?;
        *out = Box::into_raw(Box::new(HigModel { loaded }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`hig_model_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hig_model_free(model: *mut HigModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn model_ref<'a>(model: *const HigModel) -> Result<&'a HigModel, (HigStatus, String)> {
    model.as_ref().ok_or((HigStatus::NullPointer, "model is null".to_string()))
}

/// Scores a dataset fixture with its recorded lineups. `outcome` receives
/// 0 for a home win, 1 for a draw and 2 for a home loss.
///
/// # Safety
/// `model` must be a live handle; `y_hat` and `outcome` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn hig_predict_fixture(model: *const HigModel, match_id: i64, y_hat: *mut f64, outcome: *mut i32) -> HigStatus {
    guard(|| {
        let m = model_ref(model)?;
        if y_hat.is_null() || outcome.is_null() {
            return Err((HigStatus::NullPointer, "output pointer is null".into()));
        }
        let snap = &m.loaded.snapshot;
        if snap.dataset.get(MatchId(match_id)).is_none() {
            return Err(fail(Error::UnknownMatch(MatchId(match_id))));
        }
        let p = snap.predictor().predict_fixture(MatchId(match_id), &BTreeMap::new()).map_err(fail)?;
        *y_hat = p.y_hat;
        *outcome = p.outcome_class.table_index() as i32;
        Ok(())
    })
}

/// Prediction for a lineup given as JSON
/// `{"home_team":1,"away_team":2,"rosters":{"home":[..],"away":[..]}}`.
/// `*out_json` receives the prediction as JSON.
///
/// # Safety
/// `model` must be a live handle, `request_json` a NUL-terminated string and
/// `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hig_predict_json(model: *const HigModel, request_json: *const c_char, out_json: *mut *mut c_char) -> HigStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_json.is_null() {
            return Err((HigStatus::NullPointer, "out_json is null".into()));
        }
        let req: PredictRequest = serde_json::from_str(read_str(request_json, "request_json")?).map_err(|e| fail(e.into()))?;
        let p = predict_lineup(&m.loaded, &req).map_err(fail)?;
        hand_out(serde_json::to_string(&p).map_err(|e| fail(e.into()))?, out_json)
    })
}

/// Substitution analysis for a JSON request
/// `{"team_id":1,"opponent":null,"substitutions":[{"out_player":..,"in_player":..}]}`.
/// `*out_json` receives the report as JSON.
///
/// # Safety
/// As for [`hig_predict_json`].
#[no_mangle]
pub unsafe extern "C" fn hig_whatif_json(model: *const HigModel, request_json: *const c_char, out_json: *mut *mut c_char) -> HigStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_json.is_null() {
            return Err((HigStatus::NullPointer, "out_json is null".into()));
        }
        let req: WhatIfRequest = serde_json::from_str(read_str(request_json, "request_json")?).map_err(|e| fail(e.into()))?;
        let r = run_whatif(&m.loaded, &req).map_err(fail)?;
        hand_out(serde_json::to_string(&r).map_err(|e| fail(e.into()))?, out_json)
    })
}

/// Maps a score in `[0, 1]` to 0 (win), 1 (draw) or 2 (lose) using the cut
/// points `lower <= upper`.
///
/// # Safety
/// `outcome` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn hig_classify(y_hat: f64, lower: f64, upper: f64, outcome: *mut i32) -> HigStatus {
    guard(|| {
        if outcome.is_null() {
            return Err((HigStatus::NullPointer, "outcome is null".into()));
        }
        let t = Thresholds::new(lower, upper).map_err(fail)?;
        *outcome = t.classify(y_hat).map_err(fail)?.table_index() as i32;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn hig_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hig_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn hig_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
