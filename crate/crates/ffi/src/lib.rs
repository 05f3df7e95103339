//! C interface to `polydesign`.
//!
//! Problems and results are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`PdStatus`]; the message of the last failure on the calling thread is
//! available from [`pd_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use polydesign::error::Error;
use polydesign::pipeline::{self, PipelineResult, ProblemFile};

/// Status codes returned by the fallible functions.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    Solver = 5,
    Recovery = 6,
    Certificate = 7,
    Numerical = 8,
    Io = 9,
    OutOfRange = 10,
    Panic = 11,
}

impl From<&Error> for PdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => PdStatus::Parse,
            Error::Solver { .. } => PdStatus::Solver,
            Error::MatchConstraintInfeasible
            | Error::ExtractionUnstable { .. }
            | Error::NoAtomsExtracted(_)
            | Error::IllConditionedVandermonde { .. }
            | Error::NegativeWeight { .. } => PdStatus::Recovery,
            Error::CertificateResidualTooLarge { .. } => PdStatus::Certificate,
            Error::SingularMatrix | Error::EigMultiplicityAmbiguous { .. } | Error::NonSymmetricInput(_) => {
                PdStatus::Numerical
            }
            Error::Io(_) => PdStatus::Io,
            _ => PdStatus::InvalidInput,
        }
    }
}

/// A validated problem description.
pub struct PdProblem {
    file: ProblemFile,
}

/// Output of [`pd_run`].
pub struct PdResult {
    inner: PipelineResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: PdStatus, msg: impl Into<String>) -> PdStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PdStatus) -> PdStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PdStatus::Panic, "internal panic"))
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, PdStatus> {
    if s.is_null() {
        return Err(fail(PdStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(PdStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn from_error(e: &Error) -> PdStatus {
    fail(PdStatus::from(e), e.to_string())
}

fn store_problem(file: ProblemFile, out: *mut *mut PdProblem) -> PdStatus {
    if let Err(e) = file.resolve() {
        return from_error(&e);
    }
    // SAFETY: checked non-null by the callers.
    unsafe { *out = Box::into_raw(Box::new(PdProblem { file })) };
    PdStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a problem file given as JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_from_json(json: *const c_char, out: *mut *mut PdProblem) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match pipeline::parse_json::<ProblemFile>(text) {
            Ok(file) => store_problem(file, out),
            Err(e) => from_error(&e),
        }
    })
}

/// Example problem on a preset design space; `degree <= 0` keeps the
/// preset degree.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_from_preset(
    name: *const c_char,
    degree: i32,
    out: *mut *mut PdProblem,
) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return fail(PdStatus::NullPointer, "null output pointer");
        }
        let name = match read_str(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let d = usize::try_from(degree).ok().filter(|&d| d > 0);
        match ProblemFile::preset(name, d) {
            Ok(file) => store_problem(file, out),
            Err(e) => from_error(&e),
        }
    })
}

/// Overrides the seed used for sampling and randomized steps.
///
/// # Safety
/// `problem` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_set_seed(problem: *mut PdProblem, seed: u64) -> PdStatus {
    match problem.as_mut() {
        Some(p) => {
            p.file.seed = seed;
            PdStatus::Ok
        }
        None => fail(PdStatus::NullPointer, "null problem"),
    }
}

/// # Safety
/// `problem` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_free(problem: *mut PdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves, recovers and certifies. A result is produced whenever the
/// pipeline ran, including when certification failed or the rank condition
/// never held; see [`pd_result_outcome`].
///
/// # Safety
/// `problem` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_run(problem: *const PdProblem, check: bool, out: *mut *mut PdResult) -> PdStatus {
    guard(|| {
        let Some(problem) = problem.as_ref() else {
            return fail(PdStatus::NullPointer, "null problem");
        };
        if out.is_null() {
            return fail(PdStatus::NullPointer, "null output pointer");
        }
        match pipeline::run_pipeline(&problem.file, check) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PdResult { inner }));
                PdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `result` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pd_result_free(result: *mut PdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// `0` certified, `2` rank condition never held, `3` certification failed,
/// `-1` for a null handle.
///
/// # Safety
/// `result` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_result_outcome(result: *const PdResult) -> i32 {
    result.as_ref().map_or(-1, |r| r.inner.exit_code())
}

/// Optimal value of the relaxation, NaN for a null handle.
///
/// # Safety
/// `result` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_result_rho(result: *const PdResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.solve.rho)
}

/// Number of recovered atoms; zero when recovery failed.
///
/// # Safety
/// `result` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_result_num_atoms(result: *const PdResult) -> usize {
    result
        .as_ref()
        .and_then(|r| r.inner.recovery.design.as_ref())
        .map_or(0, |d| d.points.len())
}

/// Dimension of the design space.
///
/// # Safety
/// `result` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_result_dimension(result: *const PdResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.solve.y_star.n())
}

/// Copies atom `index` into `coords` (length `len >= dimension`) and its
/// weight into `weight`.
///
/// # Safety
/// `result` must be a handle from this library, `coords` must point to
/// `len` writable doubles and `weight` to one.
#[no_mangle]
pub unsafe extern "C" fn pd_result_atom(
    result: *const PdResult,
    index: usize,
    coords: *mut f64,
    len: usize,
    weight: *mut f64,
) -> PdStatus {
    let Some(r) = result.as_ref() else {
        return fail(PdStatus::NullPointer, "null result");
    };
    if coords.is_null() || weight.is_null() {
        return fail(PdStatus::NullPointer, "null output buffer");
    }
    let Some(design) = r.inner.recovery.design.as_ref() else {
        return fail(PdStatus::OutOfRange, "no design was recovered");
    };
    let Some(point) = design.points.get(index) else {
        return fail(PdStatus::OutOfRange, format!("atom index {index} out of range"));
    };
    if len < point.len() {
        return fail(
            PdStatus::OutOfRange,
            format!("buffer holds {len} < {} coordinates", point.len()),
        );
    }
    ptr::copy_nonoverlapping(point.as_ptr(), coords, point.len());
    *weight = design.weights[index];
    PdStatus::Ok
}

/// Whether the equivalence-theorem checks passed.
///
/// # Safety
/// `result` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn pd_result_certified(result: *const PdResult) -> bool {
    result
        .as_ref()
        .and_then(|r| r.inner.certificate.as_ref())
        .is_some_and(|c| c.passed)
}

/// Serializes the full result; release the string with [`pd_string_free`].
///
/// # Safety
/// `result` must be a handle from this library and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_result_to_json(result: *const PdResult, out: *mut *mut c_char) -> PdStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(PdStatus::NullPointer, "null result");
        };
        if out.is_null() {
            return fail(PdStatus::NullPointer, "null output pointer");
        }
        match serde_json::to_string(&r.inner).map(CString::new) {
            Ok(Ok(s)) => {
                *out = s.into_raw();
                PdStatus::Ok
            }
            _ => fail(PdStatus::InvalidInput, "result could not be serialized"),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
