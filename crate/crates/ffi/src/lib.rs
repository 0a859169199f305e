//! C interface to `prefsqa`.
//!
//! Every entry point returns a [`PsqaStatus`] and writes results through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`psqa_last_error`]. Scorers are opaque handles created by
//! [`psqa_scorer_open`] and released with [`psqa_scorer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use prefsqa::backbone::{read_wav, BackboneRegistry, Waveform};
use prefsqa::datamodel::{PredictionRecord, PreferenceLabel};
use prefsqa::eval::sign_accuracy;
use prefsqa::pairgen::{normalize_transcript, normalized_levenshtein};
use prefsqa::samos::{preference_score, Scorer};
use prefsqa::training::Checkpoint;
use prefsqa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsqaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Audio = 5,
    Shape = 6,
    NonFinite = 7,
    Checkpoint = 8,
    Panic = 9,
}

/// Predicted scores for an ordered pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsqaPrediction {
    pub mos_x: f64,
    pub mos_y: f64,
    /// In (-1, 1); positive when x is predicted better.
    pub preference: f64,
}

/// A trained network and its feature extractors.
pub struct PsqaScorer {
    inner: Scorer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PsqaStatus {
    match err {
        Error::Io { .. } => PsqaStatus::Io,
        Error::Csv { .. } | Error::Parse { .. } | Error::Serde(_) => PsqaStatus::Format,
        Error::Audio(_) => PsqaStatus::Audio,
        Error::Shape(_) | Error::FrameRate(..) | Error::LengthMismatch(..) => PsqaStatus::Shape,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => PsqaStatus::NonFinite,
        Error::Checkpoint(_) | Error::UnknownBackbone(_) => PsqaStatus::Checkpoint,
        _ => PsqaStatus::InvalidArgument,
    }
}

struct Fail(PsqaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PsqaStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, recording any error or panic for [`psqa_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PsqaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PsqaStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PsqaStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    path_arg(p, what).map(|p| p.to_str().unwrap_or_default())
}

unsafe fn waveform_arg(samples: *const f64, len: usize, sample_rate: u32, what: &str) -> Result<Waveform, Fail> {
    if samples.is_null() {
        return Err(null(what));
    }
    let data = std::slice::from_raw_parts(samples, len).to_vec();
    Ok(Waveform::new(data, sample_rate)?)
}

unsafe fn scorer_arg<'a>(scorer: *const PsqaScorer) -> Result<&'a Scorer, Fail> {
    scorer.as_ref().map(|s| &s.inner).ok_or_else(|| null("scorer"))
}

fn to_prediction(r: PredictionRecord) -> PsqaPrediction {
    PsqaPrediction {
        mos_x: r.mos_hat_x,
        mos_y: r.mos_hat_y,
        preference: r.pref_hat,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn psqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn psqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint archive and builds its feature extractors.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` owns a scorer that must be released with
/// [`psqa_scorer_free`].
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_open(path: *const c_char, out: *mut *mut PsqaScorer) -> PsqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let ckpt = Checkpoint::load(path_arg(path, "path")?)?;
        let backbones = BackboneRegistry::default().build_pair(&ckpt.meta.backbone)?;
        let scorer = Box::new(PsqaScorer {
            inner: Scorer::new(ckpt.model, backbones),
        });
        *out = Box::into_raw(scorer);
        Ok(())
    })
}

/// # Safety
/// `scorer` must be NULL or a handle from [`psqa_scorer_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_free(scorer: *mut PsqaScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Predicted MOS of one mono waveform.
///
/// # Safety
/// `samples` must point to `len` readable values and `out_mos` must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_score_samples(
    scorer: *const PsqaScorer,
    samples: *const f64,
    len: usize,
    sample_rate: u32,
    out_mos: *mut f64,
) -> PsqaStatus {
    guard(|| {
        let scorer = scorer_arg(scorer)?;
        if out_mos.is_null() {
            return Err(null("out_mos"));
        }
        let wav = waveform_arg(samples, len, sample_rate, "samples")?;
        *out_mos = scorer.score_waveform(&wav)?;
        Ok(())
    })
}

/// Predicted MOS of a WAV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_mos` must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_score_wav(
    scorer: *const PsqaScorer,
    path: *const c_char,
    out_mos: *mut f64,
) -> PsqaStatus {
    guard(|| {
        let scorer = scorer_arg(scorer)?;
        if out_mos.is_null() {
            return Err(null("out_mos"));
        }
        let wav = read_wav(path_arg(path, "path")?)?;
        *out_mos = scorer.score_waveform(&wav)?;
        Ok(())
    })
}

/// Scores both waveforms and their preference. Both share `sample_rate`.
///
/// # Safety
/// `x` and `y` must point to `x_len` and `y_len` readable values and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_compare_samples(
    scorer: *const PsqaScorer,
    x: *const f64,
    x_len: usize,
    y: *const f64,
    y_len: usize,
    sample_rate: u32,
    out: *mut PsqaPrediction,
) -> PsqaStatus {
    guard(|| {
        let scorer = scorer_arg(scorer)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let xw = waveform_arg(x, x_len, sample_rate, "x")?;
        let yw = waveform_arg(y, y_len, sample_rate, "y")?;
        *out = to_prediction(scorer.forward_pair("x", &xw, "y", &yw)?);
        Ok(())
    })
}

/// Same as [`psqa_scorer_compare_samples`] for two WAV files.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_scorer_compare_wav(
    scorer: *const PsqaScorer,
    x_path: *const c_char,
    y_path: *const c_char,
    out: *mut PsqaPrediction,
) -> PsqaStatus {
    guard(|| {
        let scorer = scorer_arg(scorer)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let xw = read_wav(path_arg(x_path, "x_path")?)?;
        let yw = read_wav(path_arg(y_path, "y_path")?)?;
        *out = to_prediction(scorer.forward_pair("x", &xw, "y", &yw)?);
        Ok(())
    })
}

/// Preference of x over y from two absolute scores.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_preference_score(mos_x: f64, mos_y: f64, out: *mut f64) -> PsqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = preference_score(mos_x, mos_y)?;
        Ok(())
    })
}

/// Fraction of `n` pairs where the sign of `pref_hat[i]` equals `labels[i]`
/// (each -1, 0 or 1).
///
/// # Safety
/// `pref_hat` and `labels` must each point to `n` readable values and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_preference_accuracy(
    pref_hat: *const f64,
    labels: *const i8,
    n: usize,
    out: *mut f64,
) -> PsqaStatus {
    guard(|| {
        if pref_hat.is_null() {
            return Err(null("pref_hat"));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let preds = std::slice::from_raw_parts(pref_hat, n);
        let labels = std::slice::from_raw_parts(labels, n)
            .iter()
            .map(|&l| PreferenceLabel::from_i64(i64::from(l)))
            .collect::<Result<Vec<_>, _>>()?;
        *out = sign_accuracy(preds, &labels)?;
        Ok(())
    })
}

/// Distance used for content clustering: transcripts are lowercased and
/// stripped of punctuation, then the edit distance is divided by the longer
/// length.
///
/// # Safety
/// `a` and `b` must be NUL-terminated UTF-8 strings and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn psqa_normalized_levenshtein(a: *const c_char, b: *const c_char, out: *mut f64) -> PsqaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = normalize_transcript(str_arg(a, "a")?);
        let b = normalize_transcript(str_arg(b, "b")?);
        *out = normalized_levenshtein(&a, &b);
        Ok(())
    })
}
