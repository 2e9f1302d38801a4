//! C ABI over the causal-dialog toolkit.
//!
//! Every fallible function returns a [`CdStatus`]; on failure the message is
//! available from [`cd_last_error`] on the same thread until the next call.
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Strings returned through `out`
//! parameters are owned by the caller and released with [`cd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use causal_dialog::cause_id::{self, Mode};
use causal_dialog::ci::{self, CiClassifier, CiError, Triple};
use causal_dialog::corpus::{self, Corpus, CorpusError, HistoryResponsePair};
use causal_dialog::metrics;
use causal_dialog::synthetic::{self, SyntheticWorld, WorldConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Io = 4,
    MissingCheckpoint = 5,
    InvalidArgument = 6,
    Internal = 7,
}

/// A loaded corpus with its annotated pairs.
pub struct CdCorpus {
    corpus: Corpus,
    pairs: Vec<HistoryResponsePair>,
}

/// A trained CI or dependence classifier.
pub struct CdClassifier {
    inner: CiClassifier,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(CdStatus, String);

type FfiResult<T> = Result<T, Failure>;

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let status = match e {
            CorpusError::Io(_) => CdStatus::Io,
            CorpusError::MalformedRecord { .. } | CorpusError::DanglingAnnotation { .. } => CdStatus::Schema,
            _ => CdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<CiError> for Failure {
    fn from(e: CiError) -> Self {
        let status = match e {
            CiError::MissingCheckpoint(_) => CdStatus::MissingCheckpoint,
            CiError::Io(_) => CdStatus::Io,
            CiError::Checkpoint(_) => CdStatus::Schema,
            _ => CdStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(e: impl ToString) -> Failure {
    Failure(CdStatus::InvalidArgument, e.to_string())
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(CdStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(CdStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Failure(CdStatus::NullPointer, format!("{name} is null")))
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(CdStatus::Internal, "output contains a NUL byte".into()))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a corpus JSONL file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_load(path: *const c_char, out: *mut *mut CdCorpus) -> CdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let loaded = corpus::load_corpus(path)?;
        *out = Box::into_raw(Box::new(CdCorpus {
            corpus: loaded.corpus,
            pairs: loaded.pairs,
        }));
        Ok(())
    })
}

/// Parses corpus JSONL from memory.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_parse(jsonl: *const c_char, out: *mut *mut CdCorpus) -> CdStatus {
    guard(|| {
        let text = str_arg(jsonl, "jsonl")?;
        let out = out_arg(out, "out")?;
        let loaded = corpus::parse_corpus(text.as_bytes())?;
        *out = Box::into_raw(Box::new(CdCorpus {
            corpus: loaded.corpus,
            pairs: loaded.pairs,
        }));
        Ok(())
    })
}

/// Samples a synthetic corpus with gold annotations from the default world of
/// `world_seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_synthesize(
    n_dialogues: usize,
    seed: u64,
    world_seed: u64,
    out: *mut *mut CdCorpus,
) -> CdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let world = SyntheticWorld::new(WorldConfig {
            seed: world_seed,
            ..Default::default()
        })
        .map_err(invalid)?;
        let sc = synthetic::generate_corpus(&world, n_dialogues, seed);
        *out = Box::into_raw(Box::new(CdCorpus {
            corpus: sc.corpus,
            pairs: sc.pairs,
        }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_free(corpus: *mut CdCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_counts(
    corpus: *const CdCorpus,
    n_dialogues: *mut usize,
    n_pairs: *mut usize,
) -> CdStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        *out_arg(n_dialogues, "n_dialogues")? = c.corpus.len();
        *out_arg(n_pairs, "n_pairs")? = c.pairs.len();
        Ok(())
    })
}

/// Corpus statistics as a JSON object.
///
/// # Safety
/// `corpus` must be a valid handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_corpus_stats_json(corpus: *const CdCorpus, out_json: *mut *mut c_char) -> CdStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        let out = out_arg(out_json, "out_json")?;
        let report = corpus::corpus_stats(&c.pairs, &c.corpus)?;
        *out = to_c_string(serde_json::to_string(&report).map_err(invalid)?)?;
        Ok(())
    })
}

/// Loads a classifier checkpoint directory with an embedded encoder.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_classifier_load(dir: *const c_char, out: *mut *mut CdClassifier) -> CdStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        let out = out_arg(out, "out")?;
        let inner = ci::load_checkpoint(dir, None)?;
        *out = Box::into_raw(Box::new(CdClassifier { inner }));
        Ok(())
    })
}

/// # Safety
/// `clf` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cd_classifier_free(clf: *mut CdClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// Probability that `response` depends on `u_j` given `u_prev`.
///
/// # Safety
/// Strings must be NUL-terminated; `clf` a valid handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_classifier_score(
    clf: *const CdClassifier,
    u_j: *const c_char,
    u_prev: *const c_char,
    response: *const c_char,
    out: *mut f64,
) -> CdStatus {
    guard(|| {
        let clf = ref_arg(clf, "clf")?;
        let triple = Triple {
            dialogue_id: String::new(),
            u_j: str_arg(u_j, "u_j")?.to_string(),
            u_prev: str_arg(u_prev, "u_prev")?.to_string(),
            response: str_arg(response, "response")?.to_string(),
            j: 0,
            t: 2,
        };
        *out_arg(out, "out")? = clf.inner.score(&triple)?;
        Ok(())
    })
}

/// Cause predictions for every annotated pair of `corpus`, as JSONL
/// (`{"dialogue_id","t","causes","p_star"}` per line).
///
/// # Safety
/// Handles must be valid; `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_identify_jsonl(
    clf: *const CdClassifier,
    corpus: *const CdCorpus,
    threshold: f64,
    out_jsonl: *mut *mut c_char,
) -> CdStatus {
    guard(|| {
        let clf = ref_arg(clf, "clf")?;
        let c = ref_arg(corpus, "corpus")?;
        let out = out_arg(out_jsonl, "out_jsonl")?;
        let preds =
            cause_id::predict_all(&clf.inner, &c.pairs, &c.corpus, Mode::Inference, threshold).map_err(invalid)?;
        let mut s = String::new();
        for p in &preds {
            let rec = serde_json::json!({
                "dialogue_id": p.dialogue_id,
                "t": p.t,
                "causes": p.causes,
                "p_star": p.second_cause.map(|x| x.probability),
            });
            s.push_str(&rec.to_string());
            s.push('\n');
        }
        *out = to_c_string(s)?;
        Ok(())
    })
}

/// Mean of BLEU-1..4 of whitespace-tokenized `hypothesis` against one reference.
///
/// # Safety
/// Strings must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_average_bleu(
    hypothesis: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> CdStatus {
    guard(|| {
        let hyp: Vec<&str> = str_arg(hypothesis, "hypothesis")?.split_whitespace().collect();
        let r: Vec<&str> = str_arg(reference, "reference")?.split_whitespace().collect();
        *out_arg(out, "out")? = metrics::average_bleu(&hyp, &[r]);
        Ok(())
    })
}

/// Cohen's kappa of two binary label arrays of length `n` (non-zero = true).
///
/// # Safety
/// `a` and `b` must point to `n` readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_cohen_kappa(a: *const u8, b: *const u8, n: usize, out: *mut f64) -> CdStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(Failure(CdStatus::NullPointer, "label array is null".into()));
        }
        let xa: Vec<bool> = std::slice::from_raw_parts(a, n).iter().map(|&x| x != 0).collect();
        let xb: Vec<bool> = std::slice::from_raw_parts(b, n).iter().map(|&x| x != 0).collect();
        *out_arg(out, "out")? = metrics::cohen_kappa(&xa, &xb).map_err(invalid)?.kappa;
        Ok(())
    })
}
