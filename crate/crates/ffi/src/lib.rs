//! C ABI over the corpus-router engine.
//!
//! Every fallible call returns a [`CrStatus`]; on failure the message is
//! available from [`cr_last_error`] on the same thread. Handles are opaque and
//! must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use corpus_router::corpus::{load_corpus, Corpus};
use corpus_router::embed::hash_embed;
use corpus_router::error::Error;
use corpus_router::pathway::{pathway_parse, GranularityScheme, PathwaySet};
use corpus_router::retrieval::{retrieve_topk, ScoredEntry};
use corpus_router::routing::{route_trained, TrainedRouterModel};
use corpus_router::theory::{alpha_threshold, chernoff_bound, CorpusSizes, ScoreModelParams};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    UnknownLabel = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Pathway universe used when parsing labels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrScheme {
    Default7 = 0,
    Extended = 1,
}

impl From<CrScheme> for GranularityScheme {
    fn from(s: CrScheme) -> Self {
        match s {
            CrScheme::Default7 => GranularityScheme::Default7,
            CrScheme::Extended => GranularityScheme::Extended,
        }
    }
}

/// A loaded corpus.
pub struct CrCorpus(Corpus);

/// A loaded trained router.
pub struct CrRouter(TrainedRouterModel);

/// Ranked results of one search.
pub struct CrResults {
    entries: Vec<ScoredEntry>,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> CrStatus {
    match err {
        Error::Io { .. } => CrStatus::Io,
        Error::BadMagic { .. } | Error::Truncated { .. } | Error::CountMismatch { .. } | Error::Json { .. } => {
            CrStatus::Format
        }
        Error::DimensionMismatch { .. } => CrStatus::DimensionMismatch,
        Error::UnknownLabel(_) | Error::EmptyLabel | Error::NoneIsExclusive(_) => CrStatus::UnknownLabel,
        _ => CrStatus::InvalidArgument,
    }
}

struct Fail(CrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CrStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn mask_of(set: &PathwaySet, scheme: GranularityScheme) -> u32 {
    set.iter()
        .filter_map(|&p| scheme.index_of(p))
        .fold(0, |m, i| m | (1u32 << i))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Number of pathways in `scheme`, `none` included. Bit `i` of a pathway
/// mask refers to the `i`-th pathway in canonical order.
#[no_mangle]
pub extern "C" fn cr_scheme_size(scheme: CrScheme) -> usize {
    GranularityScheme::from(scheme).pathways().len()
}

/// Writes the hashed embedding of `text` into `out[0..dim]`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn cr_hash_embed(text: *const c_char, dim: usize, seed: u64, out: *mut f64) -> CrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = hash_embed(text, dim, seed)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&v);
        Ok(())
    })
}

/// Parses a `+`-joined label into a pathway bit mask.
///
/// # Safety
/// `label` must be a NUL-terminated string and `out_mask` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_pathway_parse(label: *const c_char, scheme: CrScheme, out_mask: *mut u32) -> CrStatus {
    guard(|| {
        let label = str_arg(label, "label")?;
        let out = out_arg(out_mask, "out_mask")?;
        let scheme = GranularityScheme::from(scheme);
        *out = mask_of(&pathway_parse(label, scheme)?, scheme);
        Ok(())
    })
}

/// Loads a corpus from its manifest file.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_corpus_load(manifest_path: *const c_char, out: *mut *mut CrCorpus) -> CrStatus {
    guard(|| {
        let path = str_arg(manifest_path, "manifest_path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(CrCorpus(load_corpus(Path::new(path))?)));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from [`cr_corpus_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_corpus_free(corpus: *mut CrCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Item count, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cr_corpus_len(corpus: *const CrCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Vector dimension, or 0 for a null handle.
///
/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cr_corpus_dim(corpus: *const CrCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.dim())
}

/// Exact top-`k` search with a query of `dim` floats.
///
/// # Safety
/// `corpus` must be live, `query` must hold `dim` floats and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cr_corpus_search(
    corpus: *const CrCorpus,
    query: *const f32,
    dim: usize,
    k: usize,
    out: *mut *mut CrResults,
) -> CrStatus {
    guard(|| {
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if query.is_null() {
            return Err(null("query"));
        }
        let out = out_arg(out, "out")?;
        let query = std::slice::from_raw_parts(query, dim);
        let result = retrieve_topk(query, &corpus.0, k)?;
        let ids = result
            .entries
            .iter()
            .map(|e| CString::new(e.item_id.replace('\0', " ")).expect("no interior NUL"))
            .collect();
        *out = Box::into_raw(Box::new(CrResults {
            entries: result.entries,
            ids,
        }));
        Ok(())
    })
}

/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cr_results_len(results: *const CrResults) -> usize {
    results.as_ref().map_or(0, |r| r.entries.len())
}

/// Id of the entry at `rank` (0-based), or null when out of range. Owned by
/// the results handle.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cr_results_id(results: *const CrResults, rank: usize) -> *const c_char {
    results
        .as_ref()
        .and_then(|r| r.ids.get(rank))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Score of the entry at `rank`, or NaN when out of range.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cr_results_score(results: *const CrResults, rank: usize) -> f64 {
    results
        .as_ref()
        .and_then(|r| r.entries.get(rank))
        .map_or(f64::NAN, |e| e.score)
}

/// # Safety
/// `results` must come from [`cr_corpus_search`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_results_free(results: *mut CrResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Loads a trained router model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_router_load(path: *const c_char, out: *mut *mut CrRouter) -> CrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(CrRouter(TrainedRouterModel::load(Path::new(path))?)));
        Ok(())
    })
}

/// Overrides the decision threshold of a loaded router.
///
/// # Safety
/// `router` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cr_router_set_threshold(router: *mut CrRouter, threshold: f64) -> CrStatus {
    guard(|| {
        let router = router.as_mut().ok_or_else(|| null("router"))?;
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Fail(CrStatus::InvalidArgument, format!("threshold {threshold} outside (0, 1)")));
        }
        router.0.threshold = threshold;
        Ok(())
    })
}

/// Routes `query`. Writes the selected pathways as a bit mask over the
/// router's scheme. When `scores` is not null it receives one probability
/// per pathway of the scheme (`scores_len` must be at least
/// [`cr_scheme_size`]); pathways without a score get NaN.
///
/// # Safety
/// `router` must be live, `query` NUL-terminated, `out_mask` valid, and
/// `scores` either null or valid for `scores_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cr_router_route(
    router: *const CrRouter,
    query: *const c_char,
    out_mask: *mut u32,
    scores: *mut f64,
    scores_len: usize,
) -> CrStatus {
    guard(|| {
        let router = router.as_ref().ok_or_else(|| null("router"))?;
        let query = str_arg(query, "query")?;
        let out = out_arg(out_mask, "out_mask")?;
        let scheme = router.0.scheme;
        let decision = route_trained(&router.0, query);
        if !scores.is_null() {
            let universe = scheme.pathways();
            if scores_len < universe.len() {
                return Err(Fail(
                    CrStatus::BufferTooSmall,
                    format!("scores needs {} slots, got {scores_len}", universe.len()),
                ));
            }
            let buf = std::slice::from_raw_parts_mut(scores, universe.len());
            for (slot, p) in buf.iter_mut().zip(&universe) {
                *slot = decision.scores.get(p).copied().unwrap_or(f64::NAN);
            }
        }
        *out = mask_of(&decision.pathways, scheme);
        Ok(())
    })
}

/// # Safety
/// `router` must come from [`cr_router_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn cr_router_free(router: *mut CrRouter) {
    if !router.is_null() {
        drop(Box::from_raw(router));
    }
}

/// Smallest margin at which the unified-retrieval bound drops to `r`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_alpha_threshold(s: u64, r_size: u64, r: f64, sigma: f64, out: *mut f64) -> CrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = alpha_threshold(CorpusSizes::new(s, r_size, 0), r, sigma)?;
        Ok(())
    })
}

/// Upper bound on the probability that unified retrieval ranks an item from
/// the distractor corpus first.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_chernoff_bound(
    alpha: f64,
    sigma: f64,
    s: u64,
    r_size: u64,
    out: *mut f64,
) -> CrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let params = ScoreModelParams::with_sigma(alpha, sigma)?;
        *out = chernoff_bound(&params, CorpusSizes::new(s, r_size, 0))?;
        Ok(())
    })
}
