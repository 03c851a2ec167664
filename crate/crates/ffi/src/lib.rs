//! C ABI for the adaptive-tor engine.
//!
//! Handles are opaque. Every fallible call returns an [`AtorStatus`]; on a
//! non-zero status the message is available from [`ator_last_error`] on the
//! same thread until the next failing call. Strings handed out by this library
//! must be released with [`ator_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use adaptive_tor::dataset::{self, QueryRecord};
use adaptive_tor::embedstore::Passage;
use adaptive_tor::lingsig;
use adaptive_tor::pipeline::estimate_tokens;
use adaptive_tor::{Engine, EngineConfig, Error, ExecutionMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Dataset = 5,
    Index = 6,
    Backend = 7,
    Pipeline = 8,
    Json = 9,
    Panic = 10,
}

/// Opaque engine configuration.
pub struct AtorConfig(EngineConfig);

/// Opaque engine: indexed knowledge base plus model backends.
pub struct AtorEngine(Engine);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|b| *b != 0);
    let c = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AtorStatus {
    match err.kind() {
        "config" => AtorStatus::Config,
        "io" => AtorStatus::Io,
        "dataset" => AtorStatus::Dataset,
        "index" => AtorStatus::Index,
        "backend" => AtorStatus::Backend,
        "json" => AtorStatus::Json,
        _ => AtorStatus::Pipeline,
    }
}

struct Fail(AtorStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(AtorStatus::Json, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AtorStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AtorStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside adaptive-tor");
            AtorStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(AtorStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            AtorStatus::InvalidUtf8,
            format!("`{name}` is not valid UTF-8"),
        )
    })
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(
            AtorStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    let c = CString::new(s).map_err(|_| Fail(AtorStatus::Json, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(
            AtorStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failing call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ator_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ator_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn ator_config_default(out: *mut *mut AtorConfig) -> AtorStatus {
    guard(|| put(out, AtorConfig(EngineConfig::default())))
}

/// Parse and validate a TOML configuration. `ATOR_*` environment overrides are
/// applied after parsing.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ator_config_from_toml(
    toml: *const c_char,
    out: *mut *mut AtorConfig,
) -> AtorStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let mut cfg = EngineConfig::from_toml_str(text)?;
        cfg.apply_env();
        cfg.validate()?;
        put(out, AtorConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from `ator_config_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ator_config_free(cfg: *mut AtorConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Build an engine over a JSON array of passages (`id`, `text`,
/// `intent_labels`, optional `domain`). The config handle is copied and may be
/// freed afterwards.
///
/// # Safety
/// `cfg` must be a live config handle; `passages_json` a NUL-terminated string;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ator_engine_new(
    cfg: *const AtorConfig,
    passages_json: *const c_char,
    out: *mut *mut AtorEngine,
) -> AtorStatus {
    guard(|| {
        let cfg = cfg
            .as_ref()
            .ok_or_else(|| Fail(AtorStatus::NullPointer, "`cfg` is null".into()))?;
        let passages: Vec<Passage> =
            serde_json::from_str(str_arg(passages_json, "passages_json")?)?;
        let engine = Engine::from_config(cfg.0.clone(), passages)?;
        put(out, AtorEngine(engine))
    })
}

/// Build an engine from a query file and optional catalog (NULL to derive it).
///
/// # Safety
/// `cfg` must be a live config handle; `dataset_path` NUL-terminated;
/// `catalog_path` NULL or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ator_engine_from_dataset(
    cfg: *const AtorConfig,
    dataset_path: *const c_char,
    catalog_path: *const c_char,
    out: *mut *mut AtorEngine,
) -> AtorStatus {
    guard(|| {
        let cfg = cfg
            .as_ref()
            .ok_or_else(|| Fail(AtorStatus::NullPointer, "`cfg` is null".into()))?;
        let report = dataset::ingest(Path::new(str_arg(dataset_path, "dataset_path")?))?;
        let catalog = if catalog_path.is_null() {
            None
        } else {
            Some(dataset::load_catalog(Path::new(str_arg(
                catalog_path,
                "catalog_path",
            )?))?)
        };
        let passages = dataset::build_kb(&report.records, catalog.as_deref());
        let names = catalog
            .unwrap_or_else(|| dataset::derive_catalog(&report.records))
            .into_iter()
            .map(|e| e.name)
            .collect();
        let engine = Engine::from_config(cfg.0.clone(), passages)?.with_catalog(names);
        put(out, AtorEngine(engine))
    })
}

/// # Safety
/// `engine` must be NULL or a handle from `ator_engine_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ator_engine_free(engine: *mut AtorEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Routing decision for `text` as JSON (`decision` and `ledger`).
///
/// # Safety
/// `engine` must be live; `text` NUL-terminated; `out_json` writable. Free the
/// result with `ator_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ator_engine_route(
    engine: *const AtorEngine,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> AtorStatus {
    guard(|| {
        let engine = engine
            .as_ref()
            .ok_or_else(|| Fail(AtorStatus::NullPointer, "`engine` is null".into()))?;
        let text = str_arg(text, "text")?;
        let (decision, ledger) = engine.0.route("ffi", text)?;
        let v = serde_json::json!({ "decision": decision, "ledger": ledger });
        put_string(out_json, v.to_string())
    })
}

/// Run one query record (`id`, `text`, `intents`) in `mode` ("adaptive",
/// "fixed3" or "standard") and return its trace as JSON. A query that fails
/// inside the pipeline still yields a trace with its `error` field set.
///
/// # Safety
/// `engine` must be live; `query_json` and `mode` NUL-terminated; `out_json`
/// writable. Free the result with `ator_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ator_engine_process(
    engine: *const AtorEngine,
    query_json: *const c_char,
    mode: *const c_char,
    out_json: *mut *mut c_char,
) -> AtorStatus {
    guard(|| {
        let engine = engine
            .as_ref()
            .ok_or_else(|| Fail(AtorStatus::NullPointer, "`engine` is null".into()))?;
        let record: QueryRecord = serde_json::from_str(str_arg(query_json, "query_json")?)?;
        let mode: ExecutionMode = str_arg(mode, "mode")?
            .parse()
            .map_err(|e: String| Fail(AtorStatus::Config, e))?;
        let trace = engine.0.process_query(&record, mode);
        put_string(out_json, serde_json::to_string(&trace)?)
    })
}

/// Complexity index of `text` under the default weights and lexicons.
///
/// # Safety
/// `text` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ator_compute_qci(text: *const c_char, out: *mut f64) -> AtorStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(Fail(AtorStatus::NullPointer, "`out` is null".into()));
        }
        let cfg = EngineConfig::default();
        let sv = lingsig::extract_signals(
            &lingsig::tokenize(text),
            &cfg.qci.lexicon,
            cfg.qci.length_threshold,
        );
        *out = lingsig::compute_qci(&sv, &cfg.qci.weights);
        Ok(())
    })
}

/// Token estimate used by the cost ledger. Returns 0 for NULL or non-UTF-8 input.
///
/// # Safety
/// `text` must be NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ator_estimate_tokens(text: *const c_char) -> u64 {
    if text.is_null() {
        return 0;
    }
    CStr::from_ptr(text).to_str().map_or(0, estimate_tokens)
}
