//! C ABI over the metablox library.
//!
//! Every fallible call returns an [`MbxStatus`]; on failure the message is
//! available from [`mbx_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.
//! Panics never cross the boundary; they surface as `MBX_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use metablox::dl::Variant;
use metablox::graph::{load_edge_list, Canonicalize, Graph, Partition};
use metablox::inference::{infer_with, InferenceConfig};
use metablox::metablox::{metablox, MetabloxConfig};
use metablox::{Error, QTable};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInput = 4,
    Config = 5,
    Io = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbxVariant {
    Ndc = 0,
    Dc = 1,
    PpUniform = 2,
    PpNonUniform = 3,
}

impl From<MbxVariant> for Variant {
    fn from(v: MbxVariant) -> Variant {
        match v {
            MbxVariant::Ndc => Variant::Ndc,
            MbxVariant::Dc => Variant::Dc,
            MbxVariant::PpUniform => Variant::PpUniform,
            MbxVariant::PpNonUniform => Variant::PpNonUniform,
        }
    }
}

/// Search settings for [`mbx_infer`] and [`mbx_metablox_json`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbxSearch {
    pub seed: u64,
    pub sweeps: usize,
    pub restarts: usize,
}

/// Returns the library defaults (1000 sweeps, 5 restarts, seed 0).
#[no_mangle]
pub extern "C" fn mbx_search_default() -> MbxSearch {
    let d = InferenceConfig::default();
    MbxSearch {
        seed: d.seed,
        sweeps: d.sweeps,
        restarts: d.restarts,
    }
}

impl MbxSearch {
    fn config(&self) -> InferenceConfig {
        InferenceConfig {
            seed: self.seed,
            sweeps: self.sweeps,
            restarts: self.restarts,
            ..InferenceConfig::default()
        }
    }
}

pub struct MbxGraph(Graph);
pub struct MbxPartition(Partition);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MbxStatus {
    match e {
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => MbxStatus::Parse,
        Error::Io(_) | Error::Fetch(_) => MbxStatus::Io,
        Error::Config(_) | Error::UnknownVariant(_) => MbxStatus::Config,
        _ => MbxStatus::InvalidInput,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (MbxStatus, String)>) -> MbxStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MbxStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error (panic)");
            MbxStatus::Internal
        }
    }
}

fn lib<T>(r: metablox::Result<T>) -> Result<T, (MbxStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MbxStatus, String)> {
    // SAFETY: the caller passes either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or_else(|| (MbxStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MbxStatus, String)> {
    // SAFETY: the caller passes either null or a valid, writable location.
    unsafe { p.as_mut() }.ok_or_else(|| (MbxStatus::NullPointer, format!("{what} is null")))
}

fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MbxStatus, String)> {
    if p.is_null() {
        return Err((MbxStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and, per the API contract, NUL-terminated.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (MbxStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (MbxStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((MbxStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and, per the API contract, valid for `len` elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn mbx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a whitespace-separated edge list. With `strict`, self-loops and
/// parallel edges are errors; otherwise they are dropped.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mbx_graph_from_edge_list(text: *const c_char, strict: bool, out: *mut *mut MbxGraph) -> MbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = c_str(text, "text")?;
        let policy = if strict {
            Canonicalize::Strict
        } else {
            Canonicalize::Collapse
        };
        let (g, _) = lib(load_edge_list(text.as_bytes(), policy))?;
        *out = Box::into_raw(Box::new(MbxGraph(g)));
        Ok(())
    })
}

/// Builds a graph on nodes `0..num_nodes` from `num_edges` pairs
/// `(src[i], dst[i])`. Self-loops and repeated pairs are errors.
///
/// # Safety
/// `src` and `dst` must hold `num_edges` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbx_graph_from_edges(
    num_nodes: usize,
    src: *const u32,
    dst: *const u32,
    num_edges: usize,
    out: *mut *mut MbxGraph,
) -> MbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = slice(src, num_edges, "src")?;
        let d = slice(dst, num_edges, "dst")?;
        let edges: Vec<(usize, usize)> = s.iter().zip(d).map(|(&a, &b)| (a as usize, b as usize)).collect();
        let g = lib(Graph::from_edges(num_nodes, &edges))?;
        *out = Box::into_raw(Box::new(MbxGraph(g)));
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn mbx_graph_num_nodes(g: *const MbxGraph) -> usize {
    unsafe { g.as_ref() }.map_or(0, |g| g.0.num_nodes())
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn mbx_graph_num_edges(g: *const MbxGraph) -> usize {
    unsafe { g.as_ref() }.map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `g` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mbx_graph_free(g: *mut MbxGraph) {
    if !g.is_null() {
        drop(unsafe { Box::from_raw(g) });
    }
}

/// Partition from arbitrary integer labels; labels are renumbered to
/// `0..B` in order of first appearance.
///
/// # Safety
/// `labels` must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbx_partition_new(labels: *const u32, len: usize, out: *mut *mut MbxPartition) -> MbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let raw = slice(labels, len, "labels")?;
        *out = Box::into_raw(Box::new(MbxPartition(Partition::canonical(raw))));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a live partition handle.
#[no_mangle]
pub unsafe extern "C" fn mbx_partition_len(p: *const MbxPartition) -> usize {
    unsafe { p.as_ref() }.map_or(0, |p| p.0.len())
}

/// # Safety
/// `p` must be null or a live partition handle.
#[no_mangle]
pub unsafe extern "C" fn mbx_partition_num_blocks(p: *const MbxPartition) -> usize {
    unsafe { p.as_ref() }.map_or(0, |p| p.0.num_blocks())
}

/// Copies the labels into `buf`, which must hold `mbx_partition_len(p)`
/// elements.
///
/// # Safety
/// `buf` must be writable for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn mbx_partition_labels(p: *const MbxPartition, buf: *mut u32, len: usize) -> MbxStatus {
    guard(|| {
        let p = non_null(p, "partition")?;
        if len != p.0.len() {
            return Err((
                MbxStatus::InvalidInput,
                format!("buffer holds {len} labels, partition has {}", p.0.len()),
            ));
        }
        if len > 0 {
            if buf.is_null() {
                return Err((MbxStatus::NullPointer, "buf is null".into()));
            }
            // SAFETY: checked non-null, caller guarantees room for `len`.
            unsafe { ptr::copy_nonoverlapping(p.0.labels().as_ptr(), buf, len) };
        }
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn mbx_partition_free(p: *mut MbxPartition) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Description length (nats) of `g` under `p`.
///
/// # Safety
/// Handles must be live; `out_total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbx_dl(
    g: *const MbxGraph,
    p: *const MbxPartition,
    variant: MbxVariant,
    out_total: *mut f64,
) -> MbxStatus {
    guard(|| {
        let (g, p) = (non_null(g, "graph")?, non_null(p, "partition")?);
        let out = out_ptr(out_total, "out_total")?;
        *out = lib(metablox::dl::dl_with(&g.0, &p.0, variant.into(), QTable::global()))?.total;
        Ok(())
    })
}

/// Minimum-description-length partition search.
///
/// # Safety
/// `g` must be live; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbx_infer(
    g: *const MbxGraph,
    variant: MbxVariant,
    search: MbxSearch,
    out_partition: *mut *mut MbxPartition,
    out_sigma: *mut f64,
) -> MbxStatus {
    guard(|| {
        let g = non_null(g, "graph")?;
        let out_p = out_ptr(out_partition, "out_partition")?;
        let out_s = out_ptr(out_sigma, "out_sigma")?;
        let res = lib(infer_with(&g.0, variant.into(), &search.config(), QTable::global()))?;
        *out_s = res.sigma_opt;
        *out_p = Box::into_raw(Box::new(MbxPartition(res.best_partition)));
        Ok(())
    })
}

/// Full relevance report of metadata `d` as a JSON string, to be released
/// with [`mbx_string_free`].
///
/// # Safety
/// Handles must be live; `variants` must hold `num_variants` elements;
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbx_metablox_json(
    g: *const MbxGraph,
    d: *const MbxPartition,
    variants: *const MbxVariant,
    num_variants: usize,
    n_permutations: usize,
    alpha: f64,
    search: MbxSearch,
    out_json: *mut *mut c_char,
) -> MbxStatus {
    guard(|| {
        let (g, d) = (non_null(g, "graph")?, non_null(d, "metadata")?);
        let out = out_ptr(out_json, "out_json")?;
        let vs = slice(variants, num_variants, "variants")?;
        let cfg = MetabloxConfig {
            variants: vs.iter().map(|&v| v.into()).collect(),
            n_permutations,
            alpha,
            seed: search.seed,
            inference: search.config(),
        };
        let rep = lib(metablox(&g.0, &d.0, &cfg, QTable::global()))?;
        let text = lib(serde_json::to_string(&rep.to_json(Some(&g.0))).map_err(Error::from))?;
        let c = CString::new(text).map_err(|_| (MbxStatus::Internal, "report contains NUL".to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn mbx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
