//! C ABI for the segmentation library.
//!
//! Conventions:
//! - handles (`BisegModel`, `BisegCloud`) are opaque pointers owned by this
//!   library; free them with the matching `*_free` function;
//! - every fallible call returns a [`BisegStatus`]; on failure,
//!   [`biseg_last_error_message`] returns a thread-local description valid
//!   until the next failing call on the same thread;
//! - caller-provided output buffers must be at least as long as the
//!   documented element count.
//!
//! The build script generates the header into `include/biseg.h`.

use biseg::checkpoint::Checkpoint;
use biseg::data::{load_cloud, save_cloud, CloudFormat, PointCloud};
use biseg::error::Error;
use biseg::metrics::MetricsAccumulator;
use biseg::pipeline::{export_similarity_masks, segment_scene};
use libc::{c_char, c_double};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

/// Result codes; aligned with the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BisegStatus {
    Ok = 0,
    Internal = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    Tolerance = 5,
    InvalidArgument = 6,
}

/// Opaque: a loaded checkpoint (model plus its run config).
pub struct BisegModel {
    checkpoint: Checkpoint,
}

/// Opaque: a point cloud with optional labels.
pub struct BisegCloud {
    cloud: PointCloud,
}

/// Headline metric values.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BisegMetrics {
    pub m_cov: c_double,
    pub m_wcov: c_double,
    pub m_prec: c_double,
    pub m_rec: c_double,
    pub m_acc: c_double,
    pub m_iou: c_double,
    pub o_acc: c_double,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(err: Error) -> BisegStatus {
    let status = match err.exit_code() {
        2 => BisegStatus::Config,
        3 => BisegStatus::Data,
        4 => BisegStatus::Numeric,
        5 => BisegStatus::Tolerance,
        _ => BisegStatus::Internal,
    };
    let message = CString::new(err.to_string()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    status
}

fn invalid(detail: &str) -> BisegStatus {
    let message = CString::new(detail).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    BisegStatus::InvalidArgument
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn biseg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the last failure on this thread. Valid until the next failing
/// call on the same thread; never NULL.
#[no_mangle]
pub extern "C" fn biseg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn path_from(ptr: *const c_char) -> Result<String, BisegStatus> {
    if ptr.is_null() {
        return Err(invalid("path is NULL"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(|s| s.to_owned())
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn biseg_model_load(
    path: *const c_char,
    out: *mut *mut BisegModel,
) -> BisegStatus {
    if out.is_null() {
        return invalid("out handle is NULL");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Checkpoint::load(Path::new(&path)) {
        Ok(checkpoint) => {
            *out = Box::into_raw(Box::new(BisegModel { checkpoint }));
            BisegStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `model` must come from [`biseg_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn biseg_model_free(model: *mut BisegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Class count of a loaded model.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn biseg_model_num_classes(
    model: *const BisegModel,
    out: *mut usize,
) -> BisegStatus {
    if model.is_null() || out.is_null() {
        return invalid("NULL argument");
    }
    *out = (*model).checkpoint.model.cfg.n_c;
    BisegStatus::Ok
}

/// Load a cloud file (text or JSON by extension).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_load(
    path: *const c_char,
    out: *mut *mut BisegCloud,
) -> BisegStatus {
    if out.is_null() {
        return invalid("out handle is NULL");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let p = Path::new(&path);
    match load_cloud(p, CloudFormat::from_path(p)) {
        Ok(cloud) => {
            *out = Box::into_raw(Box::new(BisegCloud { cloud }));
            BisegStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Write a cloud file (text or JSON by extension).
///
/// # Safety
/// `cloud` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_save(
    cloud: *const BisegCloud,
    path: *const c_char,
) -> BisegStatus {
    if cloud.is_null() {
        return invalid("cloud is NULL");
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let p = Path::new(&path);
    match save_cloud(&(*cloud).cloud, p, CloudFormat::from_path(p)) {
        Ok(()) => BisegStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `cloud` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_free(cloud: *mut BisegCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Point count; 0 for a NULL handle.
///
/// # Safety
/// `cloud` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_len(cloud: *const BisegCloud) -> usize {
    if cloud.is_null() {
        0
    } else {
        (*cloud).cloud.len()
    }
}

/// Copy positions as x,y,z triples into `buf`.
///
/// # Safety
/// `buf` must hold at least `3 * biseg_cloud_len(cloud)` doubles; `len` is
/// the buffer length in doubles.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_positions(
    cloud: *const BisegCloud,
    buf: *mut c_double,
    len: usize,
) -> BisegStatus {
    if cloud.is_null() || buf.is_null() {
        return invalid("NULL argument");
    }
    let positions = &(*cloud).cloud.positions;
    if len < positions.len() * 3 {
        return invalid("buffer too small for positions");
    }
    for (i, p) in positions.iter().enumerate() {
        for (k, &v) in p.iter().enumerate() {
            *buf.add(i * 3 + k) = v;
        }
    }
    BisegStatus::Ok
}

/// Copy ground-truth labels into `sem`/`inst`. Fails with `Data` when the
/// cloud carries no labels.
///
/// # Safety
/// `sem` and `inst` must each hold at least `biseg_cloud_len(cloud)` u32;
/// `len` is each buffer's length in elements.
#[no_mangle]
pub unsafe extern "C" fn biseg_cloud_labels(
    cloud: *const BisegCloud,
    sem: *mut u32,
    inst: *mut u32,
    len: usize,
) -> BisegStatus {
    if cloud.is_null() || sem.is_null() || inst.is_null() {
        return invalid("NULL argument");
    }
    let c = &(*cloud).cloud;
    let (Some(s), Some(i)) = (&c.semantic, &c.instance) else {
        return fail(Error::Input {
            detail: "cloud carries no labels".into(),
        });
    };
    if len < c.len() {
        return invalid("buffer too small for labels");
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), sem, c.len());
    std::ptr::copy_nonoverlapping(i.as_ptr(), inst, c.len());
    BisegStatus::Ok
}

/// Run the full segmentation pipeline (blocks, forward, mean-shift, merge)
/// on a scene; writes per-point class and instance ids.
///
/// # Safety
/// `out_sem` and `out_inst` must each hold at least
/// `biseg_cloud_len(cloud)` u32; `len` is each buffer's length in elements.
#[no_mangle]
pub unsafe extern "C" fn biseg_segment(
    model: *const BisegModel,
    cloud: *const BisegCloud,
    out_sem: *mut u32,
    out_inst: *mut u32,
    len: usize,
    threads: usize,
) -> BisegStatus {
    if model.is_null() || cloud.is_null() || out_sem.is_null() || out_inst.is_null() {
        return invalid("NULL argument");
    }
    let ck = &(*model).checkpoint;
    let scene = &(*cloud).cloud;
    if len < scene.len() {
        return invalid("buffer too small for segmentation output");
    }
    match segment_scene(&ck.model, &ck.config, scene, threads.max(1)) {
        Ok(result) => {
            std::ptr::copy_nonoverlapping(result.semantic.as_ptr(), out_sem, scene.len());
            std::ptr::copy_nonoverlapping(result.instance.as_ptr(), out_inst, scene.len());
            BisegStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Evaluate predictions against ground truth over one scene.
///
/// # Safety
/// All four label arrays must hold `len` u32 values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn biseg_metrics_evaluate(
    gt_sem: *const u32,
    gt_inst: *const u32,
    pred_sem: *const u32,
    pred_inst: *const u32,
    len: usize,
    num_classes: usize,
    iou_threshold: c_double,
    out: *mut BisegMetrics,
) -> BisegStatus {
    if gt_sem.is_null()
        || gt_inst.is_null()
        || pred_sem.is_null()
        || pred_inst.is_null()
        || out.is_null()
    {
        return invalid("NULL argument");
    }
    if len == 0 {
        return invalid("len must be > 0");
    }
    let gt_sem = std::slice::from_raw_parts(gt_sem, len);
    let gt_inst = std::slice::from_raw_parts(gt_inst, len);
    let pred_sem = std::slice::from_raw_parts(pred_sem, len);
    let pred_inst = std::slice::from_raw_parts(pred_inst, len);
    let mut acc = MetricsAccumulator::new(num_classes, iou_threshold);
    if let Err(e) = acc.add_scene(gt_sem, gt_inst, pred_sem, pred_inst, 0) {
        return fail(e);
    }
    match acc.report() {
        Ok(r) => {
            *out = BisegMetrics {
                m_cov: r.m_cov,
                m_wcov: r.m_wcov,
                m_prec: r.m_prec,
                m_rec: r.m_rec,
                m_acc: r.m_acc,
                m_iou: r.m_iou,
                o_acc: r.o_acc,
            };
            BisegStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Binarized similarity-row masks for one reference point over a whole
/// scene. `threshold < 0` selects the default `1 / N`. Mask bytes are 0/1.
///
/// # Safety
/// `out_sem_mask` and `out_inst_mask` must each hold at least
/// `biseg_cloud_len(cloud)` bytes; `len` is each buffer's length in bytes.
#[no_mangle]
pub unsafe extern "C" fn biseg_similarity_masks(
    model: *const BisegModel,
    cloud: *const BisegCloud,
    point_index: usize,
    threshold: c_double,
    out_sem_mask: *mut u8,
    out_inst_mask: *mut u8,
    len: usize,
) -> BisegStatus {
    if model.is_null() || cloud.is_null() || out_sem_mask.is_null() || out_inst_mask.is_null() {
        return invalid("NULL argument");
    }
    let ck = &(*model).checkpoint;
    let scene = &(*cloud).cloud;
    if len < scene.len() {
        return invalid("buffer too small for masks");
    }
    let threshold = if threshold < 0.0 {
        None
    } else {
        Some(threshold)
    };
    match export_similarity_masks(&ck.model, scene, point_index, threshold) {
        Ok((sem_mask, inst_mask, _)) => {
            for (i, &m) in sem_mask.iter().enumerate() {
                *out_sem_mask.add(i) = u8::from(m);
            }
            for (i, &m) in inst_mask.iter().enumerate() {
                *out_inst_mask.add(i) = u8::from(m);
            }
            BisegStatus::Ok
        }
        Err(e) => fail(e),
    }
}
