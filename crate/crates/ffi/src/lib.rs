//! C ABI over the `zsmstm` library.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns a [`ZsmStatus`]; on
//! failure, [`zsm_last_error`] describes the problem for the calling thread.
//! Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use zsmstm::checkpoint::Checkpoint;
use zsmstm::data::{read_interval, Sample};
use zsmstm::export::{map_to_body25, BODY25_JOINTS};
use zsmstm::inference::Engine;
use zsmstm::metrics::{distance_split, MetricSet};
use zsmstm::model::StyleEmbedding;
use zsmstm::tensor::Matrix;
use zsmstm::{Error, ErrorClass};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A loaded checkpoint.
pub struct ZsmCheckpoint {
    inner: Checkpoint,
}

/// One word-aligned interval (raw data units).
pub struct ZsmSample {
    inner: Sample,
}

/// A style embedding.
pub struct ZsmStyle {
    inner: StyleEmbedding,
}

/// A generated pose sequence, row-major `frames × (2·joints)`.
pub struct ZsmPose {
    inner: Matrix,
}

/// Expressivity metrics of one sequence.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZsmMetrics {
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub wrist_velocity: f64,
    pub wrist_acceleration: f64,
    pub wrist_jerk: f64,
    pub bbox_perimeter: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ZsmStatus {
    match e.class() {
        ErrorClass::Config => ZsmStatus::Config,
        ErrorClass::Data => ZsmStatus::Data,
        ErrorClass::Numeric => ZsmStatus::Numeric,
    }
}

struct Fail(ZsmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ZsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ZsmStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ZsmStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ZsmStatus::NullArgument, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(ZsmStatus::InvalidUtf8, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn zsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zsm_checkpoint_load(path: *const c_char, out: *mut *mut ZsmCheckpoint) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Checkpoint::load(&path_arg(path, "path")?)?;
        inner.model()?;
        put(out, ZsmCheckpoint { inner });
        Ok(())
    })
}

/// # Safety
/// `ckpt` must come from `zsm_checkpoint_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zsm_checkpoint_free(ckpt: *mut ZsmCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Joints, frames and style width of the checkpoint's model.
///
/// # Safety
/// `ckpt` must be a live handle; any of the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn zsm_checkpoint_shape(
    ckpt: *const ZsmCheckpoint,
    joints: *mut usize,
    frames: *mut usize,
    style_dim: *mut usize,
) -> ZsmStatus {
    guard(|| {
        let c = &obj(ckpt, "ckpt")?.inner.config;
        if let Some(j) = joints.as_mut() {
            *j = c.joints;
        }
        if let Some(f) = frames.as_mut() {
            *f = c.frames;
        }
        if let Some(d) = style_dim.as_mut() {
            *d = c.d_style();
        }
        Ok(())
    })
}

/// Reads a binary or CSV interval file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zsm_sample_load(path: *const c_char, out: *mut *mut ZsmSample) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = read_interval(&path_arg(path, "path")?)?;
        inner.validate(zsmstm::data::sample::MIN_MEL_FRAMES)?;
        put(out, ZsmSample { inner });
        Ok(())
    })
}

/// # Safety
/// `sample` must come from `zsm_sample_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zsm_sample_free(sample: *mut ZsmSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Mean style embedding over `count` samples. The checkpoint is not modified.
///
/// # Safety
/// `samples` must point to `count` live sample handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zsm_extract_style(
    ckpt: *const ZsmCheckpoint,
    samples: *const *const ZsmSample,
    count: usize,
    out: *mut *mut ZsmStyle,
) -> ZsmStatus {
    guard(|| {
        let ckpt = obj(ckpt, "ckpt")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if samples.is_null() && count > 0 {
            return Err(null("samples"));
        }
        let handles = if count == 0 { &[][..] } else { std::slice::from_raw_parts(samples, count) };
        let owned = handles
            .iter()
            .map(|&s| obj(s, "sample").map(|s| s.inner.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = Engine::new(&ckpt.inner)?.extract_style(&owned)?;
        put(out, ZsmStyle { inner });
        Ok(())
    })
}

/// Builds a style from `len` raw values (e.g. read from a style bank).
///
/// # Safety
/// `values` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zsm_style_from_values(values: *const f64, len: usize, out: *mut *mut ZsmStyle) -> ZsmStatus {
    guard(|| {
        if out.is_null() || (values.is_null() && len > 0) {
            return Err(null("values or out"));
        }
        let v = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(values, len).to_vec() };
        put(out, ZsmStyle { inner: StyleEmbedding(v) });
        Ok(())
    })
}

/// # Safety
/// `style` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_style_dim(style: *const ZsmStyle) -> usize {
    style.as_ref().map_or(0, |s| s.inner.dim())
}

/// Copies the embedding into `buf` (`cap` doubles).
///
/// # Safety
/// `style` must be a live handle and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn zsm_style_values(style: *const ZsmStyle, buf: *mut f64, cap: usize) -> ZsmStatus {
    guard(|| {
        let s = &obj(style, "style")?.inner.0;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < s.len() {
            return Err(Fail(ZsmStatus::BufferTooSmall, format!("need {} values, buffer holds {cap}", s.len())));
        }
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf, s.len());
        Ok(())
    })
}

/// # Safety
/// `style` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zsm_style_free(style: *mut ZsmStyle) {
    if !style.is_null() {
        drop(Box::from_raw(style));
    }
}

/// Generates `source`'s content in `style`, in data units.
///
/// # Safety
/// All handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zsm_transfer(
    ckpt: *const ZsmCheckpoint,
    source: *const ZsmSample,
    style: *const ZsmStyle,
    out: *mut *mut ZsmPose,
) -> ZsmStatus {
    guard(|| {
        let ckpt = obj(ckpt, "ckpt")?;
        let source = obj(source, "source")?;
        let style = obj(style, "style")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = Engine::new(&ckpt.inner)?.transfer(&source.inner, &style.inner)?;
        put(out, ZsmPose { inner });
        Ok(())
    })
}

/// # Safety
/// `pose` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_pose_frames(pose: *const ZsmPose) -> usize {
    pose.as_ref().map_or(0, |p| p.inner.rows())
}

/// Values per frame (`2·joints`).
///
/// # Safety
/// `pose` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_pose_cols(pose: *const ZsmPose) -> usize {
    pose.as_ref().map_or(0, |p| p.inner.cols())
}

/// Row-major values, valid until the handle is freed.
///
/// # Safety
/// `pose` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_pose_data(pose: *const ZsmPose) -> *const f64 {
    pose.as_ref().map_or(std::ptr::null(), |p| p.inner.as_slice().as_ptr())
}

/// # Safety
/// `pose` must be a live handle and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zsm_pose_free(pose: *mut ZsmPose) {
    if !pose.is_null() {
        drop(Box::from_raw(pose));
    }
}

/// Metrics of a row-major `frames × cols` pose; `wrists` lists `n_wrists` joint indices.
///
/// # Safety
/// `values` must hold `frames·cols` doubles, `wrists` `n_wrists` indices; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zsm_metrics(
    values: *const f64,
    frames: usize,
    cols: usize,
    fps: f64,
    wrists: *const usize,
    n_wrists: usize,
    out: *mut ZsmMetrics,
) -> ZsmStatus {
    guard(|| {
        if values.is_null() || out.is_null() || (wrists.is_null() && n_wrists > 0) {
            return Err(null("values, wrists or out"));
        }
        if cols % 2 != 0 {
            return Err(Fail(ZsmStatus::Data, format!("{cols} columns is not an (x, y) layout")));
        }
        let pose = Matrix::from_vec(frames, cols, std::slice::from_raw_parts(values, frames * cols).to_vec());
        let w = if n_wrists == 0 { &[][..] } else { std::slice::from_raw_parts(wrists, n_wrists) };
        let m = MetricSet::compute(&pose, fps, w)?;
        *out = ZsmMetrics {
            velocity: m.velocity,
            acceleration: m.acceleration,
            jerk: m.jerk,
            wrist_velocity: m.wrist_velocity,
            wrist_acceleration: m.wrist_acceleration,
            wrist_jerk: m.wrist_jerk,
            bbox_perimeter: m.bbox_perimeter,
        };
        Ok(())
    })
}

/// Percent shares of `|source − target|` and `|model − target|`.
///
/// # Safety
/// `source_pct` and `model_pct` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn zsm_distance_split(
    source: f64,
    target: f64,
    model: f64,
    source_pct: *mut f64,
    model_pct: *mut f64,
) -> ZsmStatus {
    guard(|| {
        if source_pct.is_null() || model_pct.is_null() {
            return Err(null("output"));
        }
        let r = distance_split(source, target, model);
        *source_pct = r.source_pct;
        *model_pct = r.model_pct;
        Ok(())
    })
}

/// Maps one `2·n_joints` frame into 75 BODY25 values `(x, y, c)`.
///
/// # Safety
/// `frame` must hold `2·n_joints` doubles, `joint_map` `n_joints` indices, `out` 75 doubles.
#[no_mangle]
pub unsafe extern "C" fn zsm_map_to_body25(
    frame: *const f64,
    joint_map: *const usize,
    n_joints: usize,
    out: *mut f64,
) -> ZsmStatus {
    guard(|| {
        if frame.is_null() || joint_map.is_null() || out.is_null() {
            return Err(null("frame, joint_map or out"));
        }
        let f = std::slice::from_raw_parts(frame, 2 * n_joints);
        let map = std::slice::from_raw_parts(joint_map, n_joints);
        let b = map_to_body25(f, map)?;
        std::ptr::copy_nonoverlapping(b.flat().as_ptr(), out, 3 * BODY25_JOINTS);
        Ok(())
    })
}
