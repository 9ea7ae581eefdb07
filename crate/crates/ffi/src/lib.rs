//! C ABI over `neoinr`: load checkpoints, evaluate the network, and run
//! latent inversion + prediction on volumes.
//!
//! Every fallible call returns a [`NeoinrStatus`]; on failure the message is
//! kept per thread and can be read with [`neoinr_last_error`]. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use neoinr::checkpoint::load_checkpoint;
use neoinr::inversion::{predict_development, InversionConfig, PixelPolicy};
use neoinr::metrics::psnr;
use neoinr::network::InrNetwork;
use neoinr::training::LatentTable;
use neoinr::volume::{load_volume, normalize_time, save_volume, VolumeImage};
use neoinr::Error;

/// Result code of every fallible call. Codes 2–4 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeoinrStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// A trained network with its latent table, if the checkpoint had one.
pub struct NeoinrModel {
    net: InrNetwork,
    latents: Option<LatentTable>,
}

/// An image or volume with spacing.
pub struct NeoinrVolume(VolumeImage);

/// Latent-inversion settings. `pixel_fraction <= 0` means every voxel.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NeoinrInversionParams {
    pub steps: u64,
    pub lr: f64,
    pub pixel_fraction: f64,
    pub fg_bg_ratio: f64,
    pub micro_batch_size: usize,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn fail(e: Error) -> NeoinrStatus {
    let status = match e.exit_code() {
        2 => NeoinrStatus::Config,
        4 => NeoinrStatus::Numeric,
        _ => NeoinrStatus::Data,
    };
    set_error(e.to_string());
    status
}

fn invalid(msg: &str) -> NeoinrStatus {
    set_error(msg);
    NeoinrStatus::InvalidArgument
}

fn guard(f: impl FnOnce() -> NeoinrStatus) -> NeoinrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == NeoinrStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => {
            set_error("internal panic");
            NeoinrStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return NeoinrStatus::NullPointer;
        })+
    };
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, NeoinrStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn neoinr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full length
/// including the terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn neoinr_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Defaults matching the desk-scale evaluation.
#[no_mangle]
pub extern "C" fn neoinr_inversion_params_default() -> NeoinrInversionParams {
    let c = InversionConfig::desk();
    let (pixel_fraction, fg_bg_ratio) = match c.pixels {
        PixelPolicy::All => (0.0, 0.9),
        PixelPolicy::Sampled { fraction, fg_bg_ratio } => (fraction, fg_bg_ratio),
    };
    NeoinrInversionParams {
        steps: c.steps,
        lr: c.lr,
        pixel_fraction,
        fg_bg_ratio,
        micro_batch_size: c.micro_batch_size,
        seed: c.seed,
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_load(path: *const c_char, out: *mut *mut NeoinrModel) -> NeoinrStatus {
    non_null!(path, out);
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok(ck) => {
                *out = Box::into_raw(Box::new(NeoinrModel {
                    net: ck.network,
                    latents: ck.latents,
                }));
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`neoinr_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_free(model: *mut NeoinrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Latent dimension λ, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_latent_dim(model: *const NeoinrModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.config().latent_dim)
}

/// Spatial dimensionality (2 or 3), or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_spatial_dims(model: *const NeoinrModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.config().spatial_dims)
}

/// Trainable network parameters, latents excluded.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_param_count(model: *const NeoinrModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.param_count())
}

/// Number of latent-table entries (0 when the checkpoint has none).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_latent_count(model: *const NeoinrModel) -> usize {
    model.as_ref().and_then(|m| m.latents.as_ref()).map_or(0, |t| t.len())
}

/// Mean of the latent-table entries into `out[0..len]`, `len` = λ.
///
/// # Safety
/// `model` must be a live handle; `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_average_latent(model: *const NeoinrModel, out: *mut f32, len: usize) -> NeoinrStatus {
    non_null!(model, out);
    guard(|| {
        let m = &*model;
        if len != m.net.config().latent_dim {
            return invalid("output length must equal the latent dimension");
        }
        let Some(table) = m.latents.as_ref() else {
            set_error("checkpoint has no latent table");
            return NeoinrStatus::Data;
        };
        match neoinr::atlas::average_latent(table) {
            Ok(v) => {
                ptr::copy_nonoverlapping(v.as_ptr(), out, len);
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Evaluate the network at `n_points` coordinates (row-major, `d` values
/// each, in [-1, 1]) at age `pma_weeks`. Writes `n_points` values.
///
/// # Safety
/// `coords` holds `n_points * d` floats, `latent` holds `latent_len`
/// floats, `out` holds `n_points` floats.
#[no_mangle]
pub unsafe extern "C" fn neoinr_model_forward(
    model: *const NeoinrModel,
    coords: *const f32,
    n_points: usize,
    pma_weeks: f64,
    latent: *const f32,
    latent_len: usize,
    out: *mut f32,
) -> NeoinrStatus {
    non_null!(model, coords, latent, out);
    guard(|| {
        let m = &*model;
        let d = m.net.config().spatial_dims;
        if latent_len != m.net.config().latent_dim {
            return invalid("latent length must equal the latent dimension");
        }
        let t = match normalize_time(pma_weeks) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        let coords = std::slice::from_raw_parts(coords, n_points * d);
        let latent = std::slice::from_raw_parts(latent, latent_len);
        match m.net.forward_batch(coords, t, latent) {
            Ok(v) => {
                ptr::copy_nonoverlapping(v.as_ptr(), out, n_points);
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Build a volume from `ndim` sizes, `ndim` spacings (cm) and
/// `prod(shape)` intensities in row-major order.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_new(
    shape: *const usize,
    spacing: *const f32,
    ndim: usize,
    data: *const f32,
    out: *mut *mut NeoinrVolume,
) -> NeoinrStatus {
    non_null!(shape, spacing, data, out);
    guard(|| {
        let shape = std::slice::from_raw_parts(shape, ndim).to_vec();
        let spacing = std::slice::from_raw_parts(spacing, ndim).to_vec();
        let Some(n) = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s)) else {
            return invalid("volume size overflows");
        };
        let data = std::slice::from_raw_parts(data, n).to_vec();
        match VolumeImage::new(shape, spacing, data) {
            Ok(v) => {
                *out = Box::into_raw(Box::new(NeoinrVolume(v)));
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Read a `.ndv` volume.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_load(path: *const c_char, out: *mut *mut NeoinrVolume) -> NeoinrStatus {
    non_null!(path, out);
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_volume(path) {
            Ok(v) => {
                *out = Box::into_raw(Box::new(NeoinrVolume(v)));
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write a `.ndv` volume.
///
/// # Safety
/// `volume` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_save(volume: *const NeoinrVolume, path: *const c_char) -> NeoinrStatus {
    non_null!(volume, path);
    guard(|| {
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match save_volume(&(*volume).0, path) {
            Ok(()) => NeoinrStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `volume` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_free(volume: *mut NeoinrVolume) {
    if !volume.is_null() {
        drop(Box::from_raw(volume));
    }
}

/// Number of voxels, or 0 for a null handle.
///
/// # Safety
/// `volume` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_len(volume: *const NeoinrVolume) -> usize {
    volume.as_ref().map_or(0, |v| v.0.len())
}

/// Number of axes, or 0 for a null handle.
///
/// # Safety
/// `volume` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_ndim(volume: *const NeoinrVolume) -> usize {
    volume.as_ref().map_or(0, |v| v.0.ndim())
}

/// Copy the axis sizes into `out[0..cap]`.
///
/// # Safety
/// `volume` must be a live handle; `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_shape(volume: *const NeoinrVolume, out: *mut usize, cap: usize) -> NeoinrStatus {
    non_null!(volume, out);
    let shape = (*volume).0.shape();
    if cap < shape.len() {
        return invalid("shape buffer too small");
    }
    ptr::copy_nonoverlapping(shape.as_ptr(), out, shape.len());
    NeoinrStatus::Ok
}

/// Copy the intensities into `out[0..len]`; `len` must equal the voxel count.
///
/// # Safety
/// `volume` must be a live handle; `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn neoinr_volume_data(volume: *const NeoinrVolume, out: *mut f32, len: usize) -> NeoinrStatus {
    non_null!(volume, out);
    let data = (*volume).0.data();
    if len != data.len() {
        return invalid("data length must equal the voxel count");
    }
    ptr::copy_nonoverlapping(data.as_ptr(), out, len);
    NeoinrStatus::Ok
}

/// Invert `input` at `t1_weeks` with frozen weights, then render the found
/// latent at `t1_weeks` (reconstruction) and `t2_weeks` (prediction).
/// `params` may be null for the defaults.
///
/// # Safety
/// Handles must be live; `params` null or valid; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn neoinr_predict(
    model: *const NeoinrModel,
    input: *const NeoinrVolume,
    t1_weeks: f64,
    t2_weeks: f64,
    params: *const NeoinrInversionParams,
    out_reconstruction: *mut *mut NeoinrVolume,
    out_prediction: *mut *mut NeoinrVolume,
) -> NeoinrStatus {
    non_null!(model, input, out_reconstruction, out_prediction);
    guard(|| {
        let p = params.as_ref().copied().unwrap_or_else(|| neoinr_inversion_params_default());
        let config = InversionConfig {
            steps: p.steps,
            lr: p.lr,
            pixels: if p.pixel_fraction > 0.0 {
                PixelPolicy::Sampled {
                    fraction: p.pixel_fraction,
                    fg_bg_ratio: p.fg_bg_ratio,
                }
            } else {
                PixelPolicy::All
            },
            micro_batch_size: p.micro_batch_size,
            seed: p.seed,
            ..InversionConfig::desk()
        };
        let run = || -> neoinr::Result<_> {
            config.validate()?;
            predict_development(
                &(*model).net,
                &(*input).0,
                normalize_time(t1_weeks)?,
                normalize_time(t2_weeks)?,
                &config,
            )
        };
        match run() {
            Ok(dev) => {
                *out_reconstruction = Box::into_raw(Box::new(NeoinrVolume(dev.reconstruction)));
                *out_prediction = Box::into_raw(Box::new(NeoinrVolume(dev.prediction)));
                NeoinrStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Peak signal-to-noise ratio (dB, peak 1) between two volumes of equal shape.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn neoinr_psnr(a: *const NeoinrVolume, b: *const NeoinrVolume, out: *mut f64) -> NeoinrStatus {
    non_null!(a, b, out);
    guard(|| match psnr(&(*a).0, &(*b).0) {
        Ok(v) => {
            *out = v;
            NeoinrStatus::Ok
        }
        Err(e) => fail(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_buffer_truncates_and_terminates() {
        set_error("abcdef");
        let mut buf = [1 as c_char; 4];
        let n = unsafe { neoinr_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 7);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
        assert_eq!(unsafe { neoinr_last_error(ptr::null_mut(), 0) }, 7);
    }

    #[test]
    fn status_codes_follow_error_kinds() {
        assert_eq!(fail(Error::Config("x".into())), NeoinrStatus::Config);
        assert_eq!(fail(Error::NonFinite("x".into())), NeoinrStatus::Numeric);
        assert_eq!(fail(Error::EmptyMask), NeoinrStatus::Data);
    }

    #[test]
    fn panics_are_contained() {
        assert_eq!(guard(|| panic!("boom")), NeoinrStatus::Panic);
    }
}
