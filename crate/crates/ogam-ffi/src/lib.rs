//! C ABI for the streaming GAM estimator: opaque stream handles, status
//! codes, and buffer-filling accessors so other languages can bind without
//! touching Rust types.
//!
//! Every fallible call returns an [`OgamStatus`]; the most recent failure
//! message is available through [`ogam_last_error`] until the next call on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ogam::config::RunConfig;
use ogam::{DataBlock, OnlineGam};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OgamStatus {
    Ok = 0,
    InvalidArgument = 1,
    RuntimeError = 2,
    IoError = 3,
}

/// Opaque streaming estimator handle.
pub struct OgamStream {
    gam: OnlineGam,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &ogam::OgamError) -> OgamStatus {
    match err {
        ogam::OgamError::Io(_) | ogam::OgamError::Snapshot(_) => OgamStatus::IoError,
        ogam::OgamError::Config(_)
        | ogam::OgamError::InvalidInput(_)
        | ogam::OgamError::InvalidBandwidth(_)
        | ogam::OgamError::UnsupportedFamily(_)
        | ogam::OgamError::Parse { .. }
        | ogam::OgamError::ShapeMismatch(_) => OgamStatus::InvalidArgument,
    }
}

fn guarded<F: FnOnce() -> OgamStatus>(f: F) -> OgamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            OgamStatus::RuntimeError
        }
    }
}

unsafe fn cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, OgamStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(OgamStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        OgamStatus::InvalidArgument
    })
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn ogam_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a stream from a configuration string (same flat key-value syntax
/// as the config file). On success writes the handle to `out`.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_new(
    config_toml: *const c_char,
    out: *mut *mut OgamStream,
) -> OgamStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return OgamStatus::InvalidArgument;
        }
        *out = ptr::null_mut();
        let text = match cstr(config_toml, "config") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match RunConfig::parse(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        match cfg.build_gam() {
            Ok(gam) => {
                *out = Box::into_raw(Box::new(OgamStream { gam }));
                OgamStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Restore a stream from a snapshot file written by
/// [`ogam_stream_save_snapshot`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_from_snapshot(
    path: *const c_char,
    out: *mut *mut OgamStream,
) -> OgamStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return OgamStatus::InvalidArgument;
        }
        *out = ptr::null_mut();
        let path = match cstr(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match OnlineGam::load_snapshot(Path::new(path)) {
            Ok(gam) => {
                *out = Box::into_raw(Box::new(OgamStream { gam }));
                OgamStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Push one data block: `x` holds `n * d` covariates row-major in [0,1],
/// `y` holds `n` responses valid for the configured family.
///
/// # Safety
/// `stream` must come from a constructor; `x` and `y` must point to at
/// least `n * d` and `n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_push_block(
    stream: *mut OgamStream,
    x: *const f64,
    y: *const f64,
    n: usize,
) -> OgamStatus {
    guarded(|| {
        let Some(stream) = stream.as_mut() else {
            set_error("stream handle is null");
            return OgamStatus::InvalidArgument;
        };
        if x.is_null() || y.is_null() || n == 0 {
            set_error("block buffers are null or empty");
            return OgamStatus::InvalidArgument;
        }
        let d = stream.gam.grid().d;
        let xv = std::slice::from_raw_parts(x, n * d).to_vec();
        let yv = std::slice::from_raw_parts(y, n).to_vec();
        let block = match DataBlock::new(stream.gam.k() + 1, d, xv, yv) {
            Ok(b) => b,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        match stream.gam.process_block(&block) {
            Ok(_) => OgamStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Number of processed blocks.
///
/// # Safety
/// `stream` must come from a constructor.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_blocks(stream: *const OgamStream) -> usize {
    stream.as_ref().map_or(0, |s| s.gam.k())
}

/// Total observations seen.
///
/// # Safety
/// `stream` must come from a constructor.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_observations(stream: *const OgamStream) -> usize {
    stream.as_ref().map_or(0, |s| s.gam.n_total())
}

/// Covariate dimension d.
///
/// # Safety
/// `stream` must come from a constructor.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_dimensions(stream: *const OgamStream) -> usize {
    stream.as_ref().map_or(0, |s| s.gam.grid().d)
}

/// Nodes per axis of the evaluation grid.
///
/// # Safety
/// `stream` must come from a constructor.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_grid_points(stream: *const OgamStream) -> usize {
    stream.as_ref().map_or(0, |s| s.gam.grid().m)
}

/// Current intercept estimate.
///
/// # Safety
/// `stream` must come from a constructor.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_intercept(stream: *const OgamStream) -> f64 {
    stream.as_ref().map_or(f64::NAN, |s| s.gam.main.estimate().intercept)
}

/// Copy component `j` (0-based) into caller buffers of length
/// `ogam_stream_grid_points`: values and h-scaled derivative samples.
/// Either buffer may be null to skip it.
///
/// # Safety
/// `stream` must come from a constructor; non-null buffers must hold `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_component(
    stream: *const OgamStream,
    j: usize,
    values: *mut f64,
    derivatives: *mut f64,
    len: usize,
) -> OgamStatus {
    guarded(|| {
        let Some(stream) = stream.as_ref() else {
            set_error("stream handle is null");
            return OgamStatus::InvalidArgument;
        };
        let grid = stream.gam.grid();
        if j >= grid.d {
            set_error(&format!("component {j} out of range for d={}", grid.d));
            return OgamStatus::InvalidArgument;
        }
        if len != grid.m {
            set_error(&format!(
                "buffer length {len} does not match grid ({})",
                grid.m
            ));
            return OgamStatus::InvalidArgument;
        }
        let est = stream.gam.main.estimate();
        if !values.is_null() {
            std::slice::from_raw_parts_mut(values, len).copy_from_slice(&est.values[j]);
        }
        if !derivatives.is_null() {
            let out = std::slice::from_raw_parts_mut(derivatives, len);
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = est.scaled_derivative(j, i);
            }
        }
        OgamStatus::Ok
    })
}

/// Copy the bandwidth the current estimate was produced at into `h`
/// (length = dimensions).
///
/// # Safety
/// `stream` must come from a constructor; `h` must hold `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_bandwidth(
    stream: *const OgamStream,
    h: *mut f64,
    len: usize,
) -> OgamStatus {
    guarded(|| {
        let Some(stream) = stream.as_ref() else {
            set_error("stream handle is null");
            return OgamStatus::InvalidArgument;
        };
        let grid = stream.gam.grid();
        if h.is_null() || len != grid.d {
            set_error("bandwidth buffer missing or wrong length");
            return OgamStatus::InvalidArgument;
        }
        let est = stream.gam.main.estimate();
        std::slice::from_raw_parts_mut(h, len).copy_from_slice(&est.bandwidth);
        OgamStatus::Ok
    })
}

/// Persist the stream to a snapshot file.
///
/// # Safety
/// `stream` must come from a constructor; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_save_snapshot(
    stream: *const OgamStream,
    path: *const c_char,
) -> OgamStatus {
    guarded(|| {
        let Some(stream) = stream.as_ref() else {
            set_error("stream handle is null");
            return OgamStatus::InvalidArgument;
        };
        let path = match cstr(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match stream.gam.save_snapshot(Path::new(path)) {
            Ok(()) => OgamStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Destroy a stream handle. Passing null is a no-op.
///
/// # Safety
/// `stream` must come from a constructor and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ogam_stream_free(stream: *mut OgamStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

#[cfg(test)]
#[allow(clippy::useless_vec)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
family = "gaussian-identity"
d = 2
grid_m = 11
l = 3
bandwidth_mode = "fixed"
fixed_bandwidth = [0.2, 0.2]
"#;

    fn sample_block(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut s = seed;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a = next();
            let b = next();
            x.push(a);
            x.push(b);
            y.push(1.0 + (3.0 * a).sin() - 0.5 * b + 0.1 * (next() - 0.5));
        }
        (x, y)
    }

    #[test]
    fn ffi_round_trip_matches_library_fit() {
        let cfg = CString::new(CONFIG).unwrap();
        let mut handle: *mut OgamStream = ptr::null_mut();
        let status = unsafe { ogam_stream_new(cfg.as_ptr(), &mut handle) };
        assert_eq!(status, OgamStatus::Ok);
        assert!(!handle.is_null());

        // drive the same data through the library directly
        let mut lib = RunConfig::parse(CONFIG).unwrap().build_gam().unwrap();
        for k in 0..3 {
            let (x, y) = sample_block(100 + k, 40);
            let status =
                unsafe { ogam_stream_push_block(handle, x.as_ptr(), y.as_ptr(), y.len()) };
            assert_eq!(status, OgamStatus::Ok);
            let block = DataBlock::new(k as usize + 1, 2, x, y).unwrap();
            lib.process_block(&block).unwrap();
        }
        unsafe {
            assert_eq!(ogam_stream_blocks(handle), 3);
            assert_eq!(ogam_stream_observations(handle), 120);
            assert_eq!(ogam_stream_dimensions(handle), 2);
            let m = ogam_stream_grid_points(handle);
            assert_eq!(m, 11);
            let expect = lib.main.estimate();
            assert_eq!(ogam_stream_intercept(handle), expect.intercept);
            let mut values = vec![0.0; m];
            let mut derivs = vec![0.0; m];
            for j in 0..2 {
                let status = ogam_stream_component(
                    handle,
                    j,
                    values.as_mut_ptr(),
                    derivs.as_mut_ptr(),
                    m,
                );
                assert_eq!(status, OgamStatus::Ok);
                assert_eq!(values, expect.values[j]);
                for (i, dv) in derivs.iter().enumerate() {
                    assert_eq!(*dv, expect.scaled_derivative(j, i));
                }
            }
            let mut h = vec![0.0; 2];
            assert_eq!(
                ogam_stream_bandwidth(handle, h.as_mut_ptr(), 2),
                OgamStatus::Ok
            );
            assert_eq!(h, vec![0.2, 0.2]);
            ogam_stream_free(handle);
        }
    }

    #[test]
    fn ffi_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let snap = dir.path().join("s.json");
        let snap_c = CString::new(snap.to_str().unwrap()).unwrap();
        let cfg = CString::new(CONFIG).unwrap();
        let mut handle: *mut OgamStream = ptr::null_mut();
        unsafe {
            assert_eq!(ogam_stream_new(cfg.as_ptr(), &mut handle), OgamStatus::Ok);
            let (x, y) = sample_block(7, 30);
            assert_eq!(
                ogam_stream_push_block(handle, x.as_ptr(), y.as_ptr(), y.len()),
                OgamStatus::Ok
            );
            assert_eq!(
                ogam_stream_save_snapshot(handle, snap_c.as_ptr()),
                OgamStatus::Ok
            );
            let mut restored: *mut OgamStream = ptr::null_mut();
            assert_eq!(
                ogam_stream_from_snapshot(snap_c.as_ptr(), &mut restored),
                OgamStatus::Ok
            );
            assert_eq!(
                ogam_stream_intercept(restored),
                ogam_stream_intercept(handle)
            );
            ogam_stream_free(handle);
            ogam_stream_free(restored);
        }
    }

    #[test]
    fn ffi_error_paths_set_messages() {
        unsafe {
            let mut handle: *mut OgamStream = ptr::null_mut();
            let bad = CString::new("family = \"gamma\"").unwrap();
            assert_eq!(
                ogam_stream_new(bad.as_ptr(), &mut handle),
                OgamStatus::InvalidArgument
            );
            assert!(handle.is_null());
            let msg = CStr::from_ptr(ogam_last_error())
                .to_string_lossy()
                .into_owned();
            assert!(msg.contains("gamma"), "{msg}");

            assert_eq!(
                ogam_stream_new(ptr::null(), &mut handle),
                OgamStatus::InvalidArgument
            );
            assert_eq!(
                ogam_stream_push_block(ptr::null_mut(), ptr::null(), ptr::null(), 0),
                OgamStatus::InvalidArgument
            );
            // covariate outside [0,1] is rejected through the same validation
            let cfg = CString::new(CONFIG).unwrap();
            assert_eq!(ogam_stream_new(cfg.as_ptr(), &mut handle), OgamStatus::Ok);
            let x = vec![0.5, 1.5, 0.5, 0.5];
            let y = vec![1.0, 1.0];
            assert_eq!(
                ogam_stream_push_block(handle, x.as_ptr(), y.as_ptr(), 2),
                OgamStatus::InvalidArgument
            );
            let msg = CStr::from_ptr(ogam_last_error())
                .to_string_lossy()
                .into_owned();
            assert!(msg.contains("outside"), "{msg}");
            ogam_stream_free(handle);
        }
    }
}
