//! C ABI over `strength-init`.
//!
//! Conventions:
//! - every fallible function returns an [`SiStatus`]; results go through out-pointers;
//! - matrices are opaque [`SiMatrix`] handles released with [`si_matrix_free`];
//! - enum-valued parameters are plain `uint32_t` holding an `SiInitMethod`,
//!   `SiPassMode`, `SiSide` or `SiSearchMode` value and are range-checked;
//! - on failure [`si_last_error`] returns a message for the calling thread.
//!
//! Streams follow the library: weight sampling uses the weights stream of
//! `(seed, layer, rep)`, rewiring the rewire stream of the same triple.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use strength_init::{
    conv_to_2d, init, load_matrix, pa_rewire, pa_rewire_conv, save_matrix, strength_stats,
    variance_search, ConvTensor, Error, InitMethod, InitSpec, PassMode, RngStream, SearchMode,
    Side, StreamPurpose, WeightMatrix,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NonFinite = 5,
    Panic = 6,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiInitMethod {
    GlorotUniform = 0,
    GlorotNormal = 1,
    KaimingUniform = 2,
    KaimingNormal = 3,
    TruncatedNormal = 4,
    Orthogonal = 5,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiPassMode {
    InputOnly = 0,
    Bidirectional = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiSide {
    Input = 0,
    Output = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiSearchMode {
    Min = 0,
    Max = 1,
}

/// Population moments of a strength vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SiStrengthStats {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub fourth_central_moment: f64,
    pub max_abs: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Opaque weight matrix.
pub struct SiMatrix {
    inner: WeightMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SiStatus {
    match err {
        Error::Io { .. } => SiStatus::Io,
        Error::NonFinite { .. } => SiStatus::NonFinite,
        Error::MalformedHeader(_)
        | Error::PayloadMismatch { .. }
        | Error::Csv { .. }
        | Error::BadMagic { .. }
        | Error::CountMismatch { .. }
        | Error::TruncatedIdx(_)
        | Error::Json(_) => SiStatus::Format,
        _ => SiStatus::InvalidArgument,
    }
}

struct Fail(SiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SiStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SiStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SiStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            SiStatus::Panic
        }
    }
}

fn method_of(v: u32) -> Result<InitMethod, Fail> {
    Ok(match v {
        0 => InitMethod::GlorotUniform,
        1 => InitMethod::GlorotNormal,
        2 => InitMethod::KaimingUniform,
        3 => InitMethod::KaimingNormal,
        4 => InitMethod::TruncatedNormal,
        5 => InitMethod::Orthogonal,
        _ => return Err(invalid(format!("unknown init method {v}"))),
    })
}

fn pass_of(v: u32) -> Result<PassMode, Fail> {
    match v {
        0 => Ok(PassMode::InputOnly),
        1 => Ok(PassMode::Bidirectional),
        _ => Err(invalid(format!("unknown pass mode {v}"))),
    }
}

fn side_of(v: u32) -> Result<Side, Fail> {
    match v {
        0 => Ok(Side::Input),
        1 => Ok(Side::Output),
        _ => Err(invalid(format!("unknown side {v}"))),
    }
}

fn search_of(v: u32) -> Result<SearchMode, Fail> {
    match v {
        0 => Ok(SearchMode::Min),
        1 => Ok(SearchMode::Max),
        _ => Err(invalid(format!("unknown search mode {v}"))),
    }
}

unsafe fn matrix_ref<'a>(m: *const SiMatrix) -> Result<&'a WeightMatrix, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("matrix"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn put(out: *mut *mut SiMatrix, m: WeightMatrix) {
    *out = Box::into_raw(Box::new(SiMatrix { inner: m }));
}

fn check_out(out: *mut *mut SiMatrix) -> Result<(), Fail> {
    if out.is_null() {
        Err(null("out"))
    } else {
        Ok(())
    }
}

/// Message of the calling thread's most recent failure, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn si_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn si_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut SiMatrix,
) -> SiStatus {
    guard(|| {
        check_out(out)?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| invalid("rows * cols overflows"))?;
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        put(out, WeightMatrix::new(rows, cols, values)?);
        Ok(())
    })
}

/// Releases a matrix. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_free(m: *mut SiMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Row count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_rows(m: *const SiMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// Column count, or 0 for null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_cols(m: *const SiMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Copies the row-major payload into `dst`, which holds `len` doubles.
/// `len` must equal `rows * cols`.
///
/// # Safety
/// `m` must be a live handle and `dst` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_copy_data(
    m: *const SiMatrix,
    dst: *mut f64,
    len: usize,
) -> SiStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        if len != m.data().len() {
            return Err(invalid(format!(
                "buffer holds {len} values but the matrix has {}",
                m.data().len()
            )));
        }
        ptr::copy_nonoverlapping(m.data().as_ptr(), dst, len);
        Ok(())
    })
}

/// Reads a WMAT file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_load(path: *const c_char, out: *mut *mut SiMatrix) -> SiStatus {
    guard(|| {
        check_out(out)?;
        let path = path_arg(path)?;
        put(out, load_matrix(path)?);
        Ok(())
    })
}

/// Writes a WMAT file.
///
/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn si_matrix_save(m: *const SiMatrix, path: *const c_char) -> SiStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        save_matrix(m, path_arg(path)?)?;
        Ok(())
    })
}

/// Samples a `rows x cols` layer. `gain` only affects the orthogonal method.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_init(
    method: u32,
    rows: usize,
    cols: usize,
    gain: f64,
    seed: u64,
    layer: u32,
    rep: u32,
    out: *mut *mut SiMatrix,
) -> SiStatus {
    guard(|| {
        check_out(out)?;
        let spec = InitSpec::new(method_of(method)?, rows, cols).with_gain(gain);
        let mut rng = RngStream::new(StreamPurpose::Weights, seed, layer, rep);
        put(out, init(&spec, &mut rng)?);
        Ok(())
    })
}

/// Best of `k` sampled layers by input-strength variance.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_variance_search(
    method: u32,
    rows: usize,
    cols: usize,
    gain: f64,
    k: usize,
    mode: u32,
    seed: u64,
    layer: u32,
    rep: u32,
    out: *mut *mut SiMatrix,
) -> SiStatus {
    guard(|| {
        check_out(out)?;
        let spec = InitSpec::new(method_of(method)?, rows, cols).with_gain(gain);
        let mut rng = RngStream::new(StreamPurpose::Weights, seed, layer, rep);
        put(out, variance_search(&spec, k, search_of(mode)?, &mut rng)?);
        Ok(())
    })
}

/// PA-rewired copy of `m`.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_rewire(
    m: *const SiMatrix,
    passes: u32,
    seed: u64,
    layer: u32,
    rep: u32,
    out: *mut *mut SiMatrix,
) -> SiStatus {
    guard(|| {
        check_out(out)?;
        let m = matrix_ref(m)?;
        let mut rng = RngStream::new(StreamPurpose::Rewire, seed, layer, rep);
        put(out, pa_rewire(m, pass_of(passes)?, &mut rng)?);
        Ok(())
    })
}

/// Rewires a `w x h x z x o` kernel held in `data` (index
/// `((iw*h + ih)*z + iz)*o + io`) and writes the result to `out_data`. The
/// two buffers may alias.
///
/// # Safety
/// Both buffers must hold `w*h*z*o` doubles.
#[no_mangle]
pub unsafe extern "C" fn si_rewire_conv(
    data: *const f64,
    w: usize,
    h: usize,
    z: usize,
    o: usize,
    passes: u32,
    seed: u64,
    layer: u32,
    rep: u32,
    out_data: *mut f64,
) -> SiStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out_data.is_null() {
            return Err(null("out_data"));
        }
        let len = [w, h, z, o]
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| invalid("kernel size overflows"))?;
        let t = ConvTensor::new(w, h, z, o, std::slice::from_raw_parts(data, len).to_vec())?;
        let mut rng = RngStream::new(StreamPurpose::Rewire, seed, layer, rep);
        let r = conv_to_2d(&pa_rewire_conv(&t, pass_of(passes)?, &mut rng)?);
        ptr::copy(r.data().as_ptr(), out_data, len);
        Ok(())
    })
}

/// Strength statistics of `m` on `side`.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn si_strength_stats(
    m: *const SiMatrix,
    side: u32,
    out: *mut SiStrengthStats,
) -> SiStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = strength_stats(m, side_of(side)?);
        *out = SiStrengthStats {
            n: s.n,
            mean: s.mean,
            variance: s.variance,
            fourth_central_moment: s.fourth_central_moment,
            max_abs: s.max_abs,
            skewness: s.skewness,
            excess_kurtosis: s.excess_kurtosis,
        };
        Ok(())
    })
}
