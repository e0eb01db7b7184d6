//! C ABI over `clic-core`.
//!
//! Every fallible call returns a [`ClicStatus`]; on failure the message is
//! kept per thread and read with [`clic_last_error`]. Objects are opaque
//! handles created by `*_new`/`*_load` calls and released with the matching
//! `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clic_core::checkpoint::Checkpoint;
use clic_core::encoder::{Architecture, EncoderState, FaeStages};
use clic_core::error::Error;
use clic_core::eval;
use clic_core::image::Image;
use clic_core::io::load_image;
use clic_core::metrics::{self, CannyParams};
use clic_core::trainer::FineTuneHead;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClicStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Bad or unreadable input data.
    Data = 3,
    /// NaN, divergence or a degenerate series.
    Numeric = 4,
    Io = 5,
    /// Output buffer too small; the needed length is still reported.
    BufferTooSmall = 6,
    Internal = 7,
}

/// Decoded image.
pub struct ClicImage(Image);

/// Frozen encoder, optionally with a fitted regression head.
pub struct ClicEncoder {
    enc: EncoderState,
    head: Option<FineTuneHead>,
    resolution: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> ClicStatus {
    match err {
        Error::Numeric(_) | Error::DegenerateSeries(_) | Error::ZeroNorm => ClicStatus::Numeric,
        Error::Io(_) => ClicStatus::Io,
        Error::Parameter(_) | Error::Config(_) => ClicStatus::InvalidArgument,
        _ => ClicStatus::Data,
    }
}

/// Runs `f`, mapping errors and panics to a status.
fn guard(f: impl FnOnce() -> Result<(), ClicStatus>) -> ClicStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClicStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            ClicStatus::Internal
        }
    }
}

fn fail(err: Error) -> ClicStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null(what: &str) -> ClicStatus {
    set_error(&format!("{what} is null"));
    ClicStatus::NullPointer
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, ClicStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| {
            set_error("path is not valid UTF-8");
            ClicStatus::InvalidArgument
        })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], ClicStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, ClicStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns its full length in bytes,
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn clic_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Grayscale (`channels` = 1) or RGB (`channels` = 3) image from row-major
/// samples.
///
/// # Safety
/// `samples` must be valid for `width * height * channels` bytes and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clic_image_new(
    width: usize,
    height: usize,
    channels: usize,
    samples: *const u8,
    out: *mut *mut ClicImage,
) -> ClicStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| fail(Error::Size("image dimensions overflow".into())))?;
        let data = slice_arg(samples, n, "samples")?.to_vec();
        let img = Image::new(width, height, channels, data).map_err(fail)?;
        *out = Box::into_raw(Box::new(ClicImage(img)));
        Ok(())
    })
}

/// Decodes a PNG or PNM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clic_image_load(path: *const c_char, out: *mut *mut ClicImage) -> ClicStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let img = load_image(path_arg(path)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(ClicImage(img)));
        Ok(())
    })
}

/// Releases an image; null is ignored.
///
/// # Safety
/// `img` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clic_image_free(img: *mut ClicImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Width and height of an image.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clic_image_size(img: *const ClicImage, width: *mut usize, height: *mut usize) -> ClicStatus {
    guard(|| {
        let img = img.as_ref().ok_or_else(|| null("image"))?;
        *out_arg(width, "width")? = img.0.width();
        *out_arg(height, "height")? = img.0.height();
        Ok(())
    })
}

/// Heuristic metric selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClicMetric {
    /// Global entropy, normalized to [0, 1].
    GlobalEntropy = 0,
    /// Canny edge density with default thresholds.
    EdgeDensity = 1,
    /// Inverted compression ratio, normalized to [0, 1].
    CompressionRatio = 2,
}

/// Heuristic complexity score of `img`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clic_metric(img: *const ClicImage, metric: ClicMetric, out: *mut f64) -> ClicStatus {
    guard(|| {
        let img = &img.as_ref().ok_or_else(|| null("image"))?.0;
        let out = out_arg(out, "out")?;
        let score = match metric {
            ClicMetric::GlobalEntropy => metrics::global_entropy(img),
            ClicMetric::EdgeDensity => metrics::edge_density(img, &CannyParams::default()),
            ClicMetric::CompressionRatio => metrics::compression_ratio(img).map(|c| c.score),
        }
        .map_err(fail)?;
        *out = score.value;
        Ok(())
    })
}

/// Randomly initialized encoder with the default architecture.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_new(seed: u64, out: *mut *mut ClicEncoder) -> ClicStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let enc = EncoderState::init(Architecture::default(), seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(ClicEncoder {
            enc,
            head: None,
            resolution: eval::synth::DEFAULT_SIDE,
        }));
        Ok(())
    })
}

/// Query encoder (and head, when attached) of a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_load(path: *const c_char, out: *mut *mut ClicEncoder) -> ClicStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bytes = clic_core::io::read_bytes(path_arg(path)?).map_err(fail)?;
        let ckpt = Checkpoint::from_bytes(&bytes).map_err(fail)?;
        let enc = ckpt.encoder("query.").map_err(fail)?;
        let head = ckpt.head().map_err(fail)?;
        let resolution = match ckpt.meta("resolution") {
            Some(v) => v
                .parse()
                .map_err(|_| fail(Error::Format(format!("bad resolution '{v}'"))))?,
            None => eval::synth::DEFAULT_SIDE,
        };
        *out = Box::into_raw(Box::new(ClicEncoder { enc, head, resolution }));
        Ok(())
    })
}

/// Releases an encoder; null is ignored.
///
/// # Safety
/// `enc` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_free(enc: *mut ClicEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Length of the pooled feature vector.
///
/// # Safety
/// `enc` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_feature_dim(enc: *const ClicEncoder) -> usize {
    enc.as_ref().map_or(0, |e| e.enc.arch().pooled_dim())
}

fn prepared(e: &ClicEncoder, img: &Image) -> Result<Image, ClicStatus> {
    if img.width() == e.resolution && img.height() == e.resolution {
        Ok(img.clone())
    } else {
        img.resize(e.resolution, e.resolution).map_err(fail)
    }
}

/// Complexity score: the head's prediction when a head is attached, else
/// the aggregated activation energy.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_score(enc: *const ClicEncoder, img: *const ClicImage, out: *mut f64) -> ClicStatus {
    guard(|| {
        let e = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let img = &img.as_ref().ok_or_else(|| null("image"))?.0;
        let out = out_arg(out, "out")?;
        let x = prepared(e, img)?;
        *out = match &e.head {
            Some(h) => h.predict_images(&e.enc, &[&x]).map_err(fail)?[0],
            None => e.enc.encode_batch(&[&x], FaeStages::All).map_err(fail)?[0].fae,
        };
        Ok(())
    })
}

/// Writes the pooled features of `img` into `buf` and their count into
/// `written`. Returns `BufferTooSmall` (with `written` set) when `len` is
/// short.
///
/// # Safety
/// `buf` must be valid for `len` floats; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clic_encoder_features(
    enc: *const ClicEncoder,
    img: *const ClicImage,
    buf: *mut f32,
    len: usize,
    written: *mut usize,
) -> ClicStatus {
    guard(|| {
        let e = enc.as_ref().ok_or_else(|| null("encoder"))?;
        let img = &img.as_ref().ok_or_else(|| null("image"))?.0;
        let written = out_arg(written, "written")?;
        let x = prepared(e, img)?;
        let f = e.enc.pooled_features(&[&x]).map_err(fail)?.remove(0);
        *written = f.len();
        if len < f.len() {
            set_error(&format!("buffer holds {len} floats, {} needed", f.len()));
            return Err(ClicStatus::BufferTooSmall);
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(f.as_ptr(), buf, f.len());
        Ok(())
    })
}

/// Pearson and Spearman correlation of two series of length `n`.
///
/// # Safety
/// `x` and `y` must be valid for `n` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn clic_correlation(
    x: *const f64,
    y: *const f64,
    n: usize,
    pcc: *mut f64,
    srcc: *mut f64,
) -> ClicStatus {
    guard(|| {
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        let (pcc, srcc) = (out_arg(pcc, "pcc")?, out_arg(srcc, "srcc")?);
        let r = eval::correlate(x, y).map_err(fail)?;
        *pcc = r.pcc;
        *srcc = r.srcc;
        Ok(())
    })
}
