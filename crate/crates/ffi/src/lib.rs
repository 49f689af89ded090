//! C ABI over the `pathent` analysis toolkit.
//!
//! Every fallible function returns a [`PathentStatus`]; on failure the
//! message is available from [`pathent_last_error_message`] on the same
//! thread. Tag streams and g² histograms are opaque handles released with
//! their `_free` function. Plain results are copied into caller-owned
//! `#[repr(C)]` structs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pathent::analysis::{
    self, ConcurrenceInput, InversionMode, RhoMode,
};
use pathent::{correlation, io, oracles, Channel, Error, G2Histogram, G2Model, Populations, TagStream, TimeTag};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathentStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    EmptyInput = 3,
    DurationMismatch = 4,
    Infeasible = 5,
    NonConvergence = 6,
    Singular = 7,
    Degenerate = 8,
    Quadrature = 9,
    Undefined = 10,
    BadTagFile = 11,
    Config = 12,
    Io = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

impl From<&Error> for PathentStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => Self::InvalidParameter,
            Error::EmptyInput(_) => Self::EmptyInput,
            Error::DurationMismatch(..) => Self::DurationMismatch,
            Error::Infeasible { .. } => Self::Infeasible,
            Error::NonConvergence { .. } => Self::NonConvergence,
            Error::Singular => Self::Singular,
            Error::Degenerate(_) => Self::Degenerate,
            Error::Quadrature(_) => Self::Quadrature,
            Error::Undefined(_) => Self::Undefined,
            Error::BadMagic(_)
            | Error::BadVersion(_)
            | Error::Truncated { .. }
            | Error::Unsorted { .. }
            | Error::BadRecord { .. } => Self::BadTagFile,
            Error::Config(_) => Self::Config,
            Error::Io(_) => Self::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PathentStatus, msg: impl Into<String>) -> PathentStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, maps errors and panics to a status and records the message.
fn guard<F: FnOnce() -> Result<(), PathentStatus>>(f: F) -> PathentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PathentStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PathentStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: pathent::Result<T>) -> Result<T, PathentStatus> {
    r.map_err(|e| fail(PathentStatus::from(&e), e.to_string()))
}

fn null(what: &str) -> PathentStatus {
    fail(PathentStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PathentStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PathentStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, PathentStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(PathentStatus::InvalidParameter, "path is not valid UTF-8"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pathent_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pathent_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// plain data

/// Detector channel codes as stored in tag files.
pub const PATHENT_CHANNEL_DH: u8 = 0;
pub const PATHENT_CHANNEL_DV: u8 = 1;
pub const PATHENT_CHANNEL_SYNC: u8 = 2;
pub const PATHENT_CHANNEL_AUX: u8 = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentG2Model {
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho: f64,
}

impl From<PathentG2Model> for G2Model {
    fn from(m: PathentG2Model) -> Self {
        G2Model { beta: m.beta, gamma1: m.gamma1, gamma2: m.gamma2, rho: m.rho }
    }
}

impl From<G2Model> for PathentG2Model {
    fn from(m: G2Model) -> Self {
        PathentG2Model { beta: m.beta, gamma1: m.gamma1, gamma2: m.gamma2, rho: m.rho }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentG2Fit {
    pub model: PathentG2Model,
    pub beta_err: f64,
    pub gamma1_err: f64,
    pub gamma2_err: f64,
    pub rho_err: f64,
    pub chi2: f64,
    pub dof: u64,
    pub iterations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentPopulations {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p0_err: f64,
    pub p1_err: f64,
    pub p2_err: f64,
}

impl From<PathentPopulations> for Populations {
    fn from(p: PathentPopulations) -> Self {
        Populations { p0: p.p0, p1: p.p1, p2: p.p2, p0_err: p.p0_err, p1_err: p.p1_err, p2_err: p.p2_err }
    }
}

impl From<Populations> for PathentPopulations {
    fn from(p: Populations) -> Self {
        PathentPopulations { p0: p.p0, p1: p.p1, p2: p.p2, p0_err: p.p0_err, p1_err: p.p1_err, p2_err: p.p2_err }
    }
}

/// Window occupation counts and detected populations for one window length.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentWindowCounts {
    pub window_ns: f64,
    pub window_count: u64,
    pub n0: u64,
    pub n1: u64,
    pub n2: u64,
    pub same_channel_multi: u64,
    pub detected: PathentPopulations,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathentInversion {
    Verbatim = 0,
    SelfConsistent = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentConcurrenceInput {
    pub window_ns: f64,
    pub visibility: f64,
    pub visibility_err: f64,
    pub yc: f64,
    pub yc_err: f64,
    pub p1: f64,
    pub p: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentConcurrence {
    pub c_n: f64,
    pub c_n_err: f64,
    pub concurrence: f64,
    pub total_lower_bound: f64,
    pub clamped: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathentOraclePopulations {
    pub window_ns: f64,
    pub mu: f64,
    pub g2_detected: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub regime_warning: bool,
}

// ---------------------------------------------------------------------------
// tag streams

/// Opaque owned tag stream.
pub struct PathentTagStream(TagStream);

/// Opaque owned g² histogram.
pub struct PathentG2Histogram(G2Histogram);

fn boxed<T>(v: T, dst: *mut *mut T) -> Result<(), PathentStatus> {
    if dst.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *dst = Box::into_raw(Box::new(v)) };
    Ok(())
}

/// Reads a tag file into a new stream handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `stream` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_read(path: *const c_char, stream: *mut *mut PathentTagStream) -> PathentStatus {
    guard(|| {
        let p = path_arg(path)?;
        boxed(PathentTagStream(lift(io::read_tagfile(p))?), stream)
    })
}

/// Writes a stream to a tag file.
///
/// # Safety
/// `stream` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_write(stream: *const PathentTagStream, path: *const c_char) -> PathentStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let p = path_arg(path)?;
        lift(io::write_tagfile(&s.0, p))
    })
}

/// Builds a validated stream from parallel arrays of times (ps) and channel
/// codes.
///
/// # Safety
/// `times` and `channels` must point to `len` readable elements (either may
/// be null when `len` is 0) and `stream` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_from_arrays(
    times: *const u64,
    channels: *const u8,
    len: usize,
    duration_ps: u64,
    resolution_ps: u64,
    stream: *mut *mut PathentTagStream,
) -> PathentStatus {
    guard(|| {
        let mut tags = Vec::with_capacity(len);
        if len > 0 {
            if times.is_null() || channels.is_null() {
                return Err(null("tag array"));
            }
            let (t, c) = (std::slice::from_raw_parts(times, len), std::slice::from_raw_parts(channels, len));
            for (i, (&time, &code)) in t.iter().zip(c).enumerate() {
                let ch = Channel::from_code(code)
                    .ok_or_else(|| fail(PathentStatus::InvalidParameter, format!("tag {i} has unknown channel {code}")))?;
                tags.push(TimeTag::new(time, ch));
            }
        }
        boxed(PathentTagStream(lift(TagStream::new(tags, duration_ps, resolution_ps))?), stream)
    })
}

/// New stream holding only the tags of one channel.
///
/// # Safety
/// `stream` must be a live handle and `selected` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_select(
    stream: *const PathentTagStream,
    channel: u8,
    selected: *mut *mut PathentTagStream,
) -> PathentStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let ch = Channel::from_code(channel)
            .ok_or_else(|| fail(PathentStatus::InvalidParameter, format!("unknown channel {channel}")))?;
        boxed(PathentTagStream(s.0.select(ch)), selected)
    })
}

/// Number of tags, 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_len(stream: *const PathentTagStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Acquisition length in ps, 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_duration(stream: *const PathentTagStream) -> u64 {
    stream.as_ref().map_or(0, |s| s.0.duration)
}

/// Timing resolution in ps, 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_resolution(stream: *const PathentTagStream) -> u64 {
    stream.as_ref().map_or(0, |s| s.0.resolution)
}

/// Copies up to `capacity` tags into the caller's arrays and stores the
/// number written in `written`. Returns `BufferTooSmall` (after filling the
/// buffer) if the stream holds more tags.
///
/// # Safety
/// `times` and `channels` must have room for `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_copy(
    stream: *const PathentTagStream,
    times: *mut u64,
    channels: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> PathentStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let written = out(written, "written")?;
        let n = s.0.len().min(capacity);
        if n > 0 && (times.is_null() || channels.is_null()) {
            return Err(null("tag buffer"));
        }
        for (i, tag) in s.0.tags[..n].iter().enumerate() {
            *times.add(i) = tag.time;
            *channels.add(i) = tag.channel.code();
        }
        *written = n;
        if n < s.0.len() {
            return Err(fail(PathentStatus::BufferTooSmall, format!("stream holds {} tags", s.0.len())));
        }
        Ok(())
    })
}

/// Releases a stream handle. Null is ignored.
///
/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathent_tagstream_free(stream: *mut PathentTagStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

// ---------------------------------------------------------------------------
// g²

/// Start-stop g² histogram of `b` relative to `a`.
///
/// # Safety
/// `a`, `b` must be live handles and `hist` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_estimate(
    a: *const PathentTagStream,
    b: *const PathentTagStream,
    bin_width_ns: f64,
    tau_max_ns: f64,
    hist: *mut *mut PathentG2Histogram,
) -> PathentStatus {
    guard(|| {
        let (a, b) = (deref(a, "stream a")?, deref(b, "stream b")?);
        boxed(PathentG2Histogram(lift(correlation::estimate_g2(&a.0, &b.0, bin_width_ns, tau_max_ns))?), hist)
    })
}

/// Number of bins, 0 for a null handle.
///
/// # Safety
/// `hist` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_len(hist: *const PathentG2Histogram) -> usize {
    hist.as_ref().map_or(0, |h| h.0.len())
}

/// Copies bin centres (ns), normalised g², standard errors and raw counts.
/// Any output pointer may be null to skip it; non-null ones need room for
/// `pathent_g2_len` elements.
///
/// # Safety
/// `hist` must be a live handle; output arrays must be large enough.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_copy(
    hist: *const PathentG2Histogram,
    capacity: usize,
    tau_ns: *mut f64,
    g2: *mut f64,
    stderr: *mut f64,
    counts: *mut u64,
) -> PathentStatus {
    guard(|| {
        let h = &deref(hist, "histogram")?.0;
        if capacity < h.len() {
            return Err(fail(PathentStatus::BufferTooSmall, format!("histogram has {} bins", h.len())));
        }
        for i in 0..h.len() {
            if !tau_ns.is_null() {
                *tau_ns.add(i) = h.bin_center_ns(i);
            }
            if !g2.is_null() {
                *g2.add(i) = h.g2[i];
            }
            if !stderr.is_null() {
                *stderr.add(i) = h.stderr[i];
            }
            if !counts.is_null() {
                *counts.add(i) = h.counts[i];
            }
        }
        Ok(())
    })
}

/// Weighted fit of the background-corrected three-level g² model. With
/// `fit_rho` false, ρ stays at `initial.rho`.
///
/// # Safety
/// `hist` must be a live handle, `initial` readable and `fit` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_fit(
    hist: *const PathentG2Histogram,
    initial: *const PathentG2Model,
    fit_rho: bool,
    fit: *mut PathentG2Fit,
) -> PathentStatus {
    guard(|| {
        let h = deref(hist, "histogram")?;
        let init = *deref(initial, "initial model")?;
        let dst = out(fit, "fit")?;
        let mode = if fit_rho { RhoMode::Fitted } else { RhoMode::Fixed };
        let f = lift(analysis::fit_g2(&h.0, &init.into(), mode))?;
        *dst = PathentG2Fit {
            model: f.model.into(),
            beta_err: f.beta_err,
            gamma1_err: f.gamma1_err,
            gamma2_err: f.gamma2_err,
            rho_err: f.rho_err,
            chi2: f.chi2,
            dof: f.dof as u64,
            iterations: f.iterations as u64,
        };
        Ok(())
    })
}

/// Releases a histogram handle. Null is ignored.
///
/// # Safety
/// `hist` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_free(hist: *mut PathentG2Histogram) {
    if !hist.is_null() {
        drop(Box::from_raw(hist));
    }
}

// ---------------------------------------------------------------------------
// populations and entanglement

/// Classifies contiguous windows of `window_ns` by which detectors fired.
/// `dh` and `dv` hold the two path detectors and must share a duration.
///
/// # Safety
/// `dh`, `dv` must be live handles and `counts` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_window_populations(
    dh: *const PathentTagStream,
    dv: *const PathentTagStream,
    window_ns: f64,
    counts: *mut PathentWindowCounts,
) -> PathentStatus {
    guard(|| {
        let (dh, dv) = (deref(dh, "dh stream")?, deref(dv, "dv stream")?);
        let dst = out(counts, "counts")?;
        let e = lift(analysis::window_populations(&dh.0, &dv.0, window_ns))?;
        *dst = PathentWindowCounts {
            window_ns: e.window_ns,
            window_count: e.window_count,
            n0: e.n0,
            n1: e.n1,
            n2: e.n2,
            same_channel_multi: e.same_channel_multi,
            detected: e.detected.into(),
        };
        Ok(())
    })
}

/// Undoes detection loss `eta` (with uncertainty `eta_err`). `clamped`, if
/// non-null, reports whether a negative population was set to zero.
///
/// # Safety
/// `detected` must be readable, `corrected` writable, `clamped` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_invert_losses(
    detected: *const PathentPopulations,
    eta: f64,
    eta_err: f64,
    mode: PathentInversion,
    corrected: *mut PathentPopulations,
    clamped: *mut bool,
) -> PathentStatus {
    guard(|| {
        let d = *deref(detected, "detected populations")?;
        let dst = out(corrected, "corrected populations")?;
        let mode = match mode {
            PathentInversion::Verbatim => InversionMode::Verbatim,
            PathentInversion::SelfConsistent => InversionMode::SelfConsistent,
        };
        let (p, c) = lift(analysis::invert_losses(&d.into(), eta, eta_err, mode))?;
        *dst = p.into();
        if !clamped.is_null() {
            *clamped = c;
        }
        Ok(())
    })
}

/// Two-photon contamination `y_c` of populations spread over `modes` modes,
/// with its propagated error.
///
/// # Safety
/// `pops` must be readable; `yc` writable; `yc_err` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_contamination(
    pops: *const PathentPopulations,
    modes: u32,
    yc: *mut f64,
    yc_err: *mut f64,
) -> PathentStatus {
    guard(|| {
        let p = *deref(pops, "populations")?;
        let dst = out(yc, "yc")?;
        let (v, e) = lift(analysis::contamination_with_err(&p.into(), modes))?;
        *dst = v;
        if !yc_err.is_null() {
            *yc_err = e;
        }
        Ok(())
    })
}

/// Normalised and total concurrence from visibility and contamination.
///
/// # Safety
/// `input` must be readable and `result` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_concurrence(
    input: *const PathentConcurrenceInput,
    result: *mut PathentConcurrence,
) -> PathentStatus {
    guard(|| {
        let i = *deref(input, "input")?;
        let dst = out(result, "result")?;
        let r = lift(analysis::concurrence(&ConcurrenceInput {
            window_ns: i.window_ns,
            visibility: i.visibility,
            visibility_err: i.visibility_err,
            yc: i.yc,
            yc_err: i.yc_err,
            p1: i.p1,
            p: i.p,
        }))?;
        *dst = PathentConcurrence {
            c_n: r.c_n,
            c_n_err: r.c_n_err,
            concurrence: r.concurrence,
            total_lower_bound: r.total_lower_bound,
            clamped: r.clamped,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// analytic references

/// Window-averaged g² for the model in closed form.
///
/// # Safety
/// `model` must be readable and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_detected(model: *const PathentG2Model, window_ns: f64, value: *mut f64) -> PathentStatus {
    guard(|| {
        let m: G2Model = (*deref(model, "model")?).into();
        let dst = out(value, "value")?;
        lift(m.validate())?;
        if !(window_ns.is_finite() && window_ns > 0.0) {
            return Err(fail(PathentStatus::InvalidParameter, format!("window {window_ns} ns must be positive")));
        }
        *dst = oracles::g2_detected_full(&m, window_ns);
        Ok(())
    })
}

/// Same quantity by adaptive quadrature.
///
/// # Safety
/// `model` must be readable and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_g2_detected_numeric(
    model: *const PathentG2Model,
    window_ns: f64,
    value: *mut f64,
) -> PathentStatus {
    guard(|| {
        let m: G2Model = (*deref(model, "model")?).into();
        let dst = out(value, "value")?;
        *dst = lift(oracles::g2_detected_numeric(&m, window_ns))?;
        Ok(())
    })
}

/// Window-averaged g² of a two-level antibunching dip with rate `gamma`
/// (1/ns). NaN for non-positive inputs.
#[no_mangle]
pub extern "C" fn pathent_g2_detected_simple(gamma: f64, window_ns: f64) -> f64 {
    if gamma > 0.0 && window_ns > 0.0 {
        oracles::g2_detected_simple(gamma, window_ns)
    } else {
        f64::NAN
    }
}

/// Low-occupation populations implied by the g² model and a photon flux.
///
/// # Safety
/// `model` must be readable and `pops` writable.
#[no_mangle]
pub unsafe extern "C" fn pathent_populations_from_g2(
    model: *const PathentG2Model,
    flux_per_s: f64,
    window_ns: f64,
    pops: *mut PathentOraclePopulations,
) -> PathentStatus {
    guard(|| {
        let m: G2Model = (*deref(model, "model")?).into();
        let dst = out(pops, "populations")?;
        let o = lift(oracles::populations_from_g2(&m, flux_per_s, window_ns))?;
        *dst = PathentOraclePopulations {
            window_ns: o.window_ns,
            mu: o.mu,
            g2_detected: o.g2_detected,
            p0: o.p0,
            p1: o.p1,
            p2: o.p2,
            regime_warning: o.regime_warning,
        };
        Ok(())
    })
}
