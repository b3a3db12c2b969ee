//! C interface. Every function returns a [`BgStatus`]; on failure the message
//! is kept per thread and read back with [`bg_last_error`].
//!
//! Handles are opaque and owned by the caller once created; release them with
//! the matching `_free` function. Nothing here is thread-affine, but a handle
//! must not be freed while another call is using it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use beamgap::bloch::{dispersion_at, QuasiMomentum};
use beamgap::homogenization::homogenized_tensor;
use beamgap::lattice::{build_square_example, parse_config, MaterialParams, UnitCellGraph};
use beamgap::resonance::scan::{scan_gaps, BoundaryType, GapInterval, ScanMode};
use beamgap::resonance::{beta_matrix, beta_matrix_closed, BetaMatrix, Classification};
use beamgap::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    GeometryOverflow = 6,
    Domain = 7,
    Structure = 8,
    Singular = 9,
    NearResonance = 10,
    Pole = 11,
    Eigensolver = 12,
    Asymmetry = 13,
    NoConvergence = 14,
    IndexOutOfRange = 15,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgClassification {
    Band = 0,
    FullGap = 1,
    WeakGap = 2,
    Resonance = 3,
}

impl From<Classification> for BgClassification {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Band => BgClassification::Band,
            Classification::FullGap => BgClassification::FullGap,
            Classification::WeakGap => BgClassification::WeakGap,
            Classification::Resonance => BgClassification::Resonance,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgBoundary {
    Zero = 0,
    Pole = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgBeta {
    pub lambda: f64,
    /// Row-major symmetric 2x2.
    pub entries: [f64; 4],
    /// Ascending.
    pub eigenvalues: [f64; 2],
    pub classification: BgClassification,
}

impl From<&BetaMatrix> for BgBeta {
    fn from(b: &BetaMatrix) -> Self {
        BgBeta {
            lambda: b.lambda,
            entries: [b.entries[0][0], b.entries[0][1], b.entries[1][0], b.entries[1][1]],
            eigenvalues: b.eigenvalues,
            classification: b.classification.into(),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgGapInterval {
    pub lo: f64,
    pub hi: f64,
    pub classification: BgClassification,
    pub boundary: BgBoundary,
}

impl From<&GapInterval> for BgGapInterval {
    fn from(g: &GapInterval) -> Self {
        BgGapInterval {
            lo: g.lo,
            hi: g.hi,
            classification: g.classification.into(),
            boundary: match g.boundary_type {
                BoundaryType::Zero => BgBoundary::Zero,
                BoundaryType::Pole => BgBoundary::Pole,
            },
        }
    }
}

/// Opaque unit cell.
pub struct BgLattice(UnitCellGraph);

/// Opaque result of a gap scan.
pub struct BgGapScan(Vec<GapInterval>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> BgStatus {
    match e {
        Error::Io { .. } => BgStatus::Io,
        Error::Parse { .. } => BgStatus::Parse,
        Error::Validation(_) => BgStatus::Validation,
        Error::GeometryOverflow(_) => BgStatus::GeometryOverflow,
        Error::Domain(_) => BgStatus::Domain,
        Error::Structure(_) => BgStatus::Structure,
        Error::Singular(_) => BgStatus::Singular,
        Error::NearResonance { .. } => BgStatus::NearResonance,
        Error::Pole { .. } => BgStatus::Pole,
        Error::Eigensolver(_) => BgStatus::Eigensolver,
        Error::Asymmetry { .. } => BgStatus::Asymmetry,
        Error::NoConvergence { .. } => BgStatus::NoConvergence,
    }
}

struct Fail(BgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BgStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BgStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {m}"));
            BgStatus::Panic
        }
    }
}

unsafe fn lattice<'a>(p: *const BgLattice) -> Result<&'a UnitCellGraph, Fail> {
    p.as_ref().map(|l| &l.0).ok_or_else(|| null("lattice"))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Square cell with one soft segment of half length `a` at `alpha_deg`, all
/// coefficients one.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_lattice_square(alpha_deg: f64, a: f64, out: *mut *mut BgLattice) -> BgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let g = build_square_example(alpha_deg, a, MaterialParams::unit(), MaterialParams::unit())?;
        *out = Box::into_raw(Box::new(BgLattice(g)));
        Ok(())
    })
}

/// Cell from a JSON config document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bg_lattice_from_json(json: *const c_char, out: *mut *mut BgLattice) -> BgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| Fail(BgStatus::InvalidUtf8, e.to_string()))?;
        *out = Box::into_raw(Box::new(BgLattice(parse_config(text)?)));
        Ok(())
    })
}

/// # Safety
/// `lat` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bg_lattice_free(lat: *mut BgLattice) {
    if !lat.is_null() {
        drop(Box::from_raw(lat));
    }
}

/// Homogenized tensor of the stiff part in Voigt form, row-major 3x3.
///
/// # Safety
/// `lat` must be a live handle; `out` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_homogenized_tensor(lat: *const BgLattice, h: f64, out: *mut f64) -> BgStatus {
    guard(|| {
        let g = lattice(lat)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = homogenized_tensor(&g.stiff_subgraph(), h)?.voigt();
        let out = std::slice::from_raw_parts_mut(out, 9);
        for (i, row) in v.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Closed-form frequency response of a unit segment.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bg_beta_closed(lambda: f64, a: f64, alpha_deg: f64, out: *mut BgBeta) -> BgStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = (&beta_matrix_closed(lambda, a, alpha_deg)?).into();
        Ok(())
    })
}

/// Frequency response of the soft part from finite elements of size `h`.
///
/// # Safety
/// `lat` must be a live handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bg_beta_matrix(lat: *const BgLattice, lambda: f64, h: f64, out: *mut BgBeta) -> BgStatus {
    guard(|| {
        let g = lattice(lat)?;
        let out = out_ref(out, "out")?;
        *out = (&beta_matrix(g, lambda, h)?).into();
        Ok(())
    })
}

/// Lowest `n_bands` Bloch eigenvalues at quasi-momentum `(k1, k2)`.
///
/// # Safety
/// `lat` must be a live handle; `out` must hold `n_bands` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_dispersion_at(
    lat: *const BgLattice,
    k1: f64,
    k2: f64,
    h: f64,
    n_bands: usize,
    out: *mut f64,
) -> BgStatus {
    guard(|| {
        let g = lattice(lat)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ev = dispersion_at(g, &QuasiMomentum::new(k1, k2), n_bands, h)?;
        std::slice::from_raw_parts_mut(out, n_bands).copy_from_slice(&ev[..n_bands]);
        Ok(())
    })
}

/// Partition `(0, lambda_max]`. With `h <= 0` the closed forms are used,
/// otherwise finite elements of size `h`.
///
/// # Safety
/// `lat` must be a live handle; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_scan_gaps(
    lat: *const BgLattice,
    lambda_max: f64,
    samples: usize,
    h: f64,
    out: *mut *mut BgGapScan,
) -> BgStatus {
    guard(|| {
        let g = lattice(lat)?;
        let out = out_ref(out, "out")?;
        let mode = if h > 0.0 { ScanMode::FiniteElement { h } } else { ScanMode::ClosedForm };
        *out = Box::into_raw(Box::new(BgGapScan(scan_gaps(g, lambda_max, samples, mode)?)));
        Ok(())
    })
}

/// Number of intervals in a scan; zero for a null handle.
///
/// # Safety
/// `scan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bg_gap_scan_len(scan: *const BgGapScan) -> usize {
    scan.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `scan` must be a live handle; `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn bg_gap_scan_get(scan: *const BgGapScan, index: usize, out: *mut BgGapInterval) -> BgStatus {
    guard(|| {
        let s = scan.as_ref().ok_or_else(|| null("scan"))?;
        let out = out_ref(out, "out")?;
        let iv =
            s.0.get(index).ok_or_else(|| Fail(BgStatus::IndexOutOfRange, format!("index {index} of {}", s.0.len())))?;
        *out = iv.into();
        Ok(())
    })
}

/// # Safety
/// `scan` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bg_gap_scan_free(scan: *mut BgGapScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}
