//! C interface to the lattice solver.
//!
//! Every function returns a [`CssStatus`]; on failure a message is kept per
//! thread and read back with [`css_last_error_message`]. Stationary states
//! and branches are opaque handles owned by the caller and released with
//! the matching `_free` function. Outputs go through caller pointers, which
//! are left untouched on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use css_lattice::continuation::{
    arclength_continue, ArclengthOptions, Branch, Direction, StepControl, TerminationReason,
};
use css_lattice::dynamics::{integrate, EvolutionConfig};
use css_lattice::lattice::{ComplexField, LatticeWindow, ModelParams, C64};
use css_lattice::stationary::{
    scalar_root_double, scalar_root_single, solve_from_seed, NewtonOptions, SeedSpec, StationaryState,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    EvolutionFailed = 4,
    OutOfRange = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssSeedKind {
    SingleSite = 0,
    DoubleSite = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssDirection {
    DecreasingH = 0,
    IncreasingH = 1,
}

/// Why a branch stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CssTermination {
    Running = 0,
    ReachedTarget = 1,
    StepFloor = 2,
    OutOfRange = 3,
    MaxPoints = 4,
    FoldLimit = 5,
    WindowLimit = 6,
    ClosedLoop = 7,
}

/// Converged or attempted stationary state.
pub struct CssState {
    inner: StationaryState,
}

/// Continuation branch.
pub struct CssBranch {
    inner: Branch,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: CssStatus, msg: impl Into<String>) -> CssStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CssStatus) -> CssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(CssStatus::Panic, "internal panic"),
    }
}

fn params(lambda: f64, p: f64, omega: f64, h: f64) -> Result<ModelParams, CssStatus> {
    ModelParams::new(lambda, p, omega, h).map_err(|e| fail(CssStatus::InvalidArgument, e.to_string()))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn css_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Positive root of `lambda U^{2p} + (h^2/4) U^4 = omega`.
///
/// # Safety
/// `out` must be null or valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn css_scalar_root_single(lambda: f64, p: f64, omega: f64, h: f64, out: *mut f64) -> CssStatus {
    guard(|| {
        if out.is_null() {
            return fail(CssStatus::NullPointer, "out is null");
        }
        match params(lambda, p, omega, h) {
            Ok(prm) => {
                *out = scalar_root_single(&prm);
                CssStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Double-site amplitudes: `out_w` at the centre, `out_u` at its neighbour.
///
/// # Safety
/// Both pointers must be null or valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn css_scalar_root_double(
    lambda: f64,
    p: f64,
    omega: f64,
    h: f64,
    out_w: *mut f64,
    out_u: *mut f64,
) -> CssStatus {
    guard(|| {
        if out_w.is_null() || out_u.is_null() {
            return fail(CssStatus::NullPointer, "output pointer is null");
        }
        match params(lambda, p, omega, h) {
            Ok(prm) => {
                let u = scalar_root_single(&prm);
                *out_w = scalar_root_double(&prm, u);
                *out_u = u;
                CssStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Newton solve from a single- or double-site seed on `[-half_width, half_width]`.
///
/// A handle is stored in `*out` whenever the solve ran; the status is
/// `NotConverged` if Newton stopped short.
///
/// # Safety
/// `out` must be null or valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn css_stationary_solve(
    lambda: f64,
    p: f64,
    omega: f64,
    h: f64,
    seed: CssSeedKind,
    half_width: i64,
    out: *mut *mut CssState,
) -> CssStatus {
    guard(|| {
        if out.is_null() {
            return fail(CssStatus::NullPointer, "out is null");
        }
        let prm = match params(lambda, p, omega, h) {
            Ok(prm) => prm,
            Err(s) => return s,
        };
        let window = match LatticeWindow::centered(half_width, h) {
            Ok(w) => w,
            Err(e) => return fail(CssStatus::InvalidArgument, e.to_string()),
        };
        let spec = match seed {
            CssSeedKind::SingleSite => SeedSpec::SingleSite { center: 0 },
            CssSeedKind::DoubleSite => SeedSpec::DoubleSite { center: 0 },
        };
        match solve_from_seed(&spec, window, &prm, &NewtonOptions::default()) {
            Ok(state) => {
                let converged = state.converged;
                let failure = state.failure;
                *out = Box::into_raw(Box::new(CssState { inner: state }));
                if converged {
                    CssStatus::Ok
                } else {
                    fail(
                        CssStatus::NotConverged,
                        failure.map_or("not converged".to_string(), |f| f.to_string()),
                    )
                }
            }
            Err(e) => fail(CssStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `state` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn css_state_free(state: *mut CssState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Window length, first site, residual and mass of a state.
///
/// # Safety
/// `state` must be a live handle; each output pointer null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_state_info(
    state: *const CssState,
    out_len: *mut usize,
    out_n_min: *mut i64,
    out_residual: *mut f64,
    out_mass: *mut f64,
) -> CssStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            return fail(CssStatus::NullPointer, "state is null");
        };
        let s = &s.inner;
        if let Some(o) = out_len.as_mut() {
            *o = s.u.len();
        }
        if let Some(o) = out_n_min.as_mut() {
            *o = s.u.window().n_min;
        }
        if let Some(o) = out_residual.as_mut() {
            *o = s.residual_linf;
        }
        if let Some(o) = out_mass.as_mut() {
            *o = s.mass();
        }
        CssStatus::Ok
    })
}

/// Copy the profile into `buf`, which must hold at least the state length.
///
/// # Safety
/// `buf` must be valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn css_state_copy_values(state: *const CssState, buf: *mut f64, capacity: usize) -> CssStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            return fail(CssStatus::NullPointer, "state is null");
        };
        if buf.is_null() {
            return fail(CssStatus::NullPointer, "buf is null");
        }
        let values = s.inner.u.values();
        if capacity < values.len() {
            return fail(
                CssStatus::OutOfRange,
                format!("buffer holds {capacity}, state has {}", values.len()),
            );
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        CssStatus::Ok
    })
}

/// Pseudo-arclength continuation from a converged state.
/// `max_folds = 0` means no fold limit.
///
/// # Safety
/// `start` must be a live handle and `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_branch_arclength(
    start: *const CssState,
    direction: CssDirection,
    h_min: f64,
    h_max: f64,
    max_points: usize,
    max_folds: usize,
    out: *mut *mut CssBranch,
) -> CssStatus {
    guard(|| {
        let Some(s) = start.as_ref() else {
            return fail(CssStatus::NullPointer, "start is null");
        };
        if out.is_null() {
            return fail(CssStatus::NullPointer, "out is null");
        }
        if !(h_min > 0.0 && h_max > h_min && max_points > 0) {
            return fail(CssStatus::InvalidArgument, "need 0 < h_min < h_max and max_points > 0");
        }
        let options = ArclengthOptions {
            direction: match direction {
                CssDirection::DecreasingH => Direction::DecreasingH,
                CssDirection::IncreasingH => Direction::IncreasingH,
            },
            h_min,
            h_max,
            max_points,
            max_folds: (max_folds > 0).then_some(max_folds),
        };
        match arclength_continue(&s.inner, &options, &StepControl::default(), &NewtonOptions::default()) {
            Ok(branch) => {
                *out = Box::into_raw(Box::new(CssBranch { inner: branch }));
                CssStatus::Ok
            }
            Err(e) => fail(CssStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `branch` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn css_branch_free(branch: *mut CssBranch) {
    if !branch.is_null() {
        drop(Box::from_raw(branch));
    }
}

/// Number of points and of folds on a branch.
///
/// # Safety
/// `branch` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_branch_sizes(
    branch: *const CssBranch,
    out_points: *mut usize,
    out_folds: *mut usize,
) -> CssStatus {
    guard(|| {
        let Some(b) = branch.as_ref() else {
            return fail(CssStatus::NullPointer, "branch is null");
        };
        if let Some(o) = out_points.as_mut() {
            *o = b.inner.points.len();
        }
        if let Some(o) = out_folds.as_mut() {
            *o = b.inner.folds.len();
        }
        CssStatus::Ok
    })
}

/// Termination reason of a branch and the `h` where it stopped.
///
/// # Safety
/// `branch` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_branch_termination(
    branch: *const CssBranch,
    out_reason: *mut CssTermination,
    out_h: *mut f64,
) -> CssStatus {
    guard(|| {
        let Some(b) = branch.as_ref() else {
            return fail(CssStatus::NullPointer, "branch is null");
        };
        let (reason, h) = match &b.inner.termination {
            None => (CssTermination::Running, f64::NAN),
            Some(t) => {
                let reason = match t.reason {
                    TerminationReason::ReachedTarget => CssTermination::ReachedTarget,
                    TerminationReason::StepFloor => CssTermination::StepFloor,
                    TerminationReason::OutOfRange => CssTermination::OutOfRange,
                    TerminationReason::MaxPoints => CssTermination::MaxPoints,
                    TerminationReason::FoldLimit => CssTermination::FoldLimit,
                    TerminationReason::WindowLimit => CssTermination::WindowLimit,
                    TerminationReason::ClosedLoop => CssTermination::ClosedLoop,
                };
                (reason, t.h)
            }
        };
        if let Some(o) = out_reason.as_mut() {
            *o = reason;
        }
        if let Some(o) = out_h.as_mut() {
            *o = h;
        }
        CssStatus::Ok
    })
}

/// `(h, mass)` of point `index`.
///
/// # Safety
/// `branch` must be a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_branch_point(
    branch: *const CssBranch,
    index: usize,
    out_h: *mut f64,
    out_mass: *mut f64,
) -> CssStatus {
    guard(|| {
        let Some(b) = branch.as_ref() else {
            return fail(CssStatus::NullPointer, "branch is null");
        };
        let Some(pt) = b.inner.points.get(index) else {
            return fail(
                CssStatus::OutOfRange,
                format!("point {index} of {}", b.inner.points.len()),
            );
        };
        if let Some(o) = out_h.as_mut() {
            *o = pt.h;
        }
        if let Some(o) = out_mass.as_mut() {
            *o = pt.mass;
        }
        CssStatus::Ok
    })
}

/// Refined `h` of fold `index`.
///
/// # Safety
/// `branch` must be a live handle; `out_h` null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_branch_fold(branch: *const CssBranch, index: usize, out_h: *mut f64) -> CssStatus {
    guard(|| {
        let Some(b) = branch.as_ref() else {
            return fail(CssStatus::NullPointer, "branch is null");
        };
        let Some(f) = b.inner.folds.get(index) else {
            return fail(
                CssStatus::OutOfRange,
                format!("fold {index} of {}", b.inner.folds.len()),
            );
        };
        if let Some(o) = out_h.as_mut() {
            *o = f.h;
        }
        CssStatus::Ok
    })
}

/// Evolve `re + i im` (length `len`, first site `n_min`) to `t_end`,
/// overwriting both arrays with the final field.
///
/// # Safety
/// `re` and `im` must be valid for `len` reads and writes; `out_mass_drift`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn css_evolve(
    re: *mut f64,
    im: *mut f64,
    len: usize,
    n_min: i64,
    lambda: f64,
    p: f64,
    h: f64,
    t_end: f64,
    rel_tol: f64,
    out_mass_drift: *mut f64,
) -> CssStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return fail(CssStatus::NullPointer, "field arrays are null");
        }
        let prm = match params(lambda, p, 1.0, h) {
            Ok(prm) => prm,
            Err(s) => return s,
        };
        let window = match LatticeWindow::new(n_min, n_min + len as i64 - 1, h) {
            Ok(w) => w,
            Err(e) => return fail(CssStatus::InvalidArgument, e.to_string()),
        };
        let re_s = std::slice::from_raw_parts_mut(re, len);
        let im_s = std::slice::from_raw_parts_mut(im, len);
        let values = re_s.iter().zip(im_s.iter()).map(|(a, b)| C64::new(*a, *b)).collect();
        let phi = match ComplexField::new(window, values) {
            Ok(f) => f,
            Err(e) => return fail(CssStatus::InvalidArgument, e.to_string()),
        };
        let config = EvolutionConfig {
            t_end,
            rel_tol,
            record_every: t_end,
            ..EvolutionConfig::default()
        };
        match integrate(&phi, &prm, &config) {
            Ok(trace) => {
                let last = trace.final_state().expect("at least the initial record");
                for (k, z) in last.values().iter().enumerate() {
                    re_s[k] = z.re;
                    im_s[k] = z.im;
                }
                if let Some(o) = out_mass_drift.as_mut() {
                    *o = trace.mass_drift();
                }
                CssStatus::Ok
            }
            Err(css_lattice::EvolutionError::Config(msg)) => fail(CssStatus::InvalidArgument, msg),
            Err(e) => fail(CssStatus::EvolutionFailed, e.to_string()),
        }
    })
}
