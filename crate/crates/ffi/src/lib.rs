//! C interface to the bellpol moment engine.
//!
//! Every function returns a [`BellpolStatus`]; results are written through
//! out-pointers. On failure a human-readable message is kept per thread and
//! can be read with [`bellpol_last_error_message`]. Models are opaque handles
//! created by [`bellpol_model_new`] and released by [`bellpol_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bellpol::gaussian::{MomentField, DEFAULT_MAX_ORDER};
use bellpol::geometry::{direction_from_waveplates, sphere_sweep, WaveplateSetting};
use bellpol::metrics::{closed_form_p2, dp_of_field, gaussian_limit_dp, DEFAULT_REFINE_TOL};
use bellpol::{BellState, BellStateSpec, Error};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellpolStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnsupportedOrder = 3,
    Truncation = 4,
    UndefinedDp = 5,
    InsufficientPulses = 6,
    Unidentifiable = 7,
    Io = 8,
    Parse = 9,
    Panic = 10,
}

/// State selector accepted by [`bellpol_model_new`] and [`bellpol_closed_form_p2`].
#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellpolBellState {
    PsiPlus = 0,
    PsiMinus = 1,
    PhiPlus = 2,
    PhiMinus = 3,
}

/// Opaque moment model of one lossy Bell state.
pub struct BellpolModel {
    field: MomentField,
    spec: BellStateSpec,
    eta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BellpolStatus {
    match e {
        Error::InvalidArgument(_) => BellpolStatus::InvalidArgument,
        Error::UnsupportedOrder { .. } => BellpolStatus::UnsupportedOrder,
        Error::Truncation { .. } => BellpolStatus::Truncation,
        Error::UndefinedDp(_) => BellpolStatus::UndefinedDp,
        Error::InsufficientPulses { .. } => BellpolStatus::InsufficientPulses,
        Error::Unidentifiable(_) => BellpolStatus::Unidentifiable,
        Error::Io(_) => BellpolStatus::Io,
        Error::Config { .. } | Error::Parse { .. } => BellpolStatus::Parse,
    }
}

enum Failure {
    Null(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BellpolStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            BellpolStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer passed as {what}"));
            BellpolStatus::NullPointer
        }
        Ok(Err(Failure::Engine(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            BellpolStatus::Panic
        }
    }
}

fn state_from(code: u32) -> Result<BellState, Error> {
    BellState::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("unknown state code {code}")))
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn model_ref<'a>(model: *const BellpolModel) -> Result<&'a BellpolModel, Failure> {
    model.as_ref().ok_or(Failure::Null("model"))
}

/// Creates a model of `state` at mean photon number `nbar` per mode with
/// `modes` independent quadruples, detection efficiency `eta`, and moments up
/// to order `k_max`.
///
/// # Safety
/// `out` must be a valid pointer; the handle it receives must be released
/// with [`bellpol_model_free`].
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_new(
    state: u32,
    nbar: f64,
    eta: f64,
    modes: u32,
    k_max: u32,
    out: *mut *mut BellpolModel,
) -> BellpolStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        out.write(ptr::null_mut());
        let spec = BellStateSpec::from_nbar(state_from(state)?, nbar, modes)?;
        let field = MomentField::new(&spec, eta, k_max as usize)?;
        let model = Box::new(BellpolModel { field, spec, eta });
        out.write(Box::into_raw(model));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`bellpol_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_free(model: *mut BellpolModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Noise-reduction factor at the waveplate angles (degrees).
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_nrf(
    model: *const BellpolModel,
    chi_h_deg: f64,
    chi_q_deg: f64,
    out: *mut f64,
) -> BellpolStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = direction_from_waveplates(&WaveplateSetting::from_degrees(chi_h_deg, chi_q_deg));
        let nrf = m.field.nrf(&d);
        if !nrf.is_finite() {
            return Err(Error::InvalidArgument("NRF is undefined for a dark beam".into()).into());
        }
        write(out, nrf, "out")
    })
}

/// Central moment of order `k` of the Stokes observable selected by the
/// waveplate angles (degrees).
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_central_moment(
    model: *const BellpolModel,
    chi_h_deg: f64,
    chi_q_deg: f64,
    k: u32,
    out: *mut f64,
) -> BellpolStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = direction_from_waveplates(&WaveplateSetting::from_degrees(chi_h_deg, chi_q_deg));
        write(out, m.field.central_moment(&d, k as usize)?, "out")
    })
}

/// Mean total intensity `⟨S0⟩`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_mean_s0(model: *const BellpolModel, out: *mut f64) -> BellpolStatus {
    guard(|| write(out, model_ref(model)?.field.mean_s0(), "out"))
}

/// Row-major 3×3 covariance of `(S1, S2, S3)`.
///
/// # Safety
/// `model` must be a live handle and `out` must point to 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_stokes_covariance(model: *const BellpolModel, out: *mut f64) -> BellpolStatus {
    guard(|| {
        let c = model_ref(model)?.field.covariance();
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        for i in 0..3 {
            for j in 0..3 {
                out.add(3 * i + j).write(c[(i, j)]);
            }
        }
        Ok(())
    })
}

/// Degree of polarization of order `order`. Orders above 2 are searched on
/// the waveplate grid with the given steps (degrees) and refined.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_dp(
    model: *const BellpolModel,
    order: u32,
    step_h_deg: f64,
    step_q_deg: f64,
    out: *mut f64,
) -> BellpolStatus {
    guard(|| {
        let m = model_ref(model)?;
        let grid = sphere_sweep(step_h_deg, step_q_deg)?;
        let r = dp_of_field(&m.field, order as usize, &grid, DEFAULT_REFINE_TOL)?;
        write(out, r.dp, "out")
    })
}

/// Closed-form `P2` of the model's state, efficiency and photon number.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_model_closed_form_p2(model: *const BellpolModel, out: *mut f64) -> BellpolStatus {
    guard(|| {
        let m = model_ref(model)?;
        write(out, closed_form_p2(m.spec.state, m.eta, m.spec.nbar()), "out")
    })
}

/// Closed-form `P2` without building a model.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_closed_form_p2(state: u32, eta: f64, nbar: f64, out: *mut f64) -> BellpolStatus {
    guard(|| {
        let s = state_from(state)?;
        if !(0.0..=1.0).contains(&eta) || nbar.is_nan() || nbar < 0.0 {
            return Err(Error::InvalidArgument(format!("eta = {eta}, nbar = {nbar} out of range")).into());
        }
        write(out, closed_form_p2(s, eta, nbar), "out")
    })
}

/// Even-order degree predicted from `P2` for Gaussian statistics.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bellpol_gaussian_limit_dp(p2: f64, order: u32, out: *mut f64) -> BellpolStatus {
    guard(|| write(out, gaussian_limit_dp(p2, order as usize)?, "out"))
}

/// Unit Stokes vector measured at the waveplate angles (degrees).
///
/// # Safety
/// `out` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn bellpol_direction_from_waveplates(
    chi_h_deg: f64,
    chi_q_deg: f64,
    out: *mut f64,
) -> BellpolStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let v = direction_from_waveplates(&WaveplateSetting::from_degrees(chi_h_deg, chi_q_deg)).unit_vector();
        for (i, c) in v.into_iter().enumerate() {
            out.add(i).write(c);
        }
        Ok(())
    })
}

/// Highest moment order a model can be built with.
#[no_mangle]
pub extern "C" fn bellpol_max_order() -> u32 {
    DEFAULT_MAX_ORDER as u32
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bellpol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bellpol_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
