//! C ABI for the nclasso estimators.
//!
//! Datasets and fits cross the boundary as opaque handles created by the
//! `nc_dataset_*` constructors and `nc_fit`, and released with the matching
//! `*_free`. Every fallible call
//! returns an [`NcStatus`]; the message of the most recent failure on the
//! calling thread is available from [`nc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nclasso::design_lab::{gen_theta0, Dataset, DesignSpec, NoiseSpec};
use nclasso::linalg::Matrix;
use nclasso::model_zoo::{loss_value, tukey_rho, LinkKind, ModelKind, ModelSpec};
use nclasso::rng::derive_seed;
use nclasso::solver::{lambda_for, manual_schedule, prox_gradient_fit, FitConfig, FitResult};
use nclasso::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcStatus {
    Ok = 0,
    InvalidArgument = 1,
    DimensionMismatch = 2,
    NumericalFailure = 3,
    UnsupportedDimension = 4,
    Io = 5,
    Parse = 6,
    NullPointer = 7,
    Panic = 8,
    /// The requested value is not available (e.g. errors without a known truth).
    Unavailable = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcModelKind {
    Robust = 0,
    Binary = 1,
    Nls = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NcLink {
    Logistic = 0,
    Tanh = 1,
}

/// Model selector. `t0` is read for the robust model, `noise_sd` for nls and
/// `link` for binary and nls.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NcModel {
    pub kind: NcModelKind,
    pub link: NcLink,
    pub t0: f64,
    pub noise_sd: f64,
}

/// Opaque dataset handle.
pub struct NcDataset(Dataset);

/// Opaque fit handle.
pub struct NcFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NcStatus {
    match e {
        Error::InvalidArgument(_) => NcStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => NcStatus::DimensionMismatch,
        Error::NumericalFailure { .. } => NcStatus::NumericalFailure,
        Error::UnsupportedDimension(_) => NcStatus::UnsupportedDimension,
        Error::Io { .. } => NcStatus::Io,
        Error::Parse { .. } => NcStatus::Parse,
    }
}

fn fail(status: NcStatus, msg: &str) -> NcStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), NcStatus>) -> NcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(NcStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: nclasso::Result<T>) -> Result<T, NcStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, NcStatus> {
    p.as_ref().ok_or_else(|| fail(NcStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, NcStatus> {
    p.as_mut().ok_or_else(|| fail(NcStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn path_of<'a>(p: *const c_char) -> Result<&'a Path, NcStatus> {
    if p.is_null() {
        return Err(fail(NcStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(NcStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn link_of(l: NcLink) -> LinkKind {
    match l {
        NcLink::Logistic => LinkKind::Logistic,
        NcLink::Tanh => LinkKind::Tanh,
    }
}

fn model_of(m: &NcModel) -> Result<ModelKind, NcStatus> {
    let kind = match m.kind {
        NcModelKind::Robust => ModelKind::Robust { t0: m.t0 },
        NcModelKind::Binary => ModelKind::Binary { link: link_of(m.link) },
        NcModelKind::Nls => ModelKind::Nls {
            link: link_of(m.link),
            noise_sd: m.noise_sd,
        },
    };
    lift(kind.validate())?;
    Ok(kind)
}

/// Null-terminated message of the last failure on this thread (empty if none).
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static null-terminated string.
#[no_mangle]
pub extern "C" fn nc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Tukey bisquare loss `rho(t)` with cutoff `t0`.
///
/// # Safety
/// `out` must be a valid pointer to a `double`.
#[no_mangle]
pub unsafe extern "C" fn nc_tukey_rho(t: f64, t0: f64, out: *mut f64) -> NcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = lift(tukey_rho(t, t0))?;
        Ok(())
    })
}

/// Simulates `n` rows with a Rademacher design of dimension `d`, an
/// `s0`-sparse truth of entries `+-magnitude`, and Gaussian noise with
/// standard deviation `noise_sd`.
///
/// # Safety
/// `model` must point to a valid `NcModel`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_generate(
    model: *const NcModel,
    n: usize,
    d: usize,
    s0: usize,
    magnitude: f64,
    noise_sd: f64,
    seed: u64,
    out: *mut *mut NcDataset,
) -> NcStatus {
    guard(|| {
        let kind = model_of(deref(model, "model")?)?;
        let out = out_ptr(out, "out")?;
        let theta0 = lift(gen_theta0(d, s0, magnitude, derive_seed(seed, "theta0", 0)))?;
        let spec = lift(ModelSpec::new(kind, theta0))?;
        let data = lift(Dataset::generate(
            &spec,
            &DesignSpec::rademacher(d, 1.0),
            &NoiseSpec::gaussian(noise_sd),
            n,
            derive_seed(seed, "data", 0),
        ))?;
        *out = Box::into_raw(Box::new(NcDataset(data)));
        Ok(())
    })
}

/// Builds a dataset from a row-major `n x d` design and `n` responses. The
/// truth is unknown, so fit errors are unavailable.
///
/// # Safety
/// `x` must hold `n * d` doubles, `y` must hold `n` doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_from_arrays(
    model: *const NcModel,
    x: *const f64,
    y: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut NcDataset,
) -> NcStatus {
    guard(|| {
        let kind = model_of(deref(model, "model")?)?;
        let out = out_ptr(out, "out")?;
        if x.is_null() || y.is_null() {
            return Err(fail(NcStatus::NullPointer, "x or y is null"));
        }
        if n == 0 || d == 0 {
            return Err(fail(NcStatus::InvalidArgument, "n and d must be >= 1"));
        }
        let xs = std::slice::from_raw_parts(x, n * d).to_vec();
        let ys = std::slice::from_raw_parts(y, n).to_vec();
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(fail(NcStatus::InvalidArgument, "design entries must be finite"));
        }
        for &yi in &ys {
            lift(loss_value(&kind, 0.0, yi))?;
        }
        let data = Dataset {
            x: lift(Matrix::from_vec(n, d, xs))?,
            y: ys,
            model: kind,
            theta0: None,
            design: None,
            seed: 0,
        };
        *out = Box::into_raw(Box::new(NcDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `model` and `path` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_read(model: *const NcModel, path: *const c_char, out: *mut *mut NcDataset) -> NcStatus {
    guard(|| {
        let kind = model_of(deref(model, "model")?)?;
        let path = path_of(path)?;
        let out = out_ptr(out, "out")?;
        let data = lift(Dataset::read(path, Some(kind)))?;
        *out = Box::into_raw(Box::new(NcDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `data` must be a live dataset handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_write(data: *const NcDataset, path: *const c_char) -> NcStatus {
    guard(|| {
        let data = deref(data, "data")?;
        lift(data.0.write(path_of(path)?))
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_n(data: *const NcDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_d(data: *const NcDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.d())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nc_dataset_free(data: *mut NcDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Default penalty of the dataset's model at its size and design bound.
///
/// # Safety
/// `data` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_default_lambda(data: *const NcDataset, out: *mut f64) -> NcStatus {
    guard(|| {
        let data = &deref(data, "data")?.0;
        let out = out_ptr(out, "out")?;
        *out = lift(lambda_for(&data.model, data.n(), data.d(), data.m_x()))?.lambda;
        Ok(())
    })
}

/// Best-of-restarts proximal gradient fit with default settings and penalty
/// `lambda`; `seed` drives the random restarts.
///
/// # Safety
/// `data` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_fit(data: *const NcDataset, lambda: f64, seed: u64, out: *mut *mut NcFit) -> NcStatus {
    guard(|| {
        let data = &deref(data, "data")?.0;
        let out = out_ptr(out, "out")?;
        let schedule = lift(manual_schedule(&data.model, lambda, data.n(), data.d(), data.m_x()))?;
        let config = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let fit = lift(prox_gradient_fit(&data.model, data, &schedule, &config))?;
        *out = Box::into_raw(Box::new(NcFit(fit)));
        Ok(())
    })
}

/// Length of the coefficient vector, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn nc_fit_dim(fit: *const NcFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.theta_hat.len())
}

/// Copies the coefficients into `buf`, which must hold `len >= nc_fit_dim(fit)` doubles.
///
/// # Safety
/// `fit` must be a live fit handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nc_fit_theta(fit: *const NcFit, buf: *mut f64, len: usize) -> NcStatus {
    guard(|| {
        let theta = &deref(fit, "fit")?.0.theta_hat;
        if buf.is_null() {
            return Err(fail(NcStatus::NullPointer, "buf is null"));
        }
        if len < theta.len() {
            return Err(fail(
                NcStatus::DimensionMismatch,
                &format!("buffer holds {len} values, need {}", theta.len()),
            ));
        }
        ptr::copy_nonoverlapping(theta.as_ptr(), buf, theta.len());
        Ok(())
    })
}

/// Summary of a fit.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct NcFitSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub prox_residual: f64,
    pub restart_index: usize,
    pub support_size: usize,
}

/// # Safety
/// `fit` must be a live fit handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_fit_summary(fit: *const NcFit, out: *mut NcFitSummary) -> NcStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.0;
        *out_ptr(out, "out")? = NcFitSummary {
            objective: f.objective,
            iterations: f.iterations,
            converged: f.converged,
            prox_residual: f.prox_residual,
            restart_index: f.restart_index,
            support_size: f.support.len(),
        };
        Ok(())
    })
}

/// l1 and l2 distances to the truth; `Unavailable` when the truth is unknown.
///
/// # Safety
/// `fit` must be a live fit handle; `l1` and `l2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nc_fit_errors(fit: *const NcFit, l1: *mut f64, l2: *mut f64) -> NcStatus {
    guard(|| {
        let f = &deref(fit, "fit")?.0;
        let (l1, l2) = (out_ptr(l1, "l1")?, out_ptr(l2, "l2")?);
        match (f.err_l1, f.err_l2) {
            (Some(a), Some(b)) => {
                *l1 = a;
                *l2 = b;
                Ok(())
            }
            _ => Err(fail(NcStatus::Unavailable, "the dataset has no known truth")),
        }
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nc_fit_free(fit: *mut NcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
