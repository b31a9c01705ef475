//! C ABI over `qrelax`.
//!
//! Conventions:
//! - Every fallible function returns a [`QrStatus`]; results come back
//!   through out-pointers that are written only on success (`len_out` is
//!   the exception, see below).
//! - Objects are opaque handles created by `*_new`/`*_simulate`/`*_run`
//!   and released with the matching `*_free`. Passing `NULL` to a `*_free`
//!   is a no-op.
//! - On failure a description is kept per thread; read it with
//!   [`qr_last_error_message`].
//! - Array accessors copy into caller buffers. They report the required
//!   length through `len_out` and fail with `QR_STATUS_BUFFER_TOO_SMALL` if the
//!   buffer is shorter; pass `NULL` with capacity 0 to query the length.
//! - Level indices are 1-based, as in the library.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qrelax::ensemble::{self, EnsembleOptions, EnsembleSummary};
use qrelax::filtering::{self, FilteredTrajectory, OutcomeMode, Prior, SdeConfig, TimeGrid};
use qrelax::relaxation::{self, RelaxQuery};
use qrelax::spectrum::{self, WellModel};
use qrelax::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    InvalidConfig = 3,
    EmptyRow = 4,
    DegenerateLevels = 5,
    NotReal = 6,
    GridMismatch = 7,
    NotNormalised = 8,
    WrongMode = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Per-time series of a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrSeries {
    Time = 0,
    Brownian = 1,
    Information = 2,
    Energy = 3,
    Variance = 4,
    Innovations = 5,
}

/// Energy spectrum and quench prior of an expanded well in dimensionless
/// units.
pub struct QrModel {
    model: WellModel,
}

pub struct QrTrajectory {
    inner: FilteredTrajectory,
}

pub struct QrEnsemble {
    inner: EnsembleSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

fn status_of(err: &Error) -> QrStatus {
    match err {
        Error::Domain(_) => QrStatus::Domain,
        Error::InvalidConfig { .. } => QrStatus::InvalidConfig,
        Error::EmptyRow => QrStatus::EmptyRow,
        Error::DegenerateLevels => QrStatus::DegenerateLevels,
        Error::NotReal(_) => QrStatus::NotReal,
        Error::GridMismatch(_) => QrStatus::GridMismatch,
        Error::NotNormalised(_) => QrStatus::NotNormalised,
        Error::WrongMode(_) => QrStatus::WrongMode,
        Error::Io(_) => QrStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Status(QrStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null() -> Fail {
    Fail::Status(QrStatus::NullPointer, "null pointer argument".into())
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QrStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            QrStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

/// Copy `src` to `(buf, cap)`, reporting `src.len()` through `len_out`.
unsafe fn copy_out<T: Copy>(
    src: &[T],
    buf: *mut T,
    cap: usize,
    len_out: *mut usize,
) -> Result<(), Fail> {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    if buf.is_null() {
        if cap == 0 {
            return Ok(());
        }
        return Err(null());
    }
    if cap < src.len() {
        return Err(Fail::Status(
            QrStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the untruncated length without the NUL.
///
/// # Safety
/// `buf` must be NULL or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn qr_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Probability of landing in level `m` of the expanded well from level `n`.
///
/// # Safety
/// `out_p` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_transition_probability(
    n: usize,
    m: usize,
    alpha: f64,
    out_p: *mut f64,
) -> QrStatus {
    guard(|| {
        let o = out(out_p)?;
        *o = spectrum::transition_probability(n, m, alpha)?;
        Ok(())
    })
}

/// Standard normal CDF.
#[no_mangle]
pub extern "C" fn qr_normal_cdf(x: f64) -> f64 {
    relaxation::normal_cdf(x)
}

/// # Safety
/// `out_x` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_inverse_normal_cdf(p: f64, out_x: *mut f64) -> QrStatus {
    guard(|| {
        let o = out(out_x)?;
        *o = relaxation::inverse_normal_cdf(p)?;
        Ok(())
    })
}

/// Relaxation time for terminal level `j`.
///
/// # Safety
/// `out_tau` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_tau_r(
    alpha: f64,
    sigma: f64,
    j: usize,
    lambda: f64,
    confidence: f64,
    out_tau: *mut f64,
) -> QrStatus {
    guard(|| {
        let o = out(out_tau)?;
        *o = relaxation::tau_r(&RelaxQuery::new(alpha, sigma, j, lambda, confidence)?)?;
        Ok(())
    })
}

/// New dimensionless model of a well expanded by `alpha`, truncated at
/// `truncation` levels.
///
/// # Safety
/// `out_model` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_model_new(
    alpha: f64,
    truncation: usize,
    out_model: *mut *mut QrModel,
) -> QrStatus {
    guard(|| {
        let o = out(out_model)?;
        let model = WellModel::dimensionless(alpha, truncation)?;
        *o = Box::into_raw(Box::new(QrModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`qr_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qr_model_free(model: *mut QrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Energies `E_1..E_N` of the expanded well.
///
/// # Safety
/// `model` must be a live handle; `buf` NULL or valid for `cap` values;
/// `len_out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_model_energies(
    model: *const QrModel,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| copy_out(&handle(model)?.model.energies(), buf, cap, len_out))
}

/// Normalised quench prior from level `n` over the truncation.
///
/// # Safety
/// As for [`qr_model_energies`].
#[no_mangle]
pub unsafe extern "C" fn qr_model_prior(
    model: *const QrModel,
    n: usize,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| {
        let prior = Prior::for_model(n, &handle(model)?.model)?;
        copy_out(&prior.probs, buf, cap, len_out)
    })
}

fn mode(outcome: usize) -> OutcomeMode {
    if outcome == 0 {
        OutcomeMode::Sample
    } else {
        OutcomeMode::Forced(outcome)
    }
}

/// Simulate trajectory `index` of stream `seed` from level `n` on a uniform
/// grid of `steps` intervals up to `t_end`. `outcome` 0 samples the
/// terminal level; otherwise the run is conditioned on that level.
///
/// # Safety
/// `model` must be a live handle; `out_traj` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_simulate(
    model: *const QrModel,
    n: usize,
    sigma: f64,
    t_end: f64,
    steps: usize,
    seed: u64,
    index: u64,
    outcome: usize,
    out_traj: *mut *mut QrTrajectory,
) -> QrStatus {
    guard(|| {
        let o = out(out_traj)?;
        let prior = Prior::for_model(n, &handle(model)?.model)?;
        let config = SdeConfig::new(sigma, TimeGrid::uniform(t_end, steps)?, seed, mode(outcome))?;
        let inner = filtering::simulate_trajectory(&prior, &config, index)?;
        *o = Box::into_raw(Box::new(QrTrajectory { inner }));
        Ok(())
    })
}

/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_free(traj: *mut QrTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of grid points, or 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_len(traj: *const QrTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.times().len())
}

/// Terminal level (1-based), or 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_outcome(traj: *const QrTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.outcome)
}

/// Copy one series of the trajectory.
///
/// # Safety
/// `traj` must be a live handle; `buf` NULL or valid for `cap` values;
/// `len_out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_series(
    traj: *const QrTrajectory,
    series: QrSeries,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| {
        let t = &handle(traj)?.inner;
        let src: &[f64] = match series {
            QrSeries::Time => t.times(),
            QrSeries::Brownian => &t.b_path,
            QrSeries::Information => &t.xi_path,
            QrSeries::Energy => &t.h_path,
            QrSeries::Variance => &t.v_path,
            QrSeries::Innovations => &t.w_path,
        };
        copy_out(src, buf, cap, len_out)
    })
}

/// Posterior over levels at grid point `k`.
///
/// # Safety
/// As for [`qr_trajectory_series`].
#[no_mangle]
pub unsafe extern "C" fn qr_trajectory_posterior(
    traj: *const QrTrajectory,
    k: usize,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| {
        let t = &handle(traj)?.inner;
        let row = t
            .posterior
            .get(k)
            .ok_or_else(|| Fail::Lib(Error::Domain(format!("grid index {k} out of range"))))?;
        copy_out(row, buf, cap, len_out)
    })
}

/// Run `runs` sampled trajectories from level `n` on the default checkpoint
/// grid. `threads` 0 lets the library choose; results do not depend on it.
///
/// # Safety
/// `model` must be a live handle; `out_ens` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_run(
    model: *const QrModel,
    n: usize,
    sigma: f64,
    runs: usize,
    seed: u64,
    threads: usize,
    out_ens: *mut *mut QrEnsemble,
) -> QrStatus {
    guard(|| {
        let o = out(out_ens)?;
        let model = &handle(model)?.model;
        let prior = Prior::for_model(n, model)?;
        let tau = ensemble::relaxation_horizon(&prior, model.alpha, sigma, OutcomeMode::Sample)?;
        let config = SdeConfig::new(
            sigma,
            ensemble::default_checkpoints(tau)?,
            seed,
            OutcomeMode::Sample,
        )?;
        let opts = EnsembleOptions {
            threads,
            ..Default::default()
        };
        let inner = ensemble::run_ensemble(model, n, &config, runs, &opts)?;
        *o = Box::into_raw(Box::new(QrEnsemble { inner }));
        Ok(())
    })
}

/// # Safety
/// `ens` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_free(ens: *mut QrEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Checkpoint times, mean energy and its standard error. Each buffer holds
/// `cap` values; any of them may be NULL to skip it.
///
/// # Safety
/// `ens` must be a live handle; non-NULL buffers valid for `cap` values;
/// `len_out` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_mean_energy(
    ens: *const QrEnsemble,
    times: *mut f64,
    mean: *mut f64,
    se: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| {
        let s = &handle(ens)?.inner;
        for (src, dst) in [
            (&s.checkpoint_times, times),
            (&s.mean_h, mean),
            (&s.se_h, se),
        ] {
            if !dst.is_null() {
                copy_out(src, dst, cap, ptr::null_mut())?;
            }
        }
        if !len_out.is_null() {
            *len_out = s.checkpoint_times.len();
        }
        Ok(())
    })
}

/// Number of runs that ended in each level.
///
/// # Safety
/// As for [`qr_model_energies`].
#[no_mangle]
pub unsafe extern "C" fn qr_ensemble_outcome_counts(
    ens: *const QrEnsemble,
    buf: *mut usize,
    cap: usize,
    len_out: *mut usize,
) -> QrStatus {
    guard(|| copy_out(&handle(ens)?.inner.outcome_counts, buf, cap, len_out))
}
