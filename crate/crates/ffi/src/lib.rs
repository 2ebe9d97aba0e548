//! C ABI for amprlab.
//!
//! Every fallible function returns an [`AmprlabStatus`]; on failure the
//! message is available from [`amprlab_last_error`] on the same thread.
//! Instances and AMPR results are opaque handles released with their
//! `_free` function. `mu_b` arguments accept `INFINITY`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use amprlab::{
    bootstrap_statistics, minimize_variance, run_ampr, run_gamp, run_se, se_variance, unbiased_estimate, AmprState,
    BootstrapSize, DenoiserParams, Error, GammaMode, HyperoptOptions, OptDomain, ProblemInstance, Psi, SeInit, SeModel,
    SeOptions, SignalPrior, SolverOptions, SweepRecord, Weights,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmprlabStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Diverged = 3,
    InfeasibleDomain = 4,
    InvalidStart = 5,
    DegenerateSample = 6,
    Config = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AmprlabStatus {
    match err {
        Error::InvalidArgument(_) => AmprlabStatus::InvalidArgument,
        Error::Diverged { .. } => AmprlabStatus::Diverged,
        Error::InfeasibleDomain(_) => AmprlabStatus::InfeasibleDomain,
        Error::InvalidStart => AmprlabStatus::InvalidStart,
        Error::DegenerateSample => AmprlabStatus::DegenerateSample,
        Error::Config(_) => AmprlabStatus::Config,
        Error::Io(_) => AmprlabStatus::Io,
    }
}

fn fail(status: AmprlabStatus, msg: impl Into<String>) -> AmprlabStatus {
    set_error(msg.into());
    status
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), AmprlabStatus>) -> AmprlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AmprlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(AmprlabStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, AmprlabStatus>;
}

impl<T> OrStatus<T> for amprlab::Result<T> {
    fn or_status(self) -> Result<T, AmprlabStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, AmprlabStatus> {
    p.as_mut()
        .ok_or_else(|| fail(AmprlabStatus::NullPointer, format!("{name} is null")))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, AmprlabStatus> {
    p.as_ref()
        .ok_or_else(|| fail(AmprlabStatus::NullPointer, format!("{name} is null")))
}

unsafe fn in_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], AmprlabStatus> {
    if p.is_null() {
        return Err(fail(AmprlabStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), AmprlabStatus> {
    if dst.is_null() {
        return Err(fail(AmprlabStatus::NullPointer, "output buffer is null"));
    }
    if len < src.len() {
        return Err(fail(
            AmprlabStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    Ok(())
}

fn mu_b(value: f64) -> Result<BootstrapSize, AmprlabStatus> {
    if value == f64::INFINITY {
        Ok(BootstrapSize::INFINITE)
    } else {
        BootstrapSize::new(value).or_status()
    }
}

fn params(lambda: f64, gamma: f64) -> Result<DenoiserParams, AmprlabStatus> {
    DenoiserParams::new(lambda, gamma).or_status()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn amprlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---------------------------------------------------------------- scalars

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabSmoothedMoments {
    pub m1: f64,
    pub m2: f64,
    pub mderiv: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabResamplingMoments {
    pub f1: f64,
    pub f2: f64,
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_denoise(h: f64, qhat: f64, lambda: f64, gamma: f64, out: *mut f64) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = amprlab::denoise(h, qhat, &params(lambda, gamma)?).or_status()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_denoise_deriv(
    h: f64,
    qhat: f64,
    lambda: f64,
    gamma: f64,
    out: *mut f64,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = amprlab::denoise_deriv(h, qhat, &params(lambda, gamma)?).or_status()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_smoothed_moments(
    h: f64,
    vhat: f64,
    qhat: f64,
    lambda: f64,
    gamma: f64,
    out: *mut AmprlabSmoothedMoments,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let m = amprlab::smoothed_moments(h, vhat, qhat, &params(lambda, gamma)?).or_status()?;
        *out = AmprlabSmoothedMoments {
            m1: m.m1,
            m2: m.m2,
            mderiv: m.mderiv,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_poisson_moments(
    chi: f64,
    mu_b_value: f64,
    out: *mut AmprlabResamplingMoments,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let f = amprlab::poisson_moments(chi, mu_b(mu_b_value)?).or_status()?;
        *out = AmprlabResamplingMoments { f1: f.f1, f2: f.f2 };
        Ok(())
    })
}

// -------------------------------------------------------------- instances

/// Opaque problem instance.
pub struct AmprlabInstance(ProblemInstance);

#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_sample(
    n: usize,
    alpha: f64,
    delta: f64,
    rho: f64,
    seed: u64,
    out: *mut *mut AmprlabInstance,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let prior = SignalPrior::new(rho).or_status()?;
        let inst = amprlab::sample_instance(n, alpha, delta, prior, seed).or_status()?;
        *out = Box::into_raw(Box::new(AmprlabInstance(inst)));
        Ok(())
    })
}

/// Copy caller buffers into a new instance; `x` is `m·n` values, row-major.
#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_from_parts(
    m: usize,
    n: usize,
    x: *const f64,
    y: *const f64,
    w0: *const f64,
    delta: f64,
    out: *mut *mut AmprlabInstance,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = m
            .checked_mul(n)
            .ok_or_else(|| fail(AmprlabStatus::InvalidArgument, "m*n overflows"))?;
        let inst = ProblemInstance::from_row_major(
            m,
            n,
            in_slice(x, len, "x")?.to_vec(),
            in_slice(y, m, "y")?.to_vec(),
            in_slice(w0, n, "w0")?.to_vec(),
            delta,
        )
        .or_status()?;
        *out = Box::into_raw(Box::new(AmprlabInstance(inst)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_load(path: *const c_char, out: *mut *mut AmprlabInstance) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = path_arg(path)?;
        let inst = ProblemInstance::load(Path::new(path)).or_status()?;
        *out = Box::into_raw(Box::new(AmprlabInstance(inst)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_save(inst: *const AmprlabInstance, path: *const c_char) -> AmprlabStatus {
    guard(|| {
        let inst = in_ref(inst, "inst")?;
        inst.0.save(Path::new(path_arg(path)?)).or_status()
    })
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, AmprlabStatus> {
    if path.is_null() {
        return Err(fail(AmprlabStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(AmprlabStatus::InvalidArgument, "path is not UTF-8"))
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_dims(
    inst: *const AmprlabInstance,
    m: *mut usize,
    n: *mut usize,
) -> AmprlabStatus {
    guard(|| {
        let inst = in_ref(inst, "inst")?;
        *out_ref(m, "m")? = inst.0.m();
        *out_ref(n, "n")? = inst.0.n();
        Ok(())
    })
}

/// Copy the true signal `w0` (`n` values).
#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_signal(
    inst: *const AmprlabInstance,
    buf: *mut f64,
    len: usize,
) -> AmprlabStatus {
    guard(|| copy_out(in_ref(inst, "inst")?.0.w0.as_slice().expect("contiguous"), buf, len))
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_instance_free(inst: *mut AmprlabInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

// ----------------------------------------------------------------- solvers

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmprlabSolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    pub init_qhat: f64,
    pub init_vhat: f64,
}

impl From<AmprlabSolverOptions> for SolverOptions {
    fn from(o: AmprlabSolverOptions) -> Self {
        SolverOptions {
            max_iters: o.max_iters,
            tol: o.tol,
            damping: o.damping,
            init_qhat: o.init_qhat,
            init_vhat: o.init_vhat,
            init_h: None,
        }
    }
}

#[no_mangle]
pub extern "C" fn amprlab_solver_options_default() -> AmprlabSolverOptions {
    let d = SolverOptions::default();
    AmprlabSolverOptions {
        max_iters: d.max_iters,
        tol: d.tol,
        damping: d.damping,
        init_qhat: d.init_qhat,
        init_vhat: d.init_vhat,
    }
}

unsafe fn solver_opts(opts: *const AmprlabSolverOptions) -> SolverOptions {
    opts.as_ref().map_or_else(SolverOptions::default, |o| (*o).into())
}

/// Opaque AMPR fixed point.
pub struct AmprlabAmprResult {
    state: AmprState,
    alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabAmprSummary {
    pub qhat: f64,
    pub vhat: f64,
    pub chi: f64,
    pub v: f64,
    /// Data-driven variance of the averaged unbiased estimator.
    pub sigma2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-coordinate vectors of an AMPR result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmprlabField {
    H = 0,
    A = 1,
    WHat = 2,
    RHat = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmprlabPsi {
    Identity = 0,
    Square = 1,
}

/// Run AMPR. `opts` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn amprlab_run_ampr(
    inst: *const AmprlabInstance,
    lambda: f64,
    gamma: f64,
    mu_b_value: f64,
    opts: *const AmprlabSolverOptions,
    out: *mut *mut AmprlabAmprResult,
) -> AmprlabStatus {
    guard(|| {
        let inst = &in_ref(inst, "inst")?.0;
        let out = out_ref(out, "out")?;
        let state = run_ampr(inst, &params(lambda, gamma)?, mu_b(mu_b_value)?, &solver_opts(opts)).or_status()?;
        *out = Box::into_raw(Box::new(AmprlabAmprResult {
            state,
            alpha: inst.alpha(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_ampr_summary(
    res: *const AmprlabAmprResult,
    out: *mut AmprlabAmprSummary,
) -> AmprlabStatus {
    guard(|| {
        let res = in_ref(res, "res")?;
        let out = out_ref(out, "out")?;
        let est = unbiased_estimate(&res.state, res.alpha).or_status()?;
        *out = AmprlabAmprSummary {
            qhat: res.state.qhat,
            vhat: res.state.vhat,
            chi: res.state.chi,
            v: res.state.v,
            sigma2: est.sigma2,
            iterations: res.state.iter,
            converged: res.state.converged,
        };
        Ok(())
    })
}

/// Copy one per-coordinate vector; `A` has `m` entries, the others `n`.
#[no_mangle]
pub unsafe extern "C" fn amprlab_ampr_field(
    res: *const AmprlabAmprResult,
    field: AmprlabField,
    buf: *mut f64,
    len: usize,
) -> AmprlabStatus {
    guard(|| {
        let s = &in_ref(res, "res")?.state;
        let r_hat;
        let v = match field {
            AmprlabField::H => &s.h,
            AmprlabField::A => &s.a,
            AmprlabField::WHat => &s.w_hat,
            AmprlabField::RHat => {
                r_hat = &s.h / s.qhat;
                &r_hat
            }
        };
        copy_out(v.as_slice().expect("contiguous"), buf, len)
    })
}

/// Bootstrap average of `ψ` applied to each coordinate (`n` values).
#[no_mangle]
pub unsafe extern "C" fn amprlab_ampr_bootstrap_statistics(
    res: *const AmprlabAmprResult,
    psi: AmprlabPsi,
    buf: *mut f64,
    len: usize,
) -> AmprlabStatus {
    guard(|| {
        let s = &in_ref(res, "res")?.state;
        let psi = match psi {
            AmprlabPsi::Identity => Psi::Identity,
            AmprlabPsi::Square => Psi::Square,
        };
        copy_out(bootstrap_statistics(s, psi).as_slice().expect("contiguous"), buf, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn amprlab_ampr_free(res: *mut AmprlabAmprResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabGampSummary {
    pub qhat: f64,
    pub chi: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Run weighted GAMP and copy the estimate into `w_out` (`n` values).
/// `weights` may be null for uniform weights; otherwise it holds `m` values.
#[no_mangle]
pub unsafe extern "C" fn amprlab_run_gamp(
    inst: *const AmprlabInstance,
    lambda: f64,
    gamma: f64,
    weights: *const f64,
    opts: *const AmprlabSolverOptions,
    w_out: *mut f64,
    w_len: usize,
    out: *mut AmprlabGampSummary,
) -> AmprlabStatus {
    guard(|| {
        let inst = &in_ref(inst, "inst")?.0;
        let out = out_ref(out, "out")?;
        let weights = if weights.is_null() {
            Weights::Uniform
        } else {
            Weights::Explicit(in_slice(weights, inst.m(), "weights")?.to_vec())
        };
        let s = run_gamp(inst, &params(lambda, gamma)?, &weights, &solver_opts(opts)).or_status()?;
        copy_out(s.w_hat.as_slice().expect("contiguous"), w_out, w_len)?;
        *out = AmprlabGampSummary {
            qhat: s.qhat,
            chi: s.chi,
            iterations: s.iter,
            converged: s.converged,
        };
        Ok(())
    })
}

// --------------------------------------------------------- state evolution

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AmprlabSeModel {
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub mu_b: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabSeResult {
    pub mse: f64,
    pub chi: f64,
    pub v: f64,
    pub qhat: f64,
    pub chihat: f64,
    pub vhat: f64,
    pub sigma2: f64,
    pub iterations: usize,
    pub converged: bool,
}

unsafe fn se_model(m: *const AmprlabSeModel) -> Result<SeModel, AmprlabStatus> {
    let m = in_ref(m, "model")?;
    Ok(SeModel {
        alpha: m.alpha,
        delta: m.delta,
        prior: SignalPrior::new(m.rho).or_status()?,
        params: params(m.lambda, m.gamma)?,
        mu_b: mu_b(m.mu_b)?,
    })
}

/// Run the state evolution from the standard start with default options.
#[no_mangle]
pub unsafe extern "C" fn amprlab_run_se(model: *const AmprlabSeModel, out: *mut AmprlabSeResult) -> AmprlabStatus {
    guard(|| {
        let model = se_model(model)?;
        let out = out_ref(out, "out")?;
        let s = run_se(&model, &SeInit::standard(&model.prior), &SeOptions::default()).or_status()?;
        *out = AmprlabSeResult {
            mse: s.mse,
            chi: s.chi,
            v: s.v,
            qhat: s.qhat,
            chihat: s.chihat,
            vhat: s.vhat,
            sigma2: se_variance(&s),
            iterations: s.iter,
            converged: s.converged,
        };
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AmprlabOptimum {
    /// `INFINITY` when resampling does not help.
    pub mu_b_star: f64,
    pub lambda_star: f64,
    pub gamma_star: f64,
    pub sigma2_star: f64,
    pub s2_star: f64,
    pub ratio: f64,
    pub unique_frac: f64,
    pub interpolator: bool,
}

/// Minimize the predicted variance over `(μ_B, λ)` (and `γ` when `gamma`
/// is NaN) with `restarts` starting points.
#[no_mangle]
pub unsafe extern "C" fn amprlab_minimize_variance(
    alpha: f64,
    delta: f64,
    rho: f64,
    gamma: f64,
    restarts: usize,
    out: *mut AmprlabOptimum,
) -> AmprlabStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let prior = SignalPrior::new(rho).or_status()?;
        let domain = OptDomain {
            gamma_mode: if gamma.is_nan() {
                GammaMode::Free
            } else {
                GammaMode::Fixed(gamma)
            },
            ..OptDomain::default()
        };
        let opts = HyperoptOptions {
            restarts,
            ..HyperoptOptions::default()
        };
        let cell = minimize_variance(alpha, delta, prior, &domain, &opts).or_status()?;
        let r = SweepRecord::from_cell(rho, alpha, &cell);
        *out = AmprlabOptimum {
            mu_b_star: r.mu_b_star,
            lambda_star: r.lambda_star,
            gamma_star: r.gamma_star,
            sigma2_star: r.sigma2_star,
            s2_star: r.s2_star,
            ratio: r.ratio,
            unique_frac: r.unique_frac,
            interpolator: r.phase_label == amprlab::PhaseLabel::Interpolator,
        };
        Ok(())
    })
}
