//! Approximate message passing with resampling (AMPR).
//!
//! A single run of AMPR reaches a fixed point whose field `h` encodes the
//! bootstrap average of the per-realization GAMP estimators: `r̂ = h/Q̂` is
//! the averaged unbiased estimator, and `E_η[ψ(g(h_i + √v̂·η, Q̂))]` gives
//! the bootstrap statistics of the weighted elastic-net solution.

use ndarray::{Array1, Zip};
use serde::{Deserialize, Serialize};

use crate::data::ProblemInstance;
use crate::error::{invalid, Error, LastState, Result};
use crate::kernels::{poisson_moments_unchecked, smoothed_moments_unchecked, BootstrapSize, DenoiserParams};
use crate::linalg::{adjoint, forward, norm2};

/// Iteration controls shared by the AMPR and GAMP solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Tolerance on `‖ŵ_{t+1} − ŵ_t‖₂ / max(‖ŵ_t‖₂, 1e-12)`.
    pub tol: f64,
    /// New iterates are blended as `(1−d)·new + d·old` on `ŵ`, `a` and `h`.
    pub damping: f64,
    pub init_qhat: f64,
    /// Ignored at `μ_B = ∞`, where `v̂` is identically zero.
    pub init_vhat: f64,
    /// Starting field; zeros when `None`.
    pub init_h: Option<Array1<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            damping: 0.0,
            init_qhat: 1.0,
            init_vhat: 1.0,
            init_h: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.init_qhat.is_finite() && self.init_qhat > 0.0) {
            return Err(invalid("init_qhat must be positive"));
        }
        if !(self.init_vhat.is_finite() && self.init_vhat >= 0.0) {
            return Err(invalid("init_vhat must be >= 0"));
        }
        if let Some(h) = &self.init_h {
            if h.len() != n {
                return Err(invalid(format!("init_h has length {}, expected {n}", h.len())));
            }
        }
        Ok(())
    }
}

/// Iterate of AMPR at step `t`: the field `(h_t, Q̂_t, v̂_t)`, the residual
/// `a_t` that produced it, and the averaged estimate with its overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct AmprState {
    pub h: Array1<f64>,
    pub a: Array1<f64>,
    pub w_hat: Array1<f64>,
    pub qhat: f64,
    pub vhat: f64,
    pub chi: f64,
    pub v: f64,
    /// Resampling moments evaluated at `chi`.
    pub f1: f64,
    pub f2: f64,
    pub iter: usize,
    pub converged: bool,
    pub alpha_n: f64,
    pub params: DenoiserParams,
    pub mu_b: BootstrapSize,
}

/// `r̂ = h/Q̂` with its variance estimated from the data alone.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasedEstimate {
    pub r_hat: Array1<f64>,
    /// `α⟨a²⟩/Q̂²`, with `⟨a²⟩` averaged over the `M` rows.
    pub sigma2: f64,
    /// `v̂/Q̂²`: variance of the resampling component of the noise.
    pub vhat_over_qhat2: f64,
}

/// Scalar function applied to the bootstrap replicate before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psi {
    Identity,
    Square,
}

impl std::str::FromStr for Psi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            other => Err(invalid(format!("unsupported psi {other:?}"))),
        }
    }
}

fn rel_change(new: &Array1<f64>, old: &Array1<f64>) -> f64 {
    let diff = Zip::from(new).and(old).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    diff.sqrt() / norm2(old.view()).max(1e-12)
}

fn blend(new: Array1<f64>, old: &Array1<f64>, damping: f64) -> Array1<f64> {
    if damping == 0.0 {
        return new;
    }
    let mut out = new;
    Zip::from(&mut out)
        .and(old)
        .for_each(|n, &o| *n = (1.0 - damping) * *n + damping * o);
    out
}

/// Averaged denoiser output and the overlaps `χ = ⟨E_η g′⟩`,
/// `v = ⟨E_η g² − (E_η g)²⟩`.
fn smoothed_field(h: &Array1<f64>, vhat: f64, qhat: f64, params: &DenoiserParams) -> (Array1<f64>, f64, f64) {
    let n = h.len() as f64;
    let mut w = Array1::zeros(h.len());
    let (mut chi, mut v) = (0.0, 0.0);
    Zip::from(&mut w).and(h).for_each(|w, &hi| {
        let m = smoothed_moments_unchecked(hi, vhat, qhat, params);
        *w = m.m1;
        chi += m.mderiv;
        v += m.variance();
    });
    (w, chi / n, (v / n).max(0.0))
}

/// Run AMPR on `instance` for bootstrap size `mu_b`.
///
/// Reaching `max_iters` is not an error: the returned state has
/// `converged == false`. A non-finite iterate aborts with
/// [`Error::Diverged`] carrying the last finite state.
pub fn run_ampr(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    mu_b: BootstrapSize,
    opts: &SolverOptions,
) -> Result<AmprState> {
    run_ampr_traced(instance, params, mu_b, opts, |_| {})
}

/// [`run_ampr`], calling `trace` with the state of every iteration.
pub fn run_ampr_traced(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    mu_b: BootstrapSize,
    opts: &SolverOptions,
    mut trace: impl FnMut(&AmprState),
) -> Result<AmprState> {
    params.validate()?;
    opts.validate(instance.n())?;
    let alpha = instance.alpha();
    let m = instance.m();
    let x = instance.x.view();

    let mut h = opts.init_h.clone().unwrap_or_else(|| Array1::zeros(instance.n()));
    let mut a = Array1::<f64>::zeros(m);
    let mut qhat = opts.init_qhat;
    let mut vhat = if mu_b.is_infinite() { 0.0 } else { opts.init_vhat };
    let mut prev: Option<AmprState> = None;

    for t in 0..=opts.max_iters {
        let (w_new, chi, v) = smoothed_field(&h, vhat, qhat, params);
        let w_hat = match &prev {
            Some(p) => blend(w_new, &p.w_hat, opts.damping),
            None => w_new,
        };
        let f = poisson_moments_unchecked(chi, mu_b);
        if !(chi.is_finite() && v.is_finite() && f.f1.is_finite()) || w_hat.iter().any(|w| !w.is_finite()) {
            return Err(diverged(t, prev));
        }
        let converged = prev.as_ref().is_some_and(|p| rel_change(&w_hat, &p.w_hat) < opts.tol);
        let state = AmprState {
            h,
            a,
            w_hat,
            qhat,
            vhat,
            chi,
            v,
            f1: f.f1,
            f2: f.f2,
            iter: t,
            converged,
            alpha_n: alpha,
            params: *params,
            mu_b,
        };
        trace(&state);
        if converged || t == opts.max_iters {
            return Ok(state);
        }

        // residual with Onsager correction, then the new field
        let qhat_next = alpha * f.f1;
        let mut a_next = forward(x, state.w_hat.view());
        Zip::from(&mut a_next)
            .and(&instance.y)
            .and(&state.a)
            .for_each(|an, &y, &ap| *an = f.f1 * (y - *an + chi * ap));
        let mut h_next = adjoint(x, a_next.view());
        h_next.scaled_add(qhat_next, &state.w_hat);
        let mean_a2 = a_next.dot(&a_next) / m as f64;
        let vhat_next = if mu_b.is_infinite() {
            0.0
        } else {
            alpha * (f.f2 * v + (f.f2 - f.f1 * f.f1) / (f.f1 * f.f1) * mean_a2)
        };
        if !(qhat_next.is_finite() && qhat_next > 0.0 && vhat_next.is_finite()) || h_next.iter().any(|v| !v.is_finite())
        {
            return Err(diverged(t, Some(state)));
        }

        a = blend(a_next, &state.a, opts.damping);
        h = blend(h_next, &state.h, opts.damping);
        qhat = qhat_next;
        vhat = vhat_next.max(0.0);
        prev = Some(state);
    }
    unreachable!("loop returns at t == max_iters")
}

fn diverged(t: usize, prev: Option<AmprState>) -> Error {
    match prev {
        Some(s) => Error::Diverged {
            iteration: t,
            last: Box::new(LastState::Ampr(s)),
        },
        None => invalid("initial AMPR state is not finite"),
    }
}

/// `r̂ = h/Q̂` and its data-driven variance `α⟨a²⟩/Q̂²`.
pub fn unbiased_estimate(state: &AmprState, alpha: f64) -> Result<UnbiasedEstimate> {
    if !(state.qhat > 0.0) {
        return Err(invalid("state.qhat must be positive"));
    }
    let mean_a2 = if state.a.is_empty() {
        0.0
    } else {
        state.a.dot(&state.a) / state.a.len() as f64
    };
    Ok(UnbiasedEstimate {
        r_hat: &state.h / state.qhat,
        sigma2: alpha * mean_a2 / (state.qhat * state.qhat),
        vhat_over_qhat2: state.vhat / (state.qhat * state.qhat),
    })
}

/// Per-coordinate bootstrap statistic `E_c[ψ(ŵ*_i)] = E_η[ψ(g(h_i + √v̂η, Q̂))]`.
pub fn bootstrap_statistics(state: &AmprState, psi: Psi) -> Array1<f64> {
    state.h.mapv(|hi| {
        let m = smoothed_moments_unchecked(hi, state.vhat, state.qhat, &state.params);
        match psi {
            Psi::Identity => m.m1,
            Psi::Square => m.m2,
        }
    })
}
