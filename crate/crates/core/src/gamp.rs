//! Weighted GAMP for the elastic net, a batched variant for many bootstrap
//! realizations at once, and a coordinate-descent reference solver.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rayon::prelude::*;

use crate::ampr::{SolverOptions, UnbiasedEstimate};
use crate::data::ProblemInstance;
use crate::error::{invalid, Error, LastState, Result};
use crate::kernels::{denoise_deriv_unchecked, denoise_unchecked, DenoiserParams};
use crate::linalg::{adjoint, adjoint_block, forward, forward_block, norm2};

/// Per-row loss weights `r_μ = c_μ/μ_B`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Uniform,
    Explicit(Vec<f64>),
}

impl Weights {
    fn check(&self, m: usize) -> Result<()> {
        if let Weights::Explicit(r) = self {
            if r.len() != m {
                return Err(invalid(format!("weights have length {}, expected {m}", r.len())));
            }
            if r.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(invalid("weights must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    pub h: Array1<f64>,
    pub a: Array1<f64>,
    pub w_hat: Array1<f64>,
    pub qhat: f64,
    pub chi: f64,
    pub iter: usize,
    pub converged: bool,
    pub params: DenoiserParams,
}

fn denoise_field(h: ArrayView1<'_, f64>, qhat: f64, params: &DenoiserParams) -> (Array1<f64>, f64) {
    let mut chi = 0.0;
    let w = h.mapv(|hi| {
        chi += denoise_deriv_unchecked(hi, qhat, params);
        denoise_unchecked(hi, qhat, params)
    });
    (w, chi / h.len() as f64)
}

fn rel_change(new: ArrayView1<'_, f64>, old: ArrayView1<'_, f64>) -> f64 {
    let d = Zip::from(new).and(old).fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b));
    d.sqrt() / norm2(old).max(1e-12)
}

/// Run GAMP for the weighted elastic net
/// `Σ_μ r_μ/2·(y_μ − x_μᵀw)² + λ Σ_i (γ|w_i| + (1−γ)/2·w_i²)`.
///
/// `opts.init_vhat` is unused.
pub fn run_gamp(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    weights: &Weights,
    opts: &SolverOptions,
) -> Result<GampState> {
    params.validate()?;
    opts.validate(instance.n())?;
    weights.check(instance.m())?;
    let (m, n) = (instance.m(), instance.n());
    let x = instance.x.view();

    let mut h = opts.init_h.clone().unwrap_or_else(|| Array1::zeros(n));
    let mut a = Array1::<f64>::zeros(m);
    let mut qhat = opts.init_qhat;
    let mut prev: Option<GampState> = None;

    for t in 0..=opts.max_iters {
        let (w_new, chi) = denoise_field(h.view(), qhat, params);
        let w_hat = match &prev {
            Some(p) if opts.damping > 0.0 => &w_new * (1.0 - opts.damping) + &p.w_hat * opts.damping,
            _ => w_new,
        };
        if !chi.is_finite() || w_hat.iter().any(|w| !w.is_finite()) {
            return Err(match prev {
                Some(p) => Error::Diverged {
                    iteration: t,
                    last: Box::new(LastState::Gamp(p)),
                },
                None => invalid("initial GAMP state is not finite"),
            });
        }
        let converged = prev
            .as_ref()
            .is_some_and(|p| rel_change(w_hat.view(), p.w_hat.view()) < opts.tol);
        let state = GampState {
            h,
            a,
            w_hat,
            qhat,
            chi,
            iter: t,
            converged,
            params: *params,
        };
        if converged || t == opts.max_iters {
            return Ok(state);
        }

        let mut a_next = forward(x, state.w_hat.view());
        let qhat_next = match weights {
            Weights::Uniform => {
                let d = 1.0 / (1.0 + chi);
                Zip::from(&mut a_next)
                    .and(&instance.y)
                    .and(&state.a)
                    .for_each(|an, &y, &ap| *an = d * (y - *an + chi * ap));
                m as f64 / n as f64 * d
            }
            Weights::Explicit(r) => {
                let mut dsum = 0.0;
                Zip::from(&mut a_next)
                    .and(&instance.y)
                    .and(&state.a)
                    .and(r.as_slice())
                    .for_each(|an, &y, &ap, &rm| {
                        let d = rm / (1.0 + rm * chi);
                        dsum += d;
                        *an = d * (y - *an + chi * ap);
                    });
                dsum / n as f64
            }
        };
        let mut h_next = adjoint(x, a_next.view());
        h_next.scaled_add(qhat_next, &state.w_hat);
        // all-zero weights leave Q̂ = 0, which the denoiser still handles
        if !(qhat_next.is_finite() && qhat_next >= 0.0) || h_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: t,
                last: Box::new(LastState::Gamp(state)),
            });
        }
        if opts.damping > 0.0 {
            a = &a_next * (1.0 - opts.damping) + &state.a * opts.damping;
            h = &h_next * (1.0 - opts.damping) + &state.h * opts.damping;
        } else {
            a = a_next;
            h = h_next;
        }
        qhat = qhat_next;
        prev = Some(state);
    }
    unreachable!("loop returns at t == max_iters")
}

/// Columns advanced together by one matrix-matrix product.
const BATCH_BLOCK: usize = 128;

/// Run GAMP for many weight vectors against the same design.
///
/// Realizations are grouped into blocks so each iteration is a pair of
/// matrix-matrix products; blocks run in parallel on the rayon pool. A
/// column that converges keeps its state from that iteration. Results are
/// returned in input order and do not depend on the thread count.
pub fn run_gamp_batch(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    weights: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<Vec<GampState>> {
    params.validate()?;
    opts.validate(instance.n())?;
    for r in weights {
        Weights::Explicit(r.clone()).check(instance.m())?;
    }
    let blocks: Vec<Result<Vec<GampState>>> = weights
        .par_chunks(BATCH_BLOCK)
        .map(|chunk| gamp_block(instance, params, chunk, opts))
        .collect();
    let mut out = Vec::with_capacity(weights.len());
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

fn gamp_block(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    weights: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<Vec<GampState>> {
    let (m, n, k) = (instance.m(), instance.n(), weights.len());
    let x = instance.x.view();
    let d = opts.damping;
    let blend = |new: f64, old: f64| {
        if d > 0.0 {
            (1.0 - d) * new + d * old
        } else {
            new
        }
    };

    // columns of the working arrays map to realizations through `idx`;
    // finished columns are dropped so later products only cover active ones
    let mut idx: Vec<usize> = (0..k).collect();
    let mut h = Array2::<f64>::zeros((n, k));
    if let Some(h0) = &opts.init_h {
        for mut col in h.columns_mut() {
            col.assign(h0);
        }
    }
    let mut a = Array2::<f64>::zeros((m, k));
    let mut w = Array2::<f64>::zeros((n, k));
    let mut qhat = vec![opts.init_qhat; k];
    let mut chi = vec![0.0; k];
    let mut done: Vec<Option<GampState>> = vec![None; k];

    for t in 0..=opts.max_iters {
        let mut keep = Vec::with_capacity(idx.len());
        for (p, &j) in idx.iter().enumerate() {
            let (w_new, c) = denoise_field(h.column(p), qhat[p], params);
            let mut wp = w.column_mut(p);
            let converged = if t == 0 {
                wp.assign(&w_new);
                false
            } else {
                let w_new = if d > 0.0 { &w_new * (1.0 - d) + &wp * d } else { w_new };
                let conv = rel_change(w_new.view(), wp.view()) < opts.tol;
                wp.assign(&w_new);
                conv
            };
            if !c.is_finite() || wp.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: t,
                    last: Box::new(LastState::Gamp(GampState {
                        h: h.column(p).to_owned(),
                        a: a.column(p).to_owned(),
                        w_hat: wp.to_owned(),
                        qhat: qhat[p],
                        chi: c,
                        iter: t,
                        converged: false,
                        params: *params,
                    })),
                });
            }
            chi[p] = c;
            if converged || t == opts.max_iters {
                done[j] = Some(GampState {
                    h: h.column(p).to_owned(),
                    a: a.column(p).to_owned(),
                    w_hat: w.column(p).to_owned(),
                    qhat: qhat[p],
                    chi: c,
                    iter: t,
                    converged,
                    params: *params,
                });
            } else {
                keep.push(p);
            }
        }
        if keep.is_empty() {
            break;
        }
        if keep.len() < idx.len() {
            h = h.select(Axis(1), &keep);
            a = a.select(Axis(1), &keep);
            w = w.select(Axis(1), &keep);
            idx = keep.iter().map(|&p| idx[p]).collect();
            qhat = keep.iter().map(|&p| qhat[p]).collect();
            chi = keep.iter().map(|&p| chi[p]).collect();
        }

        let fwd = forward_block(x, w.view());
        for (p, &j) in idx.iter().enumerate() {
            let c = chi[p];
            let mut dsum = 0.0;
            Zip::from(a.column_mut(p))
                .and(fwd.column(p))
                .and(&instance.y)
                .and(weights[j].as_slice())
                .for_each(|an, &pm, &y, &rm| {
                    let dm = rm / (1.0 + rm * c);
                    dsum += dm;
                    *an = blend(dm * (y - pm + c * *an), *an);
                });
            qhat[p] = dsum / n as f64;
        }
        let mut h_next = adjoint_block(x, a.view());
        for p in 0..idx.len() {
            let mut hp = h_next.column_mut(p);
            hp.scaled_add(qhat[p], &w.column(p));
            if !(qhat[p].is_finite() && qhat[p] >= 0.0) || hp.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: t,
                    last: Box::new(LastState::Gamp(GampState {
                        h: h.column(p).to_owned(),
                        a: a.column(p).to_owned(),
                        w_hat: w.column(p).to_owned(),
                        qhat: qhat[p],
                        chi: chi[p],
                        iter: t,
                        converged: false,
                        params: *params,
                    })),
                });
            }
            if d > 0.0 {
                hp.zip_mut_with(&h.column(p), |hn, &ho| *hn = blend(*hn, ho));
            }
        }
        h = h_next;
    }
    Ok(done.into_iter().map(|s| s.expect("every column finishes")).collect())
}

/// `r̂ᴳ = h/Q̂` for a GAMP state; the variance is `(1/N)·‖a‖²/Q̂²`.
///
/// With uniform weights this coincides with the AMPR expression
/// `α⟨a²⟩/Q̂²`.
pub fn gamp_unbiased_estimate(state: &GampState) -> Result<UnbiasedEstimate> {
    if !(state.qhat > 0.0) {
        return Err(invalid("state.qhat must be positive"));
    }
    let n = state.h.len() as f64;
    Ok(UnbiasedEstimate {
        r_hat: &state.h / state.qhat,
        sigma2: state.a.dot(&state.a) / n / (state.qhat * state.qhat),
        vhat_over_qhat2: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptions {
    /// Stop once a full sweep moves no coordinate by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w: Array1<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Cyclic coordinate descent with soft-thresholding for the weighted
/// elastic net. Requires `λ > 0`.
pub fn solve_elastic_net_reference(
    instance: &ProblemInstance,
    params: &DenoiserParams,
    weights: &Weights,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    params.validate()?;
    weights.check(instance.m())?;
    if !(params.lambda > 0.0) {
        return Err(invalid("the reference solver needs lambda > 0"));
    }
    let (m, n) = (instance.m(), instance.n());
    let r: Vec<f64> = match weights {
        Weights::Uniform => vec![1.0; m],
        Weights::Explicit(r) => r.clone(),
    };
    let r = Array1::from(r);
    // columns as contiguous rows
    let xt = instance.x.t().as_standard_layout().into_owned();
    let xtr: Array2<f64> = &xt * &r.view().insert_axis(Axis(0));
    let col_sq: Vec<f64> = xtr.rows().into_iter().zip(xt.rows()).map(|(a, b)| a.dot(&b)).collect();
    let (theta, ridge) = (params.threshold(), params.ridge());

    let mut w = Array1::<f64>::zeros(n);
    let mut resid = instance.y.clone();
    for sweep in 1..=opts.max_sweeps {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let denom = col_sq[i] + ridge;
            let old = w[i];
            let rho = xtr.row(i).dot(&resid) + col_sq[i] * old;
            let new = if rho.abs() <= theta || denom == 0.0 {
                0.0
            } else {
                (rho - rho.signum() * theta) / denom
            };
            if new != old {
                resid.scaled_add(old - new, &xt.row(i));
                w[i] = new;
                max_step = max_step.max((new - old).abs());
            }
        }
        if max_step < opts.tol {
            return Ok(ReferenceSolution {
                w,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(ReferenceSolution {
        w,
        sweeps: opts.max_sweeps,
        converged: false,
    })
}
