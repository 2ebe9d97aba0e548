//! State evolution for AMPR: the scalar recursion that tracks the
//! macroscopic overlaps of the solver in the large-system limit.
//!
//! For a Bernoulli–Gaussian signal the two-dimensional expectation over the
//! field and the resampling noise reduces, atom by atom, to univariate and
//! bivariate normal tail integrals. A panel quadrature over the field is kept
//! as an independent path.

use serde::{Deserialize, Serialize};

use crate::ampr::SolverOptions;
use crate::data::SignalPrior;
use crate::error::{invalid, Error, LastState, Result};
use crate::kernels::{poisson_moments_unchecked, smoothed_moments_unchecked, BootstrapSize, DenoiserParams};
use crate::special::{bvn_upper, gauss_legendre, norm_pdf, norm_sf};

/// How the per-iteration expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    ClosedForm,
    /// Gauss–Legendre panels in the field variable, `nodes` per panel.
    Quadrature {
        nodes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Outputs `(E, χ, v)` are blended as `(1−d)·new + d·old`.
    pub damping: f64,
    pub expectation: Expectation,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-10,
            damping: 0.5,
            expectation: Expectation::ClosedForm,
        }
    }
}

/// The data model and estimator the recursion describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeModel {
    pub alpha: f64,
    pub delta: f64,
    pub prior: SignalPrior,
    pub params: DenoiserParams,
    pub mu_b: BootstrapSize,
}

impl SeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(invalid(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.prior.rho > 0.0 && self.prior.rho < 1.0) {
            return Err(invalid("rho must lie in (0, 1)"));
        }
        self.params.validate()?;
        if !(self.params.lambda > 0.0) {
            return Err(invalid("state evolution needs lambda > 0"));
        }
        Ok(())
    }
}

/// Starting point: the error `E₀` of the initial estimate and the first
/// field parameters `(Q̂₁, v̂₁)`; `χ̂₁` follows from `Q̂₁²(E₀+Δ)/α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeInit {
    pub mse0: f64,
    pub qhat1: f64,
    pub vhat1: f64,
}

impl SeInit {
    /// `ŵ₀ = 0`, `Q̂₁ = v̂₁ = 1`.
    pub fn standard(prior: &SignalPrior) -> Self {
        Self {
            mse0: prior.second_moment(),
            qhat1: 1.0,
            vhat1: 1.0,
        }
    }

    /// The first field parameters AMPR produces from a zero field with
    /// `(opts.init_qhat, opts.init_vhat)`, so the two trajectories line up.
    pub fn matched_to_ampr(model: &SeModel, opts: &SolverOptions) -> Self {
        let vhat0 = if model.mu_b.is_infinite() { 0.0 } else { opts.init_vhat };
        let m = smoothed_moments_unchecked(0.0, vhat0, opts.init_qhat, &model.params);
        // w₀ has mean zero, so E[(m₁ − w₀)²] = m₁² + E[w₀²]
        let mse0 = model.prior.second_moment() + m.m1 * m.m1;
        let f = poisson_moments_unchecked(m.mderiv, model.mu_b);
        let qhat1 = model.alpha * f.f1;
        let vhat1 = if model.mu_b.is_infinite() {
            0.0
        } else {
            model.alpha * (f.f2 * m.variance() + (f.f2 - f.f1 * f.f1) * (mse0 + model.delta))
        };
        Self { mse0, qhat1, vhat1 }
    }
}

/// One iteration: the inputs `(Q̂_t, χ̂_t, v̂_t)` and the overlaps they give.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeStep {
    pub t: usize,
    pub qhat: f64,
    pub chihat: f64,
    pub vhat: f64,
    pub mse: f64,
    pub chi: f64,
    pub v: f64,
}

impl SeStep {
    /// Predicted variance `χ̂_t/Q̂_t²` of the unbiased estimator at step `t`.
    pub fn sigma2(&self) -> f64 {
        self.chihat / (self.qhat * self.qhat)
    }
}

/// Final overlaps `(E, χ, v)` and the field parameters they produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeState {
    pub iter: usize,
    pub converged: bool,
    pub mse: f64,
    pub chi: f64,
    pub v: f64,
    pub qhat: f64,
    pub chihat: f64,
    pub vhat: f64,
    pub f1: f64,
    pub f2: f64,
}

/// `σ̂² = χ̂/Q̂²`, the variance of the unbiased estimator at this state.
pub fn se_variance(state: &SeState) -> f64 {
    state.chihat / (state.qhat * state.qhat)
}

/// Overlap contributions of one signal atom.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct AtomStats {
    pub chi: f64,
    /// `E[m₂]`
    pub eg2: f64,
    /// `E[m₁²]`
    pub em1sq: f64,
    /// `E[m₁·w₀]`
    pub egw: f64,
}

/// `E[(X−t)₊(Y−t)₊]` for standard normals with correlation `r`, `|r| < 1`.
fn bvn_partial_product(t: f64, r: f64) -> f64 {
    let rp = (1.0 - r * r).sqrt();
    let kappa = t * (1.0 - r) / rp;
    let l = bvn_upper(t, t, r);
    let q = norm_sf(kappa);
    let pt = norm_pdf(t);
    let ex = (1.0 + r) * pt * q;
    let exy = r * l + 2.0 * r * t * pt * q + rp * (-t * t / (1.0 + r)).exp() / (2.0 * std::f64::consts::PI);
    exy - 2.0 * t * ex + t * t * l
}

/// Closed-form atom statistics. The field is `u ~ N(0, s2)` with
/// `Cov(u, w₀) = cov`; the denoiser sees `z = u + √v̂·η`.
pub(crate) fn atom_closed(s2: f64, cov: f64, qhat: f64, vhat: f64, params: &DenoiserParams) -> AtomStats {
    let tau2 = s2 + vhat;
    if tau2 == 0.0 {
        return AtomStats::default();
    }
    let d = qhat + params.ridge();
    let tau = tau2.sqrt();
    let t = params.threshold() / tau;
    let q = norm_sf(t);
    let p = norm_pdf(t);
    let chi = 2.0 * q / d;
    let eg2 = 2.0 * tau2 * ((1.0 + t * t) * q - t * p).max(0.0) / (d * d);
    let r = s2 / tau2;
    let em1sq = if vhat == 0.0 || r >= 1.0 {
        eg2
    } else if s2 == 0.0 {
        0.0
    } else {
        let f = bvn_partial_product(t, r) - bvn_partial_product(t, -r);
        (2.0 * tau2 * f / (d * d)).clamp(0.0, eg2)
    };
    AtomStats {
        chi,
        eg2,
        em1sq,
        egw: cov * chi,
    }
}

/// Visit Gauss–Legendre nodes `u ≥ 0` with weights for `∫_0^∞ f(u)·N(u; 0, s2) du`.
///
/// Panels are a quarter standard deviation wide and are refined
/// geometrically around the threshold at the resampling-noise scale, so the
/// kinks of the denoiser never fall inside a panel.
pub(crate) fn for_each_half_line_node(s2: f64, theta: f64, vhat: f64, nodes: usize, mut visit: impl FnMut(f64, f64)) {
    let s = s2.sqrt();
    // beyond 14 standard deviations the Gaussian weight is negligible
    let upper = 14.0 * s;
    let mut breaks = vec![0.0, upper, theta];
    let panels = (upper / (0.25 * s)).ceil() as usize;
    breaks.extend((1..panels).map(|k| k as f64 * 0.25 * s));
    if vhat > 0.0 {
        let sv = vhat.sqrt();
        for j in -6i32..=60 {
            let off = sv * 2f64.powi(j);
            if off > upper {
                break;
            }
            breaks.push(theta + off);
            breaks.push(theta - off);
        }
    }
    breaks.retain(|&b| (0.0..=upper).contains(&b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let (x, w) = gauss_legendre(nodes);
    for pair in breaks.windows(2) {
        let half = 0.5 * (pair[1] - pair[0]);
        let mid = 0.5 * (pair[1] + pair[0]);
        for (&xi, &wi) in x.iter().zip(&w) {
            let u = mid + half * xi;
            visit(u, half * wi * norm_pdf(u / s) / s);
        }
    }
}

/// The same statistics by panel Gauss–Legendre quadrature over the field.
pub(crate) fn atom_quadrature(
    s2: f64,
    cov: f64,
    qhat: f64,
    vhat: f64,
    params: &DenoiserParams,
    nodes: usize,
) -> AtomStats {
    if s2 == 0.0 {
        let m = smoothed_moments_unchecked(0.0, vhat, qhat, params);
        return AtomStats {
            chi: m.mderiv,
            eg2: m.m2,
            em1sq: m.m1 * m.m1,
            egw: 0.0,
        };
    }
    let mut acc = AtomStats::default();
    let mut eum1 = 0.0;
    // every integrand here is even in u, so fold onto the half line
    for_each_half_line_node(s2, params.threshold(), vhat, nodes, |u, weight| {
        let weight = 2.0 * weight;
        let m = smoothed_moments_unchecked(u, vhat, qhat, params);
        acc.chi += weight * m.mderiv;
        acc.eg2 += weight * m.m2;
        acc.em1sq += weight * m.m1 * m.m1;
        eum1 += weight * u * m.m1;
    });
    acc.egw = cov / s2 * eum1;
    acc
}

/// `(E, χ, v)` produced by the field parameters `(Q̂, χ̂, v̂)`.
pub fn overlaps(model: &SeModel, qhat: f64, chihat: f64, vhat: f64, how: Expectation) -> (f64, f64, f64) {
    let atom = |s2: f64, cov: f64| match how {
        Expectation::ClosedForm => atom_closed(s2, cov, qhat, vhat, &model.params),
        Expectation::Quadrature { nodes } => atom_quadrature(s2, cov, qhat, vhat, &model.params, nodes),
    };
    let rho = model.prior.rho;
    let var1 = SignalPrior::NONZERO_VARIANCE;
    let zero = atom(chihat, 0.0);
    let one = atom(qhat * qhat * var1 + chihat, qhat * var1);
    let mse = (1.0 - rho) * zero.em1sq + rho * (one.em1sq - 2.0 * one.egw + var1);
    let chi = (1.0 - rho) * zero.chi + rho * one.chi;
    let v = (1.0 - rho) * (zero.eg2 - zero.em1sq) + rho * (one.eg2 - one.em1sq);
    (mse.max(0.0), chi, v.max(0.0))
}

fn converged(new: (f64, f64, f64), old: (f64, f64, f64), tol: f64) -> bool {
    let rel = |a: f64, b: f64, floor: f64| {
        let d = (a - b).abs();
        d == 0.0 || d <= tol * a.abs().max(floor)
    };
    // v often sits far below E and is formed by cancellation; measure it
    // against a small fraction of E rather than against itself.
    rel(new.0, old.0, 0.0) && rel(new.1, old.1, 0.0) && rel(new.2, old.2, 1e-5 * new.0)
}

/// Run the recursion from `init` until the overlaps stop moving.
pub fn run_se(model: &SeModel, init: &SeInit, opts: &SeOptions) -> Result<SeState> {
    run_se_traced(model, init, opts, |_| {})
}

/// [`run_se`], calling `trace` after every iteration.
pub fn run_se_traced(
    model: &SeModel,
    init: &SeInit,
    opts: &SeOptions,
    mut trace: impl FnMut(&SeStep),
) -> Result<SeState> {
    model.validate()?;
    if opts.max_iters < 1 || !(opts.tol > 0.0) || !(0.0..1.0).contains(&opts.damping) {
        return Err(invalid("SE options need max_iters >= 1, tol > 0, damping in [0, 1)"));
    }
    if let Expectation::Quadrature { nodes } = opts.expectation {
        if nodes < 2 {
            return Err(invalid("quadrature needs at least 2 nodes per panel"));
        }
    }
    if !(init.mse0 >= 0.0 && init.qhat1 > 0.0 && init.vhat1 >= 0.0) {
        return Err(invalid("SE init needs mse0 >= 0, qhat1 > 0, vhat1 >= 0"));
    }
    let (alpha, delta) = (model.alpha, model.delta);
    let inf = model.mu_b.is_infinite();
    let mut qhat = init.qhat1;
    let mut chihat = qhat * qhat * (init.mse0 + delta) / alpha;
    let mut vhat = if inf { 0.0 } else { init.vhat1 };
    let mut prev: Option<SeState> = None;

    for t in 1..=opts.max_iters {
        let (mut mse, mut chi, mut v) = overlaps(model, qhat, chihat, vhat, opts.expectation);
        if let Some(p) = &prev {
            let d = opts.damping;
            mse = (1.0 - d) * mse + d * p.mse;
            chi = (1.0 - d) * chi + d * p.chi;
            v = (1.0 - d) * v + d * p.v;
        }
        trace(&SeStep {
            t,
            qhat,
            chihat,
            vhat,
            mse,
            chi,
            v,
        });
        let f = poisson_moments_unchecked(chi, model.mu_b);
        let q_next = alpha * f.f1;
        let ch_next = alpha * f.f1 * f.f1 * (mse + delta);
        let v_next = if inf {
            0.0
        } else {
            alpha * (f.f2 * v + (f.f2 - f.f1 * f.f1) * (mse + delta))
        };
        let finite = [mse, chi, v, q_next, ch_next, v_next].iter().all(|x| x.is_finite());
        if !finite || !(q_next > 0.0) {
            return Err(match prev {
                Some(p) => Error::Diverged {
                    iteration: t,
                    last: Box::new(LastState::Se(p)),
                },
                None => invalid("state evolution is not finite at the initial point"),
            });
        }
        let done = prev
            .as_ref()
            .is_some_and(|p| converged((mse, chi, v), (p.mse, p.chi, p.v), opts.tol));
        let state = SeState {
            iter: t,
            converged: done,
            mse,
            chi,
            v,
            qhat: q_next,
            chihat: ch_next,
            vhat: v_next.max(0.0),
            f1: f.f1,
            f2: f.f2,
        };
        if done || t == opts.max_iters {
            return Ok(state);
        }
        qhat = state.qhat;
        chihat = state.chihat;
        vhat = state.vhat;
        prev = Some(state);
    }
    unreachable!("loop returns at t == max_iters")
}
