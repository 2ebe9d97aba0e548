//! Hyperparameter search on the state-evolution variance and phase-diagram
//! sweeps over `(ρ, α)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SignalPrior;
use crate::error::{invalid, Error, Result};
use crate::kernels::{BootstrapSize, DenoiserParams};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::se::{run_se, se_variance, SeInit, SeModel, SeOptions};

/// Smallest admissible `λ`.
pub const LAMBDA_MIN: f64 = 1e-7;

/// Cells with `λ★` at most this are candidates for the interpolator phase.
pub const INTERPOLATOR_LAMBDA: f64 = 2e-7;

/// Largest finite `μ_B` searched when the domain extends to `μ_B = ∞`.
const MU_B_FINITE_CAP: f64 = 100.0;

/// Box for `logit γ` when `γ` is optimized.
const LOGIT_GAMMA_BOUND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptDomain {
    /// `(lo, hi)`; `hi` may be infinite, in which case `μ_B = ∞` is a
    /// candidate and finite values are searched up to a cap.
    pub mu_b_range: (f64, f64),
    /// Upper end of `λ`; the lower end is [`LAMBDA_MIN`].
    pub lambda_max: f64,
    pub gamma_mode: GammaMode,
}

impl Default for OptDomain {
    fn default() -> Self {
        Self {
            mu_b_range: (0.05, f64::INFINITY),
            lambda_max: 10.0,
            gamma_mode: GammaMode::Fixed(1.0),
        }
    }
}

impl OptDomain {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mu_b_range;
        if !(lo.is_finite() && lo > 0.0 && hi > lo) {
            return Err(invalid(format!(
                "mu_b_range must satisfy 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        if !(self.lambda_max.is_finite() && self.lambda_max > LAMBDA_MIN) {
            return Err(invalid(format!("lambda_max must exceed {LAMBDA_MIN}")));
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(0.0..=1.0).contains(&g) {
                return Err(invalid(format!("fixed gamma must lie in [0, 1], got {g}")));
            }
        }
        Ok(())
    }

    fn includes_infinity(&self) -> bool {
        self.mu_b_range.1.is_infinite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperoptOptions {
    /// Number of multi-start points.
    pub restarts: usize,
    pub se: SeOptions,
    /// Applied in a unit box, so `initial_step` and `diameter_tol` are
    /// fractions of each coordinate's range.
    pub nm: NelderMeadOptions,
}

impl Default for HyperoptOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            se: SeOptions::default(),
            nm: NelderMeadOptions {
                initial_step: 0.1,
                ..NelderMeadOptions::default()
            },
        }
    }
}

/// Minimizer of the predicted variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// `f64::INFINITY` for the baseline without resampling.
    pub mu_b: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma2: f64,
    /// The simplex collapsed before the iteration cap.
    pub converged: bool,
}

/// Best point over the whole domain and the best point at `μ_B = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptimum {
    pub best: Optimum,
    pub baseline: Optimum,
}

impl CellOptimum {
    pub fn ratio(&self) -> f64 {
        self.best.sigma2 / self.baseline.sigma2
    }

    /// `α(1 − e^{−μ_B★})`, the expected fraction of distinct rows per sample
    /// in units of `N`.
    pub fn unique_frac(&self, alpha: f64) -> f64 {
        alpha * (-(-self.best.mu_b).exp_m1())
    }
}

/// One axis of the search box, linear in a transformed coordinate.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Clamp a unit-box coordinate, returning the transformed value and
    /// the squared excess used as a penalty.
    fn map(&self, u: f64) -> (f64, f64) {
        let c = u.clamp(0.0, 1.0);
        (self.lo + c * (self.hi - self.lo), (u - c) * (u - c))
    }
}

fn halton(index: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, index);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Search<'a> {
    alpha: f64,
    delta: f64,
    prior: SignalPrior,
    domain: &'a OptDomain,
    opts: &'a HyperoptOptions,
    /// Pin `μ_B = ∞` instead of searching `log μ_B`.
    fixed_infinite: bool,
}

impl Search<'_> {
    fn axes(&self) -> Vec<Axis> {
        let mut axes = Vec::with_capacity(3);
        if !self.fixed_infinite {
            let (lo, hi) = self.domain.mu_b_range;
            let hi = if hi.is_infinite() {
                MU_B_FINITE_CAP.max(lo * 10.0)
            } else {
                hi
            };
            axes.push(Axis {
                lo: lo.ln(),
                hi: hi.ln(),
            });
        }
        axes.push(Axis {
            lo: LAMBDA_MIN.ln(),
            hi: self.domain.lambda_max.ln(),
        });
        if self.domain.gamma_mode == GammaMode::Free {
            axes.push(Axis {
                lo: -LOGIT_GAMMA_BOUND,
                hi: LOGIT_GAMMA_BOUND,
            });
        }
        axes
    }

    /// `(μ_B, λ, γ)` and the penalty factor for a unit-box point.
    fn decode(&self, axes: &[Axis], u: &[f64]) -> (f64, f64, f64, f64) {
        let mut k = 0;
        let mut excess = 0.0;
        let mut next = || {
            let (v, e) = axes[k].map(u[k]);
            k += 1;
            excess += e;
            v
        };
        let mu = if self.fixed_infinite {
            f64::INFINITY
        } else {
            next().exp()
        };
        let lambda = next().exp().max(LAMBDA_MIN);
        let gamma = match self.domain.gamma_mode {
            GammaMode::Fixed(g) => g,
            GammaMode::Free => logistic(next()),
        };
        (mu, lambda, gamma, 1.0 + excess)
    }

    fn variance(&self, mu: f64, lambda: f64, gamma: f64) -> Option<f64> {
        let model = SeModel {
            alpha: self.alpha,
            delta: self.delta,
            prior: self.prior,
            params: DenoiserParams::new(lambda, gamma).ok()?,
            mu_b: if mu.is_infinite() {
                BootstrapSize::INFINITE
            } else {
                BootstrapSize::new(mu).ok()?
            },
        };
        let state = run_se(&model, &SeInit::standard(&self.prior), &self.opts.se).ok()?;
        let s2 = se_variance(&state);
        (state.converged && s2.is_finite()).then_some(s2)
    }

    fn run(&self) -> Result<Optimum> {
        let axes = self.axes();
        let dim = axes.len();
        let bases = [2, 3, 5];
        let mut best: Option<Optimum> = None;
        for start in 1..=self.opts.restarts.max(1) {
            let x0: Vec<f64> = (0..dim).map(|d| halton(start, bases[d])).collect();
            let objective = |u: &[f64]| {
                let (mu, lambda, gamma, penalty) = self.decode(&axes, u);
                self.variance(mu, lambda, gamma)
                    .map_or(f64::INFINITY, |s2| s2 * penalty)
            };
            let res = match nelder_mead(objective, &x0, &self.opts.nm) {
                Ok(r) => r,
                Err(Error::InvalidStart) => continue,
                Err(e) => return Err(e),
            };
            if !res.f.is_finite() {
                continue;
            }
            let (mu, lambda, gamma, _) = self.decode(&axes, &res.x);
            let Some(sigma2) = self.variance(mu, lambda, gamma) else {
                continue;
            };
            let cand = Optimum {
                mu_b: mu,
                lambda,
                gamma,
                sigma2,
                converged: res.converged,
            };
            if best.map_or(true, |b| cand.sigma2 < b.sigma2) {
                best = Some(cand);
            }
        }
        best.ok_or_else(|| {
            Error::InfeasibleDomain(format!(
                "no converged fixed point at alpha={}, rho={}{}",
                self.alpha,
                self.prior.rho,
                if self.fixed_infinite { " without resampling" } else { "" }
            ))
        })
    }
}

/// Minimize the predicted variance `χ̂/Q̂²` over the domain, and separately
/// over `(λ, γ)` at `μ_B = ∞` for the baseline.
///
/// When the domain reaches `μ_B = ∞` the baseline is itself a candidate,
/// so `best.sigma2 ≤ baseline.sigma2`.
pub fn minimize_variance(
    alpha: f64,
    delta: f64,
    prior: SignalPrior,
    domain: &OptDomain,
    opts: &HyperoptOptions,
) -> Result<CellOptimum> {
    domain.validate()?;
    if !(alpha.is_finite() && alpha > 0.0 && delta.is_finite() && delta >= 0.0) {
        return Err(invalid("alpha must be positive and delta >= 0"));
    }
    let search = |fixed_infinite| Search {
        alpha,
        delta,
        prior,
        domain,
        opts,
        fixed_infinite,
    };
    let baseline = search(true).run()?;
    let resampled = search(false).run();
    let best = match resampled {
        Ok(r) if !domain.includes_infinity() || r.sigma2 < baseline.sigma2 => r,
        Ok(_) => baseline,
        Err(e) if !domain.includes_infinity() => return Err(e),
        Err(_) => baseline,
    };
    Ok(CellOptimum { best, baseline })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabel {
    Interpolator,
    Regularized,
    Failed,
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Interpolator => "interpolator",
            Self::Regularized => "regularized",
            Self::Failed => "failed",
        })
    }
}

/// Interpolator phase: `λ★` pinned at the lower bound while a bootstrap
/// sample has fewer distinct rows than unknowns.
pub fn phase_label(lambda_star: f64, unique_frac: f64) -> PhaseLabel {
    if lambda_star <= INTERPOLATOR_LAMBDA && unique_frac < 1.0 {
        PhaseLabel::Interpolator
    } else {
        PhaseLabel::Regularized
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rho: f64,
    pub alpha: f64,
    pub mu_b_star: f64,
    pub lambda_star: f64,
    pub gamma_star: f64,
    pub sigma2_star: f64,
    pub s2_star: f64,
    pub ratio: f64,
    pub unique_frac: f64,
    pub phase_label: PhaseLabel,
    pub converged: bool,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn from_cell(rho: f64, alpha: f64, cell: &CellOptimum) -> Self {
        let unique_frac = cell.unique_frac(alpha);
        Self {
            rho,
            alpha,
            mu_b_star: cell.best.mu_b,
            lambda_star: cell.best.lambda,
            gamma_star: cell.best.gamma,
            sigma2_star: cell.best.sigma2,
            s2_star: cell.baseline.sigma2,
            ratio: cell.ratio(),
            unique_frac,
            phase_label: phase_label(cell.best.lambda, unique_frac),
            converged: cell.best.converged && cell.baseline.converged,
            error: None,
        }
    }

    pub fn failed(rho: f64, alpha: f64, err: &Error) -> Self {
        Self {
            rho,
            alpha,
            mu_b_star: f64::NAN,
            lambda_star: f64::NAN,
            gamma_star: f64::NAN,
            sigma2_star: f64::NAN,
            s2_star: f64::NAN,
            ratio: f64::NAN,
            unique_frac: f64::NAN,
            phase_label: PhaseLabel::Failed,
            converged: false,
            error: Some(err.to_string()),
        }
    }
}

/// Optimize every `(ρ, α)` cell. Rows come back ρ-major in grid order no
/// matter how the cells were scheduled; a failing cell yields a `failed`
/// row instead of aborting.
pub fn sweep_phase_diagram(
    rho_grid: &[f64],
    alpha_grid: &[f64],
    delta: f64,
    domain: &OptDomain,
    opts: &HyperoptOptions,
) -> Result<Vec<SweepRecord>> {
    if rho_grid.is_empty() || alpha_grid.is_empty() {
        return Err(invalid("sweep grids must be non-empty"));
    }
    domain.validate()?;
    let cells: Vec<(f64, f64)> = rho_grid
        .iter()
        .flat_map(|&r| alpha_grid.iter().map(move |&a| (r, a)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(rho, alpha)| {
            let cell = SignalPrior::new(rho).and_then(|p| minimize_variance(alpha, delta, p, domain, opts));
            match cell {
                Ok(c) => SweepRecord::from_cell(rho, alpha, &c),
                Err(e) => SweepRecord::failed(rho, alpha, &e),
            }
        })
        .collect())
}
