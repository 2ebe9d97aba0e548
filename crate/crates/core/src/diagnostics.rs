//! Checks that the solver outputs behave as the decoupling picture predicts:
//! Gaussian residuals, linear agreement with bootstrap averages, and
//! agreement of empirical averages with their state-evolution values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ampr::{AmprState, Psi};
use crate::error::{invalid, Error, Result};
use crate::kernels::smoothed_moments_unchecked;
use crate::se::{for_each_half_line_node, SeModel, SeState};

/// Minimum sample size for a Q-Q table.
pub const QQ_MIN_SAMPLE: usize = 100;

/// Fraction of quantiles trimmed from each end before the line fit.
const QQ_TRIM: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqTable {
    /// Normal quantiles at plotting positions `(i − 0.5)/n`, increasing.
    pub theoretical: Vec<f64>,
    /// Sorted sample.
    pub sample: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("linear_fit needs two equal-length inputs of length >= 2"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let slope = sxy / sxx;
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
    })
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sample contains non-finite values"));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    if s.first() == s.last() {
        return Err(Error::DegenerateSample);
    }
    Ok(s)
}

fn centered_normal(variance: f64) -> Result<Normal> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(invalid(format!("variance must be positive, got {variance}")));
    }
    Normal::new(0.0, variance.sqrt()).map_err(|e| invalid(e.to_string()))
}

/// Q-Q table of `sample` against `N(0, variance)`, with the reference line
/// fitted on the central 98% of quantiles.
pub fn qq_against_normal(sample: &[f64], variance: f64) -> Result<QqTable> {
    if sample.len() < QQ_MIN_SAMPLE {
        return Err(invalid(format!(
            "Q-Q needs at least {QQ_MIN_SAMPLE} points, got {}",
            sample.len()
        )));
    }
    let dist = centered_normal(variance)?;
    let s = sorted(sample)?;
    let n = s.len();
    let theoretical: Vec<f64> = (1..=n).map(|i| dist.inverse_cdf((i as f64 - 0.5) / n as f64)).collect();
    let lo = (QQ_TRIM * n as f64).floor() as usize;
    let hi = n - lo;
    let fit = linear_fit(&theoretical[lo..hi], &s[lo..hi])?;
    Ok(QqTable {
        theoretical,
        sample: s,
        slope: fit.slope,
        intercept: fit.intercept,
    })
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `sample` and `N(0, variance)`.
pub fn ks_statistic(sample: &[f64], variance: f64) -> Result<f64> {
    let dist = centered_normal(variance)?;
    let s = sorted(sample)?;
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = dist.cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// Outer function applied to the per-coordinate bootstrap statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    Identity,
    Square,
}

impl std::str::FromStr for Phi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            other => Err(invalid(format!("unsupported phi {other:?}"))),
        }
    }
}

/// Panel nodes used for the state-evolution side of the decoupling check.
const DECOUPLING_NODES: usize = 20;

/// Compare `N⁻¹Σ_i φ(E_η[ψ(g(h_i + √v̂η, Q̂))])` from a run with its
/// state-evolution prediction, where the field is `Q̂w₀ + √χ̂ξ`.
///
/// The left side uses only `(h, Q̂, v̂)`. Supported `(φ, ψ)` pairs are
/// `(identity, identity)`, `(square, identity)` and `(identity, square)`.
pub fn decoupling_check(state: &AmprState, se: &SeState, model: &SeModel, phi: Phi, psi: Psi) -> Result<(f64, f64)> {
    if phi == Phi::Square && psi == Psi::Square {
        return Err(invalid("(square, square) is not a supported selector"));
    }
    if !state.converged || !se.converged {
        return Err(invalid(
            "decoupling_check needs a converged run and a converged SE fixed point",
        ));
    }
    let apply = |h: f64, qhat: f64, vhat: f64| {
        let m = smoothed_moments_unchecked(h, vhat, qhat, &model.params);
        let inner = match psi {
            Psi::Identity => m.m1,
            Psi::Square => m.m2,
        };
        match phi {
            Phi::Identity => inner,
            Phi::Square => inner * inner,
        }
    };
    let lhs = state.h.iter().map(|&h| apply(h, state.qhat, state.vhat)).sum::<f64>() / state.h.len() as f64;

    let atom = |s2: f64| {
        if s2 == 0.0 {
            return apply(0.0, se.qhat, se.vhat);
        }
        let mut acc = 0.0;
        for_each_half_line_node(s2, model.params.threshold(), se.vhat, DECOUPLING_NODES, |u, w| {
            acc += w * (apply(u, se.qhat, se.vhat) + apply(-u, se.qhat, se.vhat));
        });
        acc
    };
    let rho = model.prior.rho;
    let rhs = (1.0 - rho) * atom(se.chihat) + rho * atom(se.qhat * se.qhat + se.chihat);
    Ok((lhs, rhs))
}
