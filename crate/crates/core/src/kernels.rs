//! Scalar mathematics shared by the message-passing solvers and the state
//! evolution: the elastic-net denoiser, its Gaussian-smoothed moments, and
//! the Poisson resampling moments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{norm_pdf, norm_sf};

/// Elastic-net hyperparameters: penalty `λ(γ|w| + (1−γ)/2·w²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl DenoiserParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let p = Self { lambda, gamma };
        p.validate()?;
        Ok(p)
    }

    /// `λ = 0` is accepted here (it makes the denoiser linear); the solvers
    /// themselves are only meaningful for `λ > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    /// Soft-threshold level `λγ`.
    #[inline]
    pub fn threshold(&self) -> f64 {
        self.lambda * self.gamma
    }

    /// Ridge contribution `λ(1−γ)` added to `Q̂` in the slope denominator.
    #[inline]
    pub fn ridge(&self) -> f64 {
        self.lambda * (1.0 - self.gamma)
    }
}

/// Mean size `μ_B` of a Poisson bootstrap sample, in units of `M`.
///
/// `μ_B = ∞` is a distinguished value: resampling weights become
/// deterministic and every routine treats it analytically.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BootstrapSize(f64);

impl BootstrapSize {
    pub const INFINITE: Self = Self(f64::INFINITY);

    pub fn new(mu_b: f64) -> Result<Self> {
        if mu_b.is_nan() || mu_b <= 0.0 {
            return Err(invalid(format!("mu_b must be positive, got {mu_b}")));
        }
        Ok(Self(mu_b))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl std::fmt::Display for BootstrapSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for BootstrapSize {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(Self::INFINITE),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| invalid(format!("cannot parse mu_b from {s:?}")))?;
                Self::new(v)
            }
        }
    }
}

/// `f⁽¹⁾ = E_c[r/(1+rχ)]` and `f⁽²⁾ = E_c[(r/(1+rχ))²]` with `r = c/μ_B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingMoments {
    pub f1: f64,
    pub f2: f64,
}

/// Denoiser statistics averaged over `η ~ N(0, 1)` at input `h + √v̂·η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMoments {
    /// `E_η[g]`
    pub m1: f64,
    /// `E_η[g²]`
    pub m2: f64,
    /// `E_η[g′]`
    pub mderiv: f64,
}

impl SmoothedMoments {
    #[inline]
    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }
}

fn check_field(h: f64, qhat: f64) -> Result<()> {
    if !h.is_finite() {
        return Err(invalid(format!("h must be finite, got {h}")));
    }
    if !(qhat.is_finite() && qhat > 0.0) {
        return Err(invalid(format!("qhat must be positive and finite, got {qhat}")));
    }
    Ok(())
}

/// Elastic-net denoiser `g(h, Q̂)`: zero on `|h| ≤ λγ`, otherwise
/// `(h − sgn(h)λγ) / (Q̂ + λ(1−γ))`.
pub fn denoise(h: f64, qhat: f64, params: &DenoiserParams) -> Result<f64> {
    check_field(h, qhat)?;
    Ok(denoise_unchecked(h, qhat, params))
}

#[inline]
pub(crate) fn denoise_unchecked(h: f64, qhat: f64, params: &DenoiserParams) -> f64 {
    let theta = params.threshold();
    if h.abs() <= theta {
        0.0
    } else {
        (h - h.signum() * theta) / (qhat + params.ridge())
    }
}

/// Derivative of [`denoise`] in `h`.
pub fn denoise_deriv(h: f64, qhat: f64, params: &DenoiserParams) -> Result<f64> {
    check_field(h, qhat)?;
    Ok(denoise_deriv_unchecked(h, qhat, params))
}

#[inline]
pub(crate) fn denoise_deriv_unchecked(h: f64, qhat: f64, params: &DenoiserParams) -> f64 {
    if h.abs() <= params.threshold() {
        0.0
    } else {
        1.0 / (qhat + params.ridge())
    }
}

/// Closed-form `E_η[g]`, `E_η[g²]`, `E_η[g′]` over `z = h + √v̂·η`.
///
/// The denoiser is linear on the two active half-lines, so each moment is a
/// sum of truncated-Gaussian partial moments. At `v̂ = 0` the pointwise
/// values are returned exactly.
pub fn smoothed_moments(h: f64, vhat: f64, qhat: f64, params: &DenoiserParams) -> Result<SmoothedMoments> {
    check_field(h, qhat)?;
    if !(vhat.is_finite() && vhat >= 0.0) {
        return Err(invalid(format!("vhat must be finite and >= 0, got {vhat}")));
    }
    Ok(smoothed_moments_unchecked(h, vhat, qhat, params))
}

/// Partial moments of `N(mean, σ²)` above `c`: returns
/// `(P(z>c), E[(z−c)₊], E[(z−c)₊²])`.
#[inline]
fn upper_partial(mean: f64, sigma: f64, c: f64) -> (f64, f64, f64) {
    let k = (c - mean) / sigma;
    let q = norm_sf(k);
    let p = norm_pdf(k);
    let a1 = p - k * q;
    let a2 = (1.0 + k * k) * q - k * p;
    (q, sigma * a1.max(0.0), sigma * sigma * a2.max(0.0))
}

#[inline]
pub(crate) fn smoothed_moments_unchecked(h: f64, vhat: f64, qhat: f64, params: &DenoiserParams) -> SmoothedMoments {
    let denom = qhat + params.ridge();
    if vhat == 0.0 {
        let g = denoise_unchecked(h, qhat, params);
        return SmoothedMoments {
            m1: g,
            m2: g * g,
            mderiv: denoise_deriv_unchecked(h, qhat, params),
        };
    }
    let theta = params.threshold();
    let sigma = vhat.sqrt();
    // z > θ branch, and the mirror image −z > θ.
    let (p_hi, e1_hi, e2_hi) = upper_partial(h, sigma, theta);
    let (p_lo, e1_lo, e2_lo) = upper_partial(-h, sigma, theta);
    SmoothedMoments {
        m1: (e1_hi - e1_lo) / denom,
        m2: (e2_hi + e2_lo) / (denom * denom),
        mderiv: (p_hi + p_lo) / denom,
    }
}

/// Largest count considered in the Poisson sums.
fn poisson_upper_bound(mu: f64) -> usize {
    (mu + 12.0 * mu.sqrt() + 20.0).ceil() as usize
}

/// Poisson resampling moments `f⁽¹⁾`, `f⁽²⁾` at overlap `χ`.
///
/// Finite `μ_B` sums the Poisson series outward from the mode until the
/// probability mass left is below 1e-16 (never past `μ_B + 12√μ_B + 20`).
/// `μ_B = ∞` returns the deterministic limit `(1/(1+χ), 1/(1+χ)²)`.
pub fn poisson_moments(chi: f64, mu_b: BootstrapSize) -> Result<ResamplingMoments> {
    if !(chi.is_finite() && chi >= 0.0) {
        return Err(invalid(format!("chi must be finite and >= 0, got {chi}")));
    }
    Ok(poisson_moments_unchecked(chi, mu_b))
}

pub(crate) fn poisson_moments_unchecked(chi: f64, mu_b: BootstrapSize) -> ResamplingMoments {
    if mu_b.is_infinite() {
        let f1 = 1.0 / (1.0 + chi);
        return ResamplingMoments { f1, f2: f1 * f1 };
    }
    let mu = mu_b.value();
    let hi = poisson_upper_bound(mu);
    let mode = (mu.floor() as usize).min(hi);
    let log_p_mode = mode as f64 * mu.ln() - mu - libm::lgamma(mode as f64 + 1.0);
    let p_mode = log_p_mode.exp();

    let term = |c: usize| {
        let r = c as f64 / mu;
        r / (1.0 + r * chi)
    };

    let (mut f1, mut f2) = (0.0, 0.0);
    let mut mass = 0.0;
    // upward from the mode
    let mut p = p_mode;
    let mut c = mode;
    loop {
        let t = term(c);
        f1 += p * t;
        f2 += p * t * t;
        mass += p;
        if c >= hi || (c as f64 > mu && p < 1e-17 * mass) {
            break;
        }
        p *= mu / (c + 1) as f64;
        c += 1;
    }
    // downward from the mode
    let mut p = p_mode;
    let mut c = mode;
    while c > 0 {
        p *= c as f64 / mu;
        c -= 1;
        let t = term(c);
        f1 += p * t;
        f2 += p * t * t;
        if p < 1e-17 * mass {
            break;
        }
    }
    ResamplingMoments { f1, f2 }
}
