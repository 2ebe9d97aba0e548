//! Independent oracles shared by the integration tests. Nothing here calls
//! the crate's own quadrature or special functions.
#![allow(dead_code)]

use amprlab::{sample_instance, BootstrapSize, DenoiserParams, ProblemInstance, SeModel, SignalPrior};
use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss rule from the Jacobi matrix of a weight with total mass `mass`.
fn golub_welsch(diag: &[f64], off: &[f64], mass: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mass * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule.into_iter().unzip()
}

/// 200-point Gauss–Legendre, built once.
pub fn legendre_200() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| legendre_rule(200))
}

/// Gauss–Legendre on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..n).map(|k| k as f64 / ((4 * k * k - 1) as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off, 2.0)
}

/// Gauss–Hermite for the standard normal density.
pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off, 1.0)
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Elastic-net denoiser written out directly.
pub fn g(h: f64, qhat: f64, lambda: f64, gamma: f64) -> f64 {
    let th = lambda * gamma;
    if h.abs() <= th {
        0.0
    } else {
        (h - th * h.signum()) / (qhat + lambda * (1.0 - gamma))
    }
}

pub fn g_deriv(h: f64, qhat: f64, lambda: f64, gamma: f64) -> f64 {
    if h.abs() <= lambda * gamma {
        0.0
    } else {
        1.0 / (qhat + lambda * (1.0 - gamma))
    }
}

/// Truncation of the Gaussian integration range.
const ETA_MAX: f64 = 12.0;

/// `(E[g], E[g²], E[g′])` at `h + √v̂η`, integrating each smooth piece
/// between the kinks with a 200-point Gauss–Legendre rule.
pub fn smoothed_oracle(h: f64, vhat: f64, qhat: f64, lambda: f64, gamma: f64) -> [f64; 3] {
    if vhat == 0.0 {
        let v = g(h, qhat, lambda, gamma);
        return [v, v * v, g_deriv(h, qhat, lambda, gamma)];
    }
    let s = vhat.sqrt();
    let th = lambda * gamma;
    let mut cuts = vec![-ETA_MAX, ETA_MAX];
    for k in [(-th - h) / s, (th - h) / s] {
        if k.abs() < ETA_MAX {
            cuts.push(k);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let (x, w) = legendre_200();
    let mut acc = [0.0; 3];
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (xi, wi) in x.iter().zip(w) {
            let eta = mid + half * xi;
            let wt = half * wi * phi(eta);
            let v = g(h + s * eta, qhat, lambda, gamma);
            acc[0] += wt * v;
            acc[1] += wt * v * v;
            acc[2] += wt * g_deriv(h + s * eta, qhat, lambda, gamma);
        }
    }
    acc
}

/// The same moments from a single unsplit Gauss–Hermite rule.
pub fn smoothed_hermite(
    h: f64,
    vhat: f64,
    qhat: f64,
    lambda: f64,
    gamma: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> [f64; 3] {
    let s = vhat.sqrt();
    let mut acc = [0.0; 3];
    for (eta, w) in rule.0.iter().zip(&rule.1) {
        let v = g(h + s * eta, qhat, lambda, gamma);
        acc[0] += w * v;
        acc[1] += w * v * v;
        acc[2] += w * g_deriv(h + s * eta, qhat, lambda, gamma);
    }
    acc
}

/// `(E[r/(1+rχ)], E[(r/(1+rχ))²])` with `r = c/μ`, `c ~ Poisson(μ)`,
/// summed term by term until a geometric bound on the remaining terms
/// falls below 1e-18.
pub fn poisson_series(chi: f64, mu: f64) -> (f64, f64) {
    let mut pmf = (-mu).exp();
    let (mut f1, mut f2) = (0.0, 0.0);
    let mut c = 0u64;
    loop {
        let r = c as f64 / mu;
        let d = r / (1.0 + r * chi);
        f1 += pmf * d;
        f2 += pmf * d * d;
        c += 1;
        pmf *= mu / c as f64;
        // later pmf ratios are below mu/(c+1), and d <= c/mu grows slower
        let ratio = mu / (c + 1) as f64;
        if ratio < 0.5 && pmf * (c as f64 / mu).powi(2).max(1.0) / (1.0 - 2.0 * ratio) < 1e-18 {
            break;
        }
    }
    (f1, f2)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Parameters shared by the finite-size experiments.
pub struct Setting {
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub mu_b: f64,
}

pub const FIG: Setting = Setting {
    n: 4096,
    alpha: 0.8,
    delta: 0.25,
    rho: 0.1,
    lambda: 0.1,
    gamma: 0.5,
    mu_b: 0.5,
};

impl Setting {
    pub fn params(&self) -> DenoiserParams {
        DenoiserParams::new(self.lambda, self.gamma).unwrap()
    }

    pub fn mu(&self) -> BootstrapSize {
        BootstrapSize::new(self.mu_b).unwrap()
    }

    pub fn prior(&self) -> SignalPrior {
        SignalPrior::new(self.rho).unwrap()
    }

    pub fn instance(&self, seed: u64) -> ProblemInstance {
        sample_instance(self.n, self.alpha, self.delta, self.prior(), seed).unwrap()
    }

    pub fn se_model(&self) -> SeModel {
        SeModel {
            alpha: self.alpha,
            delta: self.delta,
            prior: self.prior(),
            params: self.params(),
            mu_b: self.mu(),
        }
    }
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}
