//! Synthetic measurement instances `y = X·w₀ + ε` and Poisson bootstrap
//! weights.
//!
//! `X` has i.i.d. `N(0, 1/N)` entries, so that `XᵀX` has unit-order
//! diagonal `≈ α` and the message-passing recursions need no rescaling.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::BootstrapSize;

/// Gauss–Bernoulli prior: a coordinate is nonzero with probability `rho`,
/// and nonzero values are `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPrior {
    pub rho: f64,
}

impl SignalPrior {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        Ok(Self { rho })
    }

    /// Variance of the nonzero component.
    pub const NONZERO_VARIANCE: f64 = 1.0;

    /// `E[w₀²]`, which is also the MSE of the all-zero estimate.
    pub fn second_moment(&self) -> f64 {
        self.rho * Self::NONZERO_VARIANCE
    }
}

/// One realization of the linear measurement model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    /// `M × N`, row-major.
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub w0: Array1<f64>,
    pub delta: f64,
}

impl ProblemInstance {
    pub fn from_parts(x: Array2<f64>, y: Array1<f64>, w0: Array1<f64>, delta: f64) -> Result<Self> {
        let (m, n) = x.dim();
        if m == 0 || n == 0 {
            return Err(invalid("measurement matrix must be non-empty"));
        }
        if y.len() != m || w0.len() != n {
            return Err(invalid(format!(
                "shape mismatch: X is {m}x{n}, y has {}, w0 has {}",
                y.len(),
                w0.len()
            )));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(invalid(format!("delta must be >= 0, got {delta}")));
        }
        let x = if x.is_standard_layout() {
            x
        } else {
            x.as_standard_layout().into_owned()
        };
        Ok(Self { x, y, w0, delta })
    }

    /// Build from flat buffers; `x` holds `m·n` values in row-major order.
    pub fn from_row_major(m: usize, n: usize, x: Vec<f64>, y: Vec<f64>, w0: Vec<f64>, delta: f64) -> Result<Self> {
        let x =
            Array2::from_shape_vec((m, n), x).map_err(|_| invalid(format!("X buffer does not hold {m}x{n} values")))?;
        Self::from_parts(x, Array1::from(y), Array1::from(w0), delta)
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    /// Empirical measurement ratio `M/N`.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// Serialize as a little-endian binary bundle.
    ///
    /// Layout: magic `b"AMPRINST"`, `u32` version (1), `u64` M, `u64` N,
    /// `f64` Δ, then `w0` (N values), `y` (M values) and `X` (M·N values,
    /// row-major), all `f64`.
    pub fn write_bundle<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BUNDLE_MAGIC)?;
        out.write_all(&BUNDLE_VERSION.to_le_bytes())?;
        out.write_all(&(self.m() as u64).to_le_bytes())?;
        out.write_all(&(self.n() as u64).to_le_bytes())?;
        out.write_all(&self.delta.to_le_bytes())?;
        for v in self.w0.iter().chain(self.y.iter()).chain(self.x.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_bundle<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::Config("not an instance bundle".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != BUNDLE_VERSION {
            return Err(Error::Config(format!("unsupported bundle version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let m = read_u64(&mut input)? as usize;
        let n = read_u64(&mut input)? as usize;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut raw = vec![0u8; count * 8];
            input.read_exact(&mut raw)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        };
        let delta = read_f64s(1)?[0];
        let w0 = Array1::from(read_f64s(n)?);
        let y = Array1::from(read_f64s(m)?);
        let x = Array2::from_shape_vec((m, n), read_f64s(m * n)?)
            .map_err(|e| Error::Config(format!("bad bundle shape: {e}")))?;
        Self::from_parts(x, y, w0, delta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_bundle(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_bundle(f)
    }
}

const BUNDLE_MAGIC: &[u8; 8] = b"AMPRINST";
const BUNDLE_VERSION: u32 = 1;

/// Poisson replication counts `c_μ` of one bootstrap sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapWeights {
    pub c: Vec<u32>,
    pub mu_b: f64,
}

impl BootstrapWeights {
    /// Per-sample weights `r_μ = c_μ/μ_B` entering the weighted loss.
    pub fn ratios(&self) -> Vec<f64> {
        self.c.iter().map(|&c| c as f64 / self.mu_b).collect()
    }

    /// Fraction of rows drawn at least once.
    pub fn unique_fraction(&self) -> f64 {
        self.c.iter().filter(|&&c| c > 0).count() as f64 / self.c.len() as f64
    }
}

/// Draw `(X, y, w₀)` with `M = round(α·N)` rows.
pub fn sample_instance(n: usize, alpha: f64, delta: f64, prior: SignalPrior, seed: u64) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid(format!("delta must be >= 0, got {delta}")));
    }
    SignalPrior::new(prior.rho)?;
    let m = (alpha * n as f64).round() as usize;
    if m == 0 {
        return Err(invalid(format!("round(alpha*n) = 0 for alpha={alpha}, n={n}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0: Array1<f64> = (0..n)
        .map(|_| {
            let active = rng.gen::<f64>() < prior.rho;
            let v: f64 = rng.sample(StandardNormal);
            if active {
                v * SignalPrior::NONZERO_VARIANCE.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    let x = Array2::from_shape_simple_fn((m, n), || scale * rng.sample::<f64, _>(StandardNormal));
    let noise_sd = delta.sqrt();
    let mut y = x.dot(&w0);
    for yi in y.iter_mut() {
        *yi += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(ProblemInstance { x, y, w0, delta })
}

/// Draw `c_μ ~ i.i.d. Poisson(μ_B)` for `m` rows.
pub fn sample_bootstrap_weights(m: usize, mu_b: BootstrapSize, seed: u64) -> Result<BootstrapWeights> {
    if m == 0 {
        return Err(invalid("m must be >= 1"));
    }
    if mu_b.is_infinite() {
        return Err(invalid("bootstrap weights need a finite mu_b"));
    }
    let dist = Poisson::new(mu_b.value()).map_err(|e| invalid(format!("poisson: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..m).map(|_| dist.sample(&mut rng) as u32).collect();
    Ok(BootstrapWeights { c, mu_b: mu_b.value() })
}
