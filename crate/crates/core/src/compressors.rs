//! Unbiased compression operators `Q` with `E Q(x) = x` and
//! `E‖Q(x) − x‖² ≤ ω‖x‖²`.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressorError {
    #[error("invalid compressor: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: compressor built for {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CompressorKind {
    Identity,
    RandK { k: usize },
    /// Random dithering with `levels` quantization levels per unit of norm.
    Dithering { levels: u32 },
}

/// A stateless compressor bound to a dimension. All randomness comes from the
/// caller's generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    kind: CompressorKind,
    dim: usize,
    omega: f64,
}

fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

impl Compressor {
    pub fn new(kind: CompressorKind, dim: usize) -> Result<Self, CompressorError> {
        if dim == 0 {
            return Err(CompressorError::InvalidArgument("dimension must be positive".into()));
        }
        let omega = match kind {
            CompressorKind::Identity => 0.0,
            CompressorKind::RandK { k } => {
                if k == 0 || k > dim {
                    return Err(CompressorError::InvalidArgument(format!(
                        "rand_k needs 1 <= k <= d, got k = {k}, d = {dim}"
                    )));
                }
                dim as f64 / k as f64 - 1.0
            }
            CompressorKind::Dithering { levels } => {
                if levels == 0 {
                    return Err(CompressorError::InvalidArgument("dithering needs levels >= 1".into()));
                }
                let s = levels as f64;
                let d = dim as f64;
                (d / (s * s)).min(d.sqrt() / s)
            }
        };
        Ok(Self { kind, dim, omega })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(CompressorKind::Identity, dim).expect("identity is always valid for d >= 1")
    }

    pub fn rand_k(dim: usize, k: usize) -> Result<Self, CompressorError> {
        Self::new(CompressorKind::RandK { k }, dim)
    }

    pub fn dithering(dim: usize, levels: u32) -> Result<Self, CompressorError> {
        Self::new(CompressorKind::Dithering { levels }, dim)
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Analytic variance parameter.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn is_identity(&self) -> bool {
        self.kind == CompressorKind::Identity
    }

    /// Bits needed to transmit one compressed vector.
    pub fn bits_sent(&self) -> u64 {
        let d = self.dim as u64;
        match self.kind {
            CompressorKind::Identity => 64 * d,
            CompressorKind::RandK { k } => k as u64 * (64 + ceil_log2(d)),
            // sign + level per coordinate, plus the norm
            CompressorKind::Dithering { levels } => d * (1 + ceil_log2(levels as u64 + 1)) + 64,
        }
    }

    /// `out = Q(x)`.
    pub fn compress_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            CompressorKind::Identity => out.copy_from_slice(x),
            CompressorKind::RandK { k } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let scale = self.dim as f64 / k as f64;
                for j in rand::seq::index::sample(rng, self.dim, k) {
                    out[j] = scale * x[j];
                }
            }
            CompressorKind::Dithering { levels } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let s = levels as f64;
                for (o, &xj) in out.iter_mut().zip(x) {
                    let r = s * xj.abs() / norm;
                    let lower = r.floor();
                    let level = if rng.random::<f64>() < r - lower { lower + 1.0 } else { lower };
                    *o = xj.signum() * norm * level / s;
                }
            }
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>, CompressorError> {
        if x.len() != self.dim {
            return Err(CompressorError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        self.compress_into(x, rng, &mut out);
        Ok(out)
    }

    /// Exact `(E Q(x), E‖Q(x) − x‖²)` by enumerating all outcomes. Only
    /// available for identity and rand_k.
    pub fn exact_moments(&self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        match self.kind {
            CompressorKind::Identity => Some((x.to_vec(), 0.0)),
            CompressorKind::RandK { k } => {
                let d = self.dim;
                let scale = d as f64 / k as f64;
                let mut mean = vec![0.0; d];
                let mut second = 0.0;
                let mut count = 0usize;
                for subset in (0..d).combinations(k) {
                    let mut q = vec![0.0; d];
                    for &j in &subset {
                        q[j] = scale * x[j];
                    }
                    for (m, qj) in mean.iter_mut().zip(&q) {
                        *m += qj;
                    }
                    second += q.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    count += 1;
                }
                let c = count as f64;
                mean.iter_mut().for_each(|m| *m /= c);
                Some((mean, second / c))
            }
            CompressorKind::Dithering { .. } => None,
        }
    }
}

/// Result of an empirical unbiasedness/variance check.
#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasedReport {
    pub trials: usize,
    pub exhaustive: bool,
    /// Largest per-coordinate deviation of the sample mean from `x`.
    pub max_bias: f64,
    /// `mean ‖Q(x) − x‖² / ‖x‖²`.
    pub empirical_omega: f64,
    pub bias_ok: bool,
    pub omega_ok: bool,
}

/// Checks `Q` on one random unit vector. With `exhaustive` set and a
/// compressor that supports it, exact expectations replace sampling.
pub fn verify_unbiased<R: Rng + ?Sized>(c: &Compressor, trials: usize, exhaustive: bool, rng: &mut R) -> UnbiasedReport {
    let trials = trials.max(1);
    let mut x: Vec<f64> = (0..c.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        x[0] = 1.0;
    } else {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    if exhaustive || c.is_identity() {
        if let Some((mean, second)) = c.exact_moments(&x) {
            let max_bias = mean.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            return UnbiasedReport {
                trials,
                exhaustive,
                max_bias,
                empirical_omega: second,
                bias_ok: max_bias <= 1e-12,
                omega_ok: second <= c.omega * (1.0 + 1e-12) + 1e-15,
            };
        }
    }
    let mut mean = vec![0.0; c.dim];
    let mut second = 0.0;
    let mut q = vec![0.0; c.dim];
    for _ in 0..trials {
        c.compress_into(&x, rng, &mut q);
        for (m, qj) in mean.iter_mut().zip(&q) {
            *m += qj;
        }
        second += q.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let t = trials as f64;
    let max_bias = mean.iter().zip(&x).map(|(m, b)| (m / t - b).abs()).fold(0.0, f64::max);
    let empirical_omega = second / t;
    UnbiasedReport {
        trials,
        exhaustive: false,
        max_bias,
        empirical_omega,
        bias_ok: max_bias <= 4.0 * (c.omega / t).sqrt() + 1e-12,
        omega_ok: empirical_omega <= c.omega * (1.0 + 5.0 / t.sqrt()) + 1e-12,
    }
}
