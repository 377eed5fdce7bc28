//! Contractive compression operators with exact wire-cost accounting.
//!
//! Every operator `Q` here satisfies `E‖Q(x) − x‖² ≤ (1 − ω)‖x‖²` for the
//! ratio returned by [`CompressionSpec::omega`]:
//!
//! * `identity`: ω = 1.
//! * `top`: keeps the `m = ⌈fraction·d⌉` largest-magnitude entries, ties
//!   broken by lowest index; ω = m/d.
//! * `rand`: keeps `m` uniformly chosen entries; ω = m/d. The `unbiased`
//!   variant rescales the kept entries by `d/m`, which gives
//!   `E‖Q(x) − x‖² = (d/m − 1)‖x‖²` and is only contractive for `m/d > 1/2`.
//! * `qsgd`: stochastic rounding of `|x_i|/‖x‖` onto `s = 2^{k−1}` steps
//!   (so `s + 1` levels), divided by `τ = 1 + min(d/s², √d/s)`; ω = 1/τ.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operator family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    Top {
        fraction: f64,
    },
    Rand {
        fraction: f64,
        #[serde(default)]
        unbiased: bool,
    },
    Qsgd {
        k: u32,
    },
}

fn default_value_bits() -> u32 {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSpec {
    #[serde(flatten)]
    pub kind: CompressorKind,
    /// Bits per real scalar on the wire.
    #[serde(default = "default_value_bits")]
    pub value_bits: u32,
    /// Bits per transmitted index; `None` means `⌈log2 d⌉` per message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_bits: Option<u32>,
}

/// Decompressed payload as seen by receivers, plus its wire cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub dense: Vec<f64>,
    pub bits: u64,
}

impl CompressionSpec {
    fn with_kind(kind: CompressorKind) -> Self {
        Self {
            kind,
            value_bits: default_value_bits(),
            index_bits: None,
        }
    }

    pub fn identity() -> Self {
        Self::with_kind(CompressorKind::Identity)
    }

    pub fn top(fraction: f64) -> Self {
        Self::with_kind(CompressorKind::Top { fraction })
    }

    pub fn rand(fraction: f64) -> Self {
        Self::with_kind(CompressorKind::Rand {
            fraction,
            unbiased: false,
        })
    }

    pub fn rand_unbiased(fraction: f64) -> Self {
        Self::with_kind(CompressorKind::Rand {
            fraction,
            unbiased: true,
        })
    }

    pub fn qsgd(k: u32) -> Self {
        Self::with_kind(CompressorKind::Qsgd { k })
    }

    /// Short label used in CSV output, e.g. `top0.1` or `qsgd2`.
    pub fn label(&self) -> String {
        match &self.kind {
            CompressorKind::Identity => "identity".into(),
            CompressorKind::Top { fraction } => format!("top{fraction}"),
            CompressorKind::Rand {
                fraction,
                unbiased: false,
            } => format!("rand{fraction}"),
            CompressorKind::Rand {
                fraction,
                unbiased: true,
            } => format!("urand{fraction}"),
            CompressorKind::Qsgd { k } => format!("qsgd{k}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CompressorKind::Top { fraction } | CompressorKind::Rand { fraction, .. }
                if !(fraction > 0.0 && fraction <= 1.0) =>
            {
                Err(Error::invalid(format!(
                    "sparsification fraction {fraction} outside (0, 1]"
                )))
            }
            CompressorKind::Qsgd { k } if !(1..=31).contains(&k) => {
                Err(Error::invalid(format!("qsgd precision k = {k} outside [1, 31]")))
            }
            _ => Ok(()),
        }
    }

    /// Number of entries a sparsifier keeps out of `d`.
    pub fn kept(&self, d: usize) -> usize {
        match self.kind {
            CompressorKind::Top { fraction } | CompressorKind::Rand { fraction, .. } => {
                kept_count(fraction, d)
            }
            _ => d,
        }
    }

    /// Compression ratio ω for vectors of length `d`.
    pub fn omega(&self, d: usize) -> Result<f64> {
        self.validate()?;
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let df = d as f64;
        match self.kind {
            CompressorKind::Identity => Ok(1.0),
            CompressorKind::Top { .. }
            | CompressorKind::Rand {
                unbiased: false, ..
            } => Ok(self.kept(d) as f64 / df),
            CompressorKind::Rand { unbiased: true, .. } => {
                let r = self.kept(d) as f64 / df;
                let omega = (2.0 * r - 1.0) / r;
                if omega > 0.0 {
                    Ok(omega)
                } else {
                    Err(Error::NotContractive(format!(
                        "unbiased rand keeping {} of {d} has E‖Q(x) − x‖² = {:.3}‖x‖²",
                        self.kept(d),
                        (1.0 - r) / r
                    )))
                }
            }
            CompressorKind::Qsgd { k } => Ok(1.0 / qsgd_tau(k, d)),
        }
    }

    /// Exact wire cost of one message of length `d`.
    pub fn bits(&self, d: usize) -> u64 {
        let value = self.value_bits as u64;
        let d64 = d as u64;
        match self.kind {
            CompressorKind::Identity => d64 * value,
            CompressorKind::Top { .. } | CompressorKind::Rand { .. } => {
                let index = self.index_bits.map_or_else(|| ceil_log2(d), u64::from);
                self.kept(d) as u64 * (value + index)
            }
            CompressorKind::Qsgd { k } => value + d64 * (1 + (k as u64 - 1)),
        }
    }

    /// Apply `Q` to `x`, drawing fresh randomness from `rng`.
    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<CompressedMessage> {
        let mut dense = vec![0.0; x.len()];
        let bits = self.compress_into(x, &mut dense, rng)?;
        Ok(CompressedMessage { dense, bits })
    }

    /// Allocation-free variant of [`compress`](Self::compress); overwrites
    /// `out` and returns the wire cost.
    pub fn compress_into<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        out: &mut [f64],
        rng: &mut R,
    ) -> Result<u64> {
        let d = x.len();
        if d == 0 {
            return Err(Error::invalid("cannot compress an empty vector"));
        }
        if out.len() != d {
            return Err(Error::invalid("output buffer length mismatch"));
        }
        self.validate()?;
        match self.kind {
            CompressorKind::Identity => out.copy_from_slice(x),
            CompressorKind::Top { .. } => top_into(x, self.kept(d), out),
            CompressorKind::Rand { unbiased, .. } => {
                let m = self.kept(d);
                let scale = if unbiased { d as f64 / m as f64 } else { 1.0 };
                out.fill(0.0);
                for i in index::sample(rng, d, m) {
                    out[i] = x[i] * scale;
                }
            }
            CompressorKind::Qsgd { k } => qsgd_into(x, k, out, rng),
        }
        Ok(self.bits(d))
    }
}

/// `ω` of `spec` on length-`d` vectors.
pub fn omega_of(spec: &CompressionSpec, d: usize) -> Result<f64> {
    spec.omega(d)
}

/// Wire cost of `msg`, which `spec` produced from a length-`d` vector.
pub fn bits_of(msg: &CompressedMessage, spec: &CompressionSpec, d: usize) -> u64 {
    debug_assert_eq!(msg.dense.len(), d);
    spec.bits(d)
}

pub fn compress<R: Rng + ?Sized>(
    spec: &CompressionSpec,
    x: &[f64],
    rng: &mut R,
) -> Result<CompressedMessage> {
    spec.compress(x, rng)
}

fn kept_count(fraction: f64, d: usize) -> usize {
    // The small slack keeps e.g. 0.1 · 300 = 30.000000000000004 at 30.
    let m = (fraction * d as f64 - 1e-9).ceil() as usize;
    m.clamp(1, d.max(1))
}

fn ceil_log2(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

fn qsgd_levels(k: u32) -> f64 {
    (1u64 << (k - 1)) as f64
}

fn qsgd_tau(k: u32, d: usize) -> f64 {
    let s = qsgd_levels(k);
    let df = d as f64;
    1.0 + (df / (s * s)).min(df.sqrt() / s)
}

fn top_into(x: &[f64], m: usize, out: &mut [f64]) {
    out.fill(0.0);
    let d = x.len();
    if m >= d {
        out.copy_from_slice(x);
        return;
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.select_nth_unstable_by(m - 1, |&a, &b| {
        x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b))
    });
    for &i in &idx[..m] {
        out[i] = x[i];
    }
}

fn qsgd_into<R: Rng + ?Sized>(x: &[f64], k: u32, out: &mut [f64], rng: &mut R) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let s = qsgd_levels(k);
    let scale = norm / (s * qsgd_tau(k, x.len()));
    for (o, &v) in out.iter_mut().zip(x) {
        let a = v.abs() / norm * s;
        let lower = a.floor();
        let level = if rng.random::<f64>() < a - lower {
            lower + 1.0
        } else {
            lower
        };
        *o = v.signum() * level * scale;
        if v == 0.0 {
            *o = 0.0;
        }
    }
}

/// Monte Carlo estimate of `‖Q(x) − x‖²/‖x‖²` over standard Gaussian inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub max: f64,
    pub samples: usize,
}

impl ContractionEstimate {
    /// True iff the empirical mean sits within three standard errors of the
    /// `1 − omega` bound.
    pub fn certifies(&self, omega: f64) -> bool {
        self.mean <= (1.0 - omega) + 3.0 * self.std_err
    }
}

pub fn estimate_contraction<R: Rng + ?Sized>(
    spec: &CompressionSpec,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<ContractionEstimate> {
    use rand_distr::StandardNormal;
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let mut x = vec![0.0; d];
    let mut q = vec![0.0; d];
    let (mut sum, mut sum_sq, mut max) = (0.0, 0.0, 0.0f64);
    for _ in 0..samples {
        x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        spec.compress_into(&x, &mut q, rng)?;
        let err: f64 = x.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
        let nrm: f64 = x.iter().map(|a| a * a).sum();
        let r = err / nrm;
        sum += r;
        sum_sq += r * r;
        max = max.max(r);
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(ContractionEstimate {
        mean,
        std_err: (var / n).sqrt(),
        max,
        samples,
    })
}

/// `ω` after a Monte Carlo check that the operator actually contracts at
/// that ratio on length-`d` Gaussian vectors.
pub fn certified_omega<R: Rng + ?Sized>(
    spec: &CompressionSpec,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let omega = spec.omega(d)?;
    let est = estimate_contraction(spec, d, samples, rng)?;
    if est.certifies(omega) {
        Ok(omega)
    } else {
        Err(Error::NotContractive(format!(
            "{}: empirical ratio {:.4} ± {:.4} exceeds 1 − ω = {:.4}",
            spec.label(),
            est.mean,
            est.std_err,
            1.0 - omega
        )))
    }
}
