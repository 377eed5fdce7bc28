use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compression::{CompressionSpec, CompressorKind};
use crate::digraph::{self, DirectedGraph};
use crate::error::{Error, Result};

/// Which graph to run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Ring {
        n: usize,
    },
    Complete {
        n: usize,
    },
    /// Directed Erdős–Rényi graph; `p` defaults to `log(n)/n`.
    Erdos {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    /// Edge-list file.
    File {
        path: PathBuf,
    },
}

impl TopologySpec {
    /// Node count, when known without reading a file.
    pub fn n(&self) -> Option<usize> {
        match *self {
            TopologySpec::Ring { n } | TopologySpec::Complete { n } | TopologySpec::Erdos { n, .. } => {
                Some(n)
            }
            TopologySpec::File { .. } => None,
        }
    }

    /// Same family with `n` nodes. File topologies cannot be resized.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Ok(match self {
            TopologySpec::Ring { .. } => TopologySpec::Ring { n },
            TopologySpec::Complete { .. } => TopologySpec::Complete { n },
            TopologySpec::Erdos { p, seed, .. } => TopologySpec::Erdos { n, p: *p, seed: *seed },
            TopologySpec::File { .. } => {
                return Err(Error::invalid("cannot change the size of a file topology"))
            }
        })
    }

    pub fn build(&self) -> Result<DirectedGraph> {
        match self {
            TopologySpec::Ring { n } => digraph::build_ring(*n),
            TopologySpec::Complete { n } => digraph::build_complete(*n),
            TopologySpec::Erdos { n, p, seed } => {
                digraph::build_erdos_renyi(*n, p.unwrap_or_else(|| digraph::log_n_over_n(*n)), *seed)
            }
            TopologySpec::File { path } => DirectedGraph::load(path),
        }
    }
}

impl FromStr for TopologySpec {
    type Err = Error;

    /// `ring:20`, `complete:8`, `erdos:100`, `erdos:100:0.05`, `file:path`.
    /// A bare family name gets `n = 0`, to be filled in by `--n`.
    fn from_str(s: &str) -> Result<Self> {
        let ctx = "topology";
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |v: &str| -> Result<usize> {
            if v.is_empty() {
                return Ok(0);
            }
            v.parse().map_err(|_| Error::parse(ctx, format!("bad node count `{v}`")))
        };
        match kind {
            "ring" => Ok(TopologySpec::Ring { n: num(rest)? }),
            "complete" => Ok(TopologySpec::Complete { n: num(rest)? }),
            "erdos" => {
                let (n, p) = rest.split_once(':').unwrap_or((rest, ""));
                let p = if p.is_empty() {
                    None
                } else {
                    Some(p.parse().map_err(|_| Error::parse(ctx, format!("bad probability `{p}`")))?)
                };
                Ok(TopologySpec::Erdos { n: num(n)?, p, seed: 0 })
            }
            "file" if !rest.is_empty() => Ok(TopologySpec::File { path: rest.into() }),
            _ => Err(Error::parse(ctx, format!("unknown topology `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Average consensus on random initial vectors.
    Consensus,
    /// Decentralized stochastic gradient descent on the logistic benchmark.
    Sgd,
}

/// How the consensus stepsize γ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum GammaPolicy {
    /// Linear-rate consensus stepsize from the spectral profile.
    Theorem1,
    /// Stepsize for the optimization mode from the spectral profile.
    Lemma1,
    /// `γ = ω`.
    Omega,
    Manual { value: f64 },
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy::Omega
    }
}

impl GammaPolicy {
    pub fn needs_profile(&self) -> bool {
        matches!(self, GammaPolicy::Theorem1 | GammaPolicy::Lemma1)
    }
}

impl fmt::Display for GammaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaPolicy::Theorem1 => f.write_str("theorem1"),
            GammaPolicy::Lemma1 => f.write_str("lemma1"),
            GammaPolicy::Omega => f.write_str("omega"),
            GammaPolicy::Manual { value } => write!(f, "manual:{value}"),
        }
    }
}

impl FromStr for GammaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(GammaPolicy::Theorem1),
            "lemma1" => Ok(GammaPolicy::Lemma1),
            "omega" => Ok(GammaPolicy::Omega),
            _ => {
                let v = s.strip_prefix("manual:").unwrap_or(s);
                v.parse()
                    .map(|value| GammaPolicy::Manual { value })
                    .map_err(|_| Error::parse("gamma policy", format!("unknown policy `{s}`")))
            }
        }
    }
}

/// How the SGD stepsize η is chosen; `T` is the round count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum EtaPolicy {
    Manual { value: f64 },
    /// `√n / (4L√T)`.
    Convex,
    /// `2 log T / (μT)`, reported with the `p = 1 − log T / T` weighted average.
    StronglyConvex,
    /// `√n / (L√T)`.
    Nonconvex,
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::Convex
    }
}

impl EtaPolicy {
    pub fn eta(&self, n: usize, rounds: u64, l: f64, mu: Option<f64>) -> Result<f64> {
        let t = rounds as f64;
        let sqrt_n = (n as f64).sqrt();
        match *self {
            EtaPolicy::Manual { value } => Ok(value),
            EtaPolicy::Convex => Ok(sqrt_n / (4.0 * l * t.sqrt())),
            EtaPolicy::Nonconvex => Ok(sqrt_n / (l * t.sqrt())),
            EtaPolicy::StronglyConvex => {
                let mu = mu.ok_or_else(|| {
                    Error::invalid("strongly convex schedule needs a strongly convex objective")
                })?;
                Ok(2.0 * t.ln() / (mu * t))
            }
        }
    }
}

impl fmt::Display for EtaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaPolicy::Manual { value } => write!(f, "manual:{value}"),
            EtaPolicy::Convex => f.write_str("convex"),
            EtaPolicy::StronglyConvex => f.write_str("strongly_convex"),
            EtaPolicy::Nonconvex => f.write_str("nonconvex"),
        }
    }
}

impl FromStr for EtaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(EtaPolicy::Convex),
            "strongly_convex" => Ok(EtaPolicy::StronglyConvex),
            "nonconvex" => Ok(EtaPolicy::Nonconvex),
            _ => {
                let v = s.strip_prefix("manual:").unwrap_or(s);
                v.parse()
                    .map(|value| EtaPolicy::Manual { value })
                    .map_err(|_| Error::parse("eta policy", format!("unknown policy `{s}`")))
            }
        }
    }
}

fn default_m() -> usize {
    20
}

fn default_data_seed() -> u64 {
    1
}

/// Data for the SGD mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Samples per agent.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Load the dataset from this CSV instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Weight of the bounded non-convex penalty `λ Σ x_j²/(1 + x_j²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonconvex_lambda: Option<f64>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            m: default_m(),
            data_seed: default_data_seed(),
            dataset: None,
            nonconvex_lambda: None,
        }
    }
}

fn default_d() -> usize {
    300
}

fn default_eps() -> f64 {
    1e-5
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_one() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

/// Consensus round budget.
pub const CONSENSUS_BUDGET: u64 = 1_000_000;
/// SGD round budget.
pub const SGD_BUDGET: u64 = 10_000;

/// A complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub topology: TopologySpec,
    #[serde(default = "CompressionSpec::identity")]
    pub compression: CompressionSpec,
    #[serde(default)]
    pub gamma: GammaPolicy,
    #[serde(default)]
    pub eta: EtaPolicy,
    /// Parameter dimension (consensus mode; SGD takes it from the dataset
    /// when one is loaded).
    #[serde(default = "default_d")]
    pub d: usize,
    /// Round budget `T`; defaults to 10⁶ for consensus and 10⁴ for SGD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemSpec,
    /// Horizon of the spectral profile; defaults to `max(2n, 200)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Keep every k-th trace row (the first and last are always kept).
    #[serde(default = "default_one")]
    pub record_every: u64,
    /// Stop a consensus run as soon as the target accuracy is reached.
    #[serde(default = "default_true")]
    pub stop_at_eps: bool,
}

impl ExperimentConfig {
    pub fn consensus(topology: TopologySpec, compression: CompressionSpec) -> Self {
        Self {
            mode: Mode::Consensus,
            topology,
            compression,
            gamma: GammaPolicy::Omega,
            eta: EtaPolicy::Manual { value: 0.0 },
            d: default_d(),
            rounds: None,
            eps: default_eps(),
            seeds: default_seeds(),
            out: None,
            problem: ProblemSpec::default(),
            horizon: None,
            record_every: 1,
            stop_at_eps: true,
        }
    }

    pub fn sgd(topology: TopologySpec, compression: CompressionSpec, d: usize) -> Self {
        Self {
            mode: Mode::Sgd,
            gamma: GammaPolicy::Lemma1,
            eta: EtaPolicy::Convex,
            d,
            stop_at_eps: false,
            ..Self::consensus(topology, compression)
        }
    }

    pub fn rounds(&self) -> u64 {
        self.rounds.unwrap_or(match self.mode {
            Mode::Consensus => CONSENSUS_BUDGET,
            Mode::Sgd => SGD_BUDGET,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds() == 0 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        if self.topology.n() == Some(0) {
            return Err(Error::invalid("topology needs at least one node"));
        }
        if self.problem.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if let GammaPolicy::Manual { value } = self.gamma {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::invalid(format!("gamma = {value} is outside (0, 1]")));
            }
        }
        if let EtaPolicy::Manual { value } = self.eta {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("eta = {value} must be nonnegative")));
            }
        }
        if let Some(l) = self.problem.nonconvex_lambda {
            if !(l >= 0.0) {
                return Err(Error::invalid("nonconvex_lambda must be nonnegative"));
            }
        }
        self.compression.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e.to_string()))
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is always serializable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Apply command-line style overrides.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(t) = &o.topology {
            self.topology = match (t.n(), self.topology.n()) {
                (Some(0), Some(n)) => t.with_n(n)?,
                _ => t.clone(),
            };
        }
        if let Some(n) = o.n {
            self.topology = self.topology.with_n(n)?;
        }
        if let Some(c) = &o.compressor {
            self.compression = parse_compressor(c)?;
        }
        if let Some(omega) = o.omega {
            self.compression = with_fraction(&self.compression, omega)?;
        }
        if let Some(p) = o.gamma_policy {
            self.gamma = p;
        }
        if let Some(value) = o.gamma {
            self.gamma = GammaPolicy::Manual { value };
        }
        if let Some(p) = o.eta_policy {
            self.eta = p;
        }
        if let Some(value) = o.eta {
            self.eta = EtaPolicy::Manual { value };
        }
        if let Some(r) = o.rounds {
            self.rounds = Some(r);
        }
        if let Some(e) = o.eps {
            self.eps = e;
        }
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(d) = o.d {
            self.d = d;
        }
        if let Some(m) = o.m {
            self.problem.m = m;
        }
        if let Some(l) = o.nonconvex_lambda {
            self.problem.nonconvex_lambda = Some(l);
        }
        self.validate()
    }
}

/// Flag-level overrides of an [`ExperimentConfig`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub topology: Option<TopologySpec>,
    pub n: Option<usize>,
    pub omega: Option<f64>,
    pub compressor: Option<String>,
    pub gamma: Option<f64>,
    pub gamma_policy: Option<GammaPolicy>,
    pub eta: Option<f64>,
    pub eta_policy: Option<EtaPolicy>,
    pub rounds: Option<u64>,
    pub eps: Option<f64>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub nonconvex_lambda: Option<f64>,
}

/// `identity`, `top:0.1`, `rand:0.1`, `rand_unbiased:0.75`, `qsgd:2`.
/// Sparsifiers without a fraction default to 1 (set it with `--omega`).
pub fn parse_compressor(s: &str) -> Result<CompressionSpec> {
    let ctx = "compressor";
    let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
    let frac = || -> Result<f64> {
        if arg.is_empty() {
            return Ok(1.0);
        }
        arg.parse().map_err(|_| Error::parse(ctx, format!("bad fraction `{arg}`")))
    };
    let spec = match kind {
        "identity" => CompressionSpec::identity(),
        "top" => CompressionSpec::top(frac()?),
        "rand" => CompressionSpec::rand(frac()?),
        "rand_unbiased" => CompressionSpec::rand_unbiased(frac()?),
        "qsgd" => CompressionSpec::qsgd(
            arg.parse()
                .map_err(|_| Error::parse(ctx, format!("qsgd needs a bit count, got `{arg}`")))?,
        ),
        _ => return Err(Error::parse(ctx, format!("unknown compressor `{s}`"))),
    };
    spec.validate()?;
    Ok(spec)
}

/// The sparsifier `base` with its kept fraction set to `omega`, which is its
/// compression ratio when `omega·d` is an integer.
pub fn with_fraction(base: &CompressionSpec, omega: f64) -> Result<CompressionSpec> {
    let kind = match base.kind {
        CompressorKind::Top { .. } => CompressorKind::Top { fraction: omega },
        CompressorKind::Rand { unbiased, .. } => CompressorKind::Rand {
            fraction: omega,
            unbiased,
        },
        CompressorKind::Identity if omega == 1.0 => CompressorKind::Identity,
        _ => {
            return Err(Error::invalid(format!(
                "cannot set ω = {omega} on compressor `{}`; use top or rand",
                base.label()
            )))
        }
    };
    let spec = CompressionSpec { kind, ..base.clone() };
    spec.validate()?;
    Ok(spec)
}
