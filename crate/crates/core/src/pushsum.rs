//! Synchronous compressed push-sum with a consensus stepsize.
//!
//! One round, for every agent `i` in parallel:
//!
//! ```text
//! q_i      = Q(x_i − x̂_i)
//! x̂_i     += q_i                          (every out-neighbor applies the same q_i)
//! u_i      = x_i + γ Σ_j W_ij (x̂_j − x̂_i)
//! y_i      = Σ_j W_ij y_j
//! z_i      = u_i / y_i
//! x_i      = u_i                          (average consensus)
//! x_i      = u_i − η ∇f̃_i(z_i, ξ)          (stochastic optimization)
//! ```
//!
//! Since `q_i` is broadcast identically, every replica of `x̂_i` held by an
//! out-neighbor is equal; the state stores one copy per agent while bit
//! accounting still charges every directed link.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compression::CompressionSpec;
use crate::digraph::{check_gamma, MixingMatrix, SpectralProfile};
use crate::error::{Error, Result};
use crate::problems::GradOracle;
use crate::rng::{Purpose, SeedStreams};

/// A run is declared diverged once the consensus error or any parameter
/// exceeds this magnitude.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Per-round state of all agents. Matrices are stored row-major, one row
/// per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    n: usize,
    d: usize,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    pub t: u64,
    xbar0: Vec<f64>,
    replicas: Option<Vec<EdgeReplica>>,
}

#[derive(Debug, Clone, PartialEq)]
struct EdgeReplica {
    sender: usize,
    receiver: usize,
    value: Vec<f64>,
}

impl NetworkState {
    /// Initial state from `x0` given as `n` rows of length `d`:
    /// `x̂ = 0`, `y = 1`, `u = z = x0`.
    pub fn new(x0: &[Vec<f64>]) -> Result<Self> {
        let n = x0.len();
        let d = x0.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Err(Error::invalid("initial state needs n >= 1 rows of length d >= 1"));
        }
        if x0.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("initial rows have different lengths"));
        }
        let x: Vec<f64> = x0.iter().flatten().copied().collect();
        Self::from_flat(n, d, x)
    }

    pub fn from_flat(n: usize, d: usize, x: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 || x.len() != n * d {
            return Err(Error::invalid("flat state must hold n·d >= 1 values"));
        }
        let xbar0 = column_mean(&x, n, d);
        Ok(Self {
            n,
            d,
            xhat: vec![0.0; n * d],
            y: vec![1.0; n],
            u: x.clone(),
            z: x.clone(),
            x,
            t: 0,
            xbar0,
            replicas: None,
        })
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::from_flat(n, d, vec![0.0; n * d])
    }

    /// Keep one explicit copy of `x̂_j` per directed link of `w` and verify
    /// after every round that all copies agree with the shared one.
    pub fn with_edge_replicas(mut self, w: &MixingMatrix) -> Self {
        let mut reps = Vec::new();
        for i in 0..self.n {
            for &(j, _) in w.row(i) {
                if j != i {
                    reps.push(EdgeReplica {
                        sender: j,
                        receiver: i,
                        value: self.row(&self.xhat, j).to_vec(),
                    });
                }
            }
        }
        self.replicas = Some(reps);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn row<'a>(&self, m: &'a [f64], i: usize) -> &'a [f64] {
        &m[i * self.d..(i + 1) * self.d]
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        self.row(&self.x, i)
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        self.row(&self.z, i)
    }

    /// `x̄(0)`, the average of the initial rows.
    pub fn initial_mean(&self) -> &[f64] {
        &self.xbar0
    }

    /// `x̄(t) = Xᵀ1 / n`.
    pub fn mean(&self) -> Vec<f64> {
        column_mean(&self.x, self.n, self.d)
    }

    /// `1ᵀX(t)`.
    pub fn column_sums(&self) -> Vec<f64> {
        column_sum(&self.x, self.n, self.d)
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Rows of `X` as a dense matrix.
    pub fn x_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.d, &self.x)
    }
}

fn column_sum(m: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d];
    for i in 0..n {
        for (acc, v) in s.iter_mut().zip(&m[i * d..(i + 1) * d]) {
            *acc += v;
        }
    }
    s
}

fn column_mean(m: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut s = column_sum(m, n, d);
    s.iter_mut().for_each(|v| *v /= n as f64);
    s
}

/// Metrics of one completed round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Index of the state this round produced.
    pub t: u64,
    /// `‖Z(t) − X̄(0)‖_F` in consensus mode, `‖Z(t) − X̄(t)‖_F` in SGD mode.
    pub psi_z: f64,
    /// `‖Z(t) − X̄(t−1)‖_F²`.
    pub psi_x: f64,
    /// Bits sent over all directed links this round, slack scalars included.
    pub bits_sent: u64,
    /// `f(x̄(t))`, when requested in SGD mode.
    pub objective: Option<f64>,
}

impl RoundTrace {
    pub fn diverged(&self, state: &NetworkState) -> bool {
        !(self.psi_z.is_finite() && self.psi_z <= DIVERGENCE_LIMIT)
            || !(state.max_abs() <= DIVERGENCE_LIMIT)
    }
}

/// Everything a round needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct Protocol<'a> {
    pub mixing: &'a MixingMatrix,
    pub gamma: f64,
    pub compressor: &'a CompressionSpec,
    pub streams: SeedStreams,
}

impl<'a> Protocol<'a> {
    pub fn new(
        mixing: &'a MixingMatrix,
        gamma: f64,
        compressor: &'a CompressionSpec,
        streams: SeedStreams,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        compressor.validate()?;
        Ok(Self {
            mixing,
            gamma,
            compressor,
            streams,
        })
    }

    fn check(&self, state: &NetworkState) -> Result<()> {
        if self.mixing.n() != state.n {
            return Err(Error::invalid(format!(
                "mixing matrix has {} nodes, state has {}",
                self.mixing.n(),
                state.n
            )));
        }
        Ok(())
    }

    /// Compression, `x̂` update, mixing into `u`, slack update and `z`.
    /// Returns the bits sent.
    fn mix(&self, s: &mut NetworkState) -> Result<u64> {
        let (n, d) = (s.n, s.d);
        let mut bits = 0u64;
        let mut diff = vec![0.0; d];
        let mut q = vec![0.0; d];
        for i in 0..n {
            let r = i * d..(i + 1) * d;
            for ((o, a), b) in diff.iter_mut().zip(&s.x[r.clone()]).zip(&s.xhat[r.clone()]) {
                *o = a - b;
            }
            let mut rng: ChaCha8Rng = self.streams.stream(Purpose::Compression, s.t, i as u64);
            let msg_bits = self.compressor.compress_into(&diff, &mut q, &mut rng)?;
            for (h, v) in s.xhat[r].iter_mut().zip(&q) {
                *h += v;
            }
            if let Some(reps) = s.replicas.as_mut() {
                for rep in reps.iter_mut().filter(|rep| rep.sender == i) {
                    for (h, v) in rep.value.iter_mut().zip(&q) {
                        *h += v;
                    }
                }
            }
            bits += msg_bits * self.mixing.out_links(i) as u64;
        }
        bits += self.compressor.value_bits as u64 * self.mixing.total_links() as u64;

        if let Some(reps) = &s.replicas {
            for rep in reps {
                if rep.value.as_slice() != s.row(&s.xhat, rep.sender) {
                    return Err(Error::numeric(format!(
                        "replica of x̂_{} held by agent {} diverged from the shared copy",
                        rep.sender, rep.receiver
                    )));
                }
            }
        }

        let mut mixed = vec![0.0; d];
        for i in 0..n {
            mixed.fill(0.0);
            for &(j, w) in self.mixing.row(i) {
                for (m, h) in mixed.iter_mut().zip(&s.xhat[j * d..(j + 1) * d]) {
                    *m += w * h;
                }
            }
            let r = i * d..(i + 1) * d;
            for (((u, x), h), m) in s.u[r.clone()]
                .iter_mut()
                .zip(&s.x[r.clone()])
                .zip(&s.xhat[r])
                .zip(&mixed)
            {
                *u = x + self.gamma * (m - h);
            }
        }

        let y = self.mixing.apply(&s.y);
        if let Some((i, &yi)) = y.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::numeric(format!(
                "slack weight y_{i} = {yi} is not positive; the mixing matrix is broken"
            )));
        }
        s.y = y;
        for i in 0..n {
            let inv = 1.0 / s.y[i];
            for (z, u) in s.z[i * d..(i + 1) * d]
                .iter_mut()
                .zip(&s.u[i * d..(i + 1) * d])
            {
                *z = u * inv;
            }
        }
        Ok(bits)
    }

    /// One round of average consensus.
    pub fn consensus_round(&self, s: &mut NetworkState) -> Result<RoundTrace> {
        self.check(s)?;
        let bits_sent = self.mix(s)?;
        s.x.copy_from_slice(&s.u);
        s.t += 1;
        let psi_z = psi_z(s, &s.xbar0);
        Ok(RoundTrace {
            t: s.t,
            psi_z,
            psi_x: psi_z * psi_z,
            bits_sent,
            objective: None,
        })
    }

    /// One round of stochastic optimization with stepsize `eta`.
    pub fn sgd_round(
        &self,
        s: &mut NetworkState,
        eta: f64,
        oracle: &dyn GradOracle,
        evaluate_objective: bool,
    ) -> Result<RoundTrace> {
        self.check(s)?;
        if !(eta >= 0.0) {
            return Err(Error::invalid(format!("eta = {eta} must be nonnegative")));
        }
        if oracle.agents() != s.n || oracle.dim() != s.d {
            return Err(Error::invalid("oracle dimensions do not match the state"));
        }
        let prev_mean = s.mean();
        let bits_sent = self.mix(s)?;
        let psi_x = psi_z(s, &prev_mean).powi(2);

        let d = s.d;
        s.x.copy_from_slice(&s.u);
        if eta > 0.0 {
            let mut g = vec![0.0; d];
            for i in 0..s.n {
                let mut rng: ChaCha8Rng = self.streams.stream(Purpose::Gradient, s.t, i as u64);
                oracle.stochastic_grad(i, &s.z[i * d..(i + 1) * d], &mut rng, &mut g)?;
                for (x, gi) in s.x[i * d..(i + 1) * d].iter_mut().zip(&g) {
                    *x -= eta * gi;
                }
            }
        }
        s.t += 1;
        let mean = s.mean();
        Ok(RoundTrace {
            t: s.t,
            psi_z: psi_z(s, &mean),
            psi_x,
            bits_sent,
            objective: evaluate_objective.then(|| oracle.value(&mean)),
        })
    }
}

/// Average-consensus round (Option I).
pub fn consensus_round(
    state: &mut NetworkState,
    w: &MixingMatrix,
    gamma: f64,
    q: &CompressionSpec,
    streams: SeedStreams,
) -> Result<RoundTrace> {
    Protocol::new(w, gamma, q, streams)?.consensus_round(state)
}

/// Stochastic-optimization round (Option II).
pub fn sgd_round(
    state: &mut NetworkState,
    w: &MixingMatrix,
    gamma: f64,
    q: &CompressionSpec,
    eta: f64,
    oracle: &dyn GradOracle,
    streams: SeedStreams,
) -> Result<RoundTrace> {
    Protocol::new(w, gamma, q, streams)?.sgd_round(state, eta, oracle, true)
}

/// Uncompressed push-sum written directly as `X ← WX`, `y ← Wy`.
pub fn exact_pushsum_round(state: &mut NetworkState, w: &MixingMatrix) -> Result<RoundTrace> {
    if w.n() != state.n {
        return Err(Error::invalid("mixing matrix and state sizes differ"));
    }
    let (n, d) = (state.n, state.d);
    let mut next = vec![0.0; n * d];
    for i in 0..n {
        for &(j, wij) in w.row(i) {
            for (o, x) in next[i * d..(i + 1) * d]
                .iter_mut()
                .zip(&state.x[j * d..(j + 1) * d])
            {
                *o += wij * x;
            }
        }
    }
    state.x = next;
    state.u.copy_from_slice(&state.x);
    state.xhat.copy_from_slice(&state.x);
    state.y = w.apply(&state.y);
    for i in 0..n {
        for k in 0..d {
            state.z[i * d + k] = state.x[i * d + k] / state.y[i];
        }
    }
    state.t += 1;
    let psi = psi_z(state, &state.xbar0);
    let q = CompressionSpec::identity();
    let bits = (q.bits(d) + q.value_bits as u64) * w.total_links() as u64;
    Ok(RoundTrace {
        t: state.t,
        psi_z: psi,
        psi_x: psi * psi,
        bits_sent: bits,
        objective: None,
    })
}

/// `‖Z − 1 x̄ᵀ‖_F`.
pub fn psi_z(state: &NetworkState, xbar: &[f64]) -> f64 {
    assert_eq!(xbar.len(), state.d, "reference vector has wrong length");
    state
        .z
        .chunks_exact(state.d)
        .flat_map(|row| row.iter().zip(xbar).map(|(z, m)| (z - m) * (z - m)))
        .sum::<f64>()
        .sqrt()
}

/// Where a stepsize plan came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeSource {
    Theorem1,
    Lemma1,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizePlan {
    pub gamma: f64,
    pub eta: f64,
    /// Predicted linear consensus rate; only defined for the consensus plan.
    pub rho: Option<f64>,
    pub source: StepsizeSource,
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("compression ratio {omega} outside (0, 1]")))
    }
}

/// Consensus stepsize `γ = 2ωδ / (8βδ + 4β²C + 4ωδ²)` and rate
/// `ρ = 1 − ω²δ² / (16βδ + 8β²C + 8ωδ²)`.
pub fn stepsize_theorem1(profile: &SpectralProfile, beta: f64, omega: f64) -> Result<StepsizePlan> {
    check_omega(omega)?;
    let (delta, c) = (profile.delta, profile.big_c);
    let gamma = 2.0 * omega * delta
        / (8.0 * beta * delta + 4.0 * beta * beta * c + 4.0 * omega * delta * delta);
    let rho = 1.0
        - omega * omega * delta * delta
            / (16.0 * beta * delta + 8.0 * beta * beta * c + 8.0 * omega * delta * delta);
    Ok(StepsizePlan {
        gamma: gamma.min(1.0),
        eta: 0.0,
        rho: Some(rho),
        source: StepsizeSource::Theorem1,
    })
}

/// Optimization-mode consensus stepsize `γ = ωδ / (12β(β+1)(C+1))`,
/// clamped to 1 for the degenerate single-agent case `β = 0`.
pub fn stepsize_lemma1(profile: &SpectralProfile, beta: f64, omega: f64) -> Result<StepsizePlan> {
    check_omega(omega)?;
    let gamma =
        omega * profile.delta / (12.0 * beta * (beta + 1.0) * (profile.big_c + 1.0));
    Ok(StepsizePlan {
        gamma: gamma.min(1.0),
        eta: 0.0,
        rho: None,
        source: StepsizeSource::Lemma1,
    })
}
