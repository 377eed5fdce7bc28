//! Objectives and gradient oracles.
//!
//! The logistic-regression benchmark uses
//! `f_i(x) = (1/m) Σ_r log(1 + exp(−b_ir a_irᵀ x)) + (λ/2)‖x‖²` with
//! `λ = 1/(mn)`, i.e. a `(1/(2mn))‖x‖²` regularizer.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, SeedStreams};

/// Known or estimated problem constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConstants {
    /// Smoothness `L` of every local objective.
    pub l: f64,
    /// Strong convexity `μ`, when the objective is strongly convex.
    pub mu: Option<f64>,
    /// Bound on the stochastic-gradient second moment.
    pub g: Option<f64>,
    /// Bound on the stochastic-gradient standard deviation.
    pub sigma: Option<f64>,
}

/// Per-agent objectives with stochastic-gradient access.
pub trait GradOracle: Sync {
    fn agents(&self) -> usize;
    fn dim(&self) -> usize;
    fn local_value(&self, agent: usize, x: &[f64]) -> f64;
    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]);
    /// Unbiased estimate of `∇f_i(x)` written into `out`.
    fn stochastic_grad(
        &self,
        agent: usize,
        x: &[f64],
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<()>;
    fn constants(&self) -> OracleConstants;

    /// `f(x) = (1/n) Σ_i f_i(x)`.
    fn value(&self, x: &[f64]) -> f64 {
        (0..self.agents()).map(|i| self.local_value(i, x)).sum::<f64>() / self.agents() as f64
    }

    /// `∇f(x)`.
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.agents() {
            self.local_grad(i, x, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        }
        let n = self.agents() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `log(1 + e^s)` without overflow.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−s})`.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `f_i(x) = ‖x − x_i(0)‖²`; its average is minimized at the mean of the
/// initial vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusObjective {
    pub x0: Vec<Vec<f64>>,
}

impl ConsensusObjective {
    pub fn new(x0: Vec<Vec<f64>>) -> Result<Self> {
        let d = x0.first().map_or(0, Vec::len);
        if d == 0 || x0.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("consensus objective needs equal-length, non-empty rows"));
        }
        if x0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial vectors must be finite"));
        }
        Ok(Self { x0 })
    }

    /// Closed-form minimizer of `(1/n) Σ ‖x − x_i(0)‖²`.
    pub fn minimizer(&self) -> Vec<f64> {
        let n = self.x0.len() as f64;
        let mut m = vec![0.0; self.dim()];
        for row in &self.x0 {
            m.iter_mut().zip(row).for_each(|(a, v)| *a += v / n);
        }
        m
    }
}

impl GradOracle for ConsensusObjective {
    fn agents(&self) -> usize {
        self.x0.len()
    }

    fn dim(&self) -> usize {
        self.x0[0].len()
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.x0[agent])
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(&self.x0[agent]) {
            *o = 2.0 * (a - b);
        }
    }

    fn stochastic_grad(
        &self,
        agent: usize,
        x: &[f64],
        _rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<()> {
        self.local_grad(agent, x, out);
        Ok(())
    }

    fn constants(&self) -> OracleConstants {
        OracleConstants {
            l: 2.0,
            mu: Some(2.0),
            g: None,
            sigma: Some(0.0),
        }
    }
}

/// Shape of the two-cone synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    /// Distance of each cone's apex from the origin along `±e1`.
    pub offset: f64,
    /// Half-angle of each cone.
    pub half_angle: f64,
    /// Radial extent of the sampled points beyond the apex.
    pub radius: f64,
    /// Fraction of an agent's samples drawn from its majority class.
    pub majority: f64,
    /// Regeneration attempts if the separability certificate fails.
    pub retries: usize,
}

impl Default for ConeParams {
    fn default() -> Self {
        Self {
            offset: 3.0,
            half_angle: PI / 6.0,
            radius: 2.0,
            majority: 0.8,
            retries: 10,
        }
    }
}

/// Regularized logistic regression spread over `n` agents with `m`
/// samples each.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegProblem {
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
    /// `n·m` rows of length `d`, agent-major.
    features: Vec<f64>,
    labels: Vec<f64>,
    /// `λ` in `(λ/2)‖x‖²`.
    reg: f64,
}

impl LogRegProblem {
    /// Build from raw data. `features` holds `n·m` rows of length `d`, agent
    /// by agent; labels must be `±1`.
    pub fn from_parts(
        n: usize,
        m: usize,
        d: usize,
        seed: u64,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::invalid("n, m and d must be at least 1"));
        }
        if features.len() != n * m * d || labels.len() != n * m {
            return Err(Error::invalid("feature/label counts do not match n, m, d"));
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(Self {
            n,
            m,
            d,
            seed,
            features,
            labels,
            reg: 1.0 / (m * n) as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn sample(&self, agent: usize, r: usize) -> (&[f64], f64) {
        let k = agent * self.m + r;
        (&self.features[k * self.d..(k + 1) * self.d], self.labels[k])
    }

    /// Agent `i`'s feature matrix `A_i` (`m × d`).
    pub fn agent_matrix(&self, agent: usize) -> DMatrix<f64> {
        let k = agent * self.m * self.d;
        DMatrix::from_row_slice(self.m, self.d, &self.features[k..k + self.m * self.d])
    }

    /// Loss and regularizer of agent `i` without the `1/m` averaging trick,
    /// evaluated sample by sample.
    pub fn logistic_value(&self, agent: usize, x: &[f64]) -> f64 {
        let loss: f64 = (0..self.m)
            .map(|r| {
                let (a, b) = self.sample(agent, r);
                softplus(-b * dot(a, x))
            })
            .sum();
        loss / self.m as f64 + 0.5 * self.reg * norm_sq(x)
    }

    pub fn logistic_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.reg * v;
        }
        let inv_m = 1.0 / self.m as f64;
        for r in 0..self.m {
            let (a, b) = self.sample(agent, r);
            let c = -b * sigmoid(-b * dot(a, x)) * inv_m;
            out.iter_mut().zip(a).for_each(|(o, ai)| *o += c * ai);
        }
    }

    /// Gradient of the single sample `r` plus the full regularizer.
    pub fn sample_grad(&self, agent: usize, r: usize, x: &[f64], out: &mut [f64]) {
        let (a, b) = self.sample(agent, r);
        let c = -b * sigmoid(-b * dot(a, x));
        for ((o, v), ai) in out.iter_mut().zip(x).zip(a) {
            *o = self.reg * v + c * ai;
        }
    }

    /// `L = max_i ‖A_i‖²/(4m) + λ`.
    pub fn smoothness(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let a = self.agent_matrix(i);
                let s = a.singular_values().max();
                s * s / (4.0 * self.m as f64)
            })
            .fold(0.0, f64::max)
            + self.reg
    }

    /// Write the dataset as CSV: a `n,m,d,seed` header with its values,
    /// then an `agent,label,x0..` header and one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        wr.write_record(["n", "m", "d", "seed"])?;
        wr.write_record([
            self.n.to_string(),
            self.m.to_string(),
            self.d.to_string(),
            self.seed.to_string(),
        ])?;
        let mut header = vec!["agent".to_string(), "label".to_string()];
        header.extend((0..self.d).map(|k| format!("x{k}")));
        wr.write_record(&header)?;
        for i in 0..self.n {
            for r in 0..self.m {
                let (a, b) = self.sample(i, r);
                let mut rec = vec![i.to_string(), format!("{b}")];
                rec.extend(a.iter().map(|v| format!("{v:?}")));
                wr.write_record(&rec)?;
            }
        }
        wr.flush().map_err(|e| Error::io("dataset csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let ctx = "dataset csv";
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = rd.records();
        let mut next = || -> Result<csv::StringRecord> {
            records
                .next()
                .ok_or_else(|| Error::parse(ctx, "unexpected end of file"))?
                .map_err(Error::from)
        };
        let head = next()?;
        if head.iter().collect::<Vec<_>>() != ["n", "m", "d", "seed"] {
            return Err(Error::parse(ctx, "first row must be `n,m,d,seed`"));
        }
        let meta = next()?;
        let num = |k: usize| -> Result<u64> {
            meta.get(k)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::parse(ctx, format!("bad metadata field {k}")))
        };
        let (n, m, d, seed) = (num(0)? as usize, num(1)? as usize, num(2)? as usize, num(3)?);
        let cols = next()?;
        if cols.len() != d + 2 {
            return Err(Error::parse(ctx, "column header does not match d"));
        }
        let mut features = vec![0.0; n * m * d];
        let mut labels = vec![0.0; n * m];
        let mut filled = vec![0usize; n];
        for rec in records {
            let rec = rec?;
            if rec.len() != d + 2 {
                return Err(Error::parse(ctx, format!("row has {} fields", rec.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(ctx, format!("bad number `{s}`")))
            };
            let agent: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(ctx, "bad agent index"))?;
            if agent >= n || filled[agent] >= m {
                return Err(Error::parse(ctx, format!("unexpected row for agent {agent}")));
            }
            let k = agent * m + filled[agent];
            labels[k] = parse(&rec[1])?;
            for j in 0..d {
                features[k * d + j] = parse(&rec[j + 2])?;
            }
            filled[agent] += 1;
        }
        if filled.iter().any(|&c| c != m) {
            return Err(Error::parse(ctx, "some agents have fewer than m samples"));
        }
        Self::from_parts(n, m, d, seed, features, labels)
    }
}

impl GradOracle for LogRegProblem {
    fn agents(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        self.logistic_value(agent, x)
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        self.logistic_grad(agent, x, out)
    }

    fn stochastic_grad(
        &self,
        agent: usize,
        x: &[f64],
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<()> {
        let r = rng.random_range(0..self.m);
        self.sample_grad(agent, r, x, out);
        Ok(())
    }

    fn constants(&self) -> OracleConstants {
        OracleConstants {
            l: self.smoothness(),
            mu: Some(self.reg),
            g: None,
            sigma: None,
        }
    }
}

/// Unit vector whose angle to `axis · e1` is uniform in `[0, half_angle]`.
fn cone_direction<R: Rng>(rng: &mut R, d: usize, axis: f64, half_angle: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    if d == 1 {
        v[0] = axis;
        return v;
    }
    // Random unit vector orthogonal to e1.
    let mut perp: Vec<f64> = (0..d - 1).map(|_| rng.sample(StandardNormal)).collect();
    let pn = norm_sq(&perp).sqrt();
    if pn > 0.0 {
        perp.iter_mut().for_each(|p| *p /= pn);
    }
    let phi = rng.random::<f64>() * half_angle;
    v[0] = axis * phi.cos();
    for (o, p) in v[1..].iter_mut().zip(&perp) {
        *o = phi.sin() * p;
    }
    v
}

/// Two separable cones around `+e1` (label `+1`) and `−e1` (label `−1`).
///
/// A class-`c` point is `c·offset·e1 + r·v` with `r` uniform in
/// `[0, radius]` and `v` a unit vector within `half_angle` of `c·e1`.
/// Even agents draw a `majority` share of their samples from class `+1`,
/// odd agents from class `−1`. Separability is certified with a perceptron
/// and the dataset is regenerated from an advanced seed if that fails.
pub fn gen_cone_dataset(n: usize, m: usize, d: usize, seed: u64) -> Result<LogRegProblem> {
    gen_cone_dataset_with(n, m, d, seed, &ConeParams::default())
}

pub fn gen_cone_dataset_with(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
    params: &ConeParams,
) -> Result<LogRegProblem> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::invalid("n, m and d must be at least 1"));
    }
    if !(params.half_angle >= 0.0 && params.half_angle < PI / 2.0) || params.offset <= 0.0 {
        return Err(Error::invalid("cone half-angle must be in [0, π/2) and offset positive"));
    }
    let streams = SeedStreams::new(seed);
    for attempt in 0..params.retries.max(1) {
        let mut features = Vec::with_capacity(n * m * d);
        let mut labels = Vec::with_capacity(n * m);
        for i in 0..n {
            let mut rng = streams.stream(Purpose::Dataset, attempt as u64, i as u64);
            let home = if i % 2 == 0 { 1.0 } else { -1.0 };
            let majority = ((params.majority * m as f64).floor() as usize).max(m.div_ceil(2));
            for r in 0..m {
                let c = if r < majority { home } else { -home };
                let v = cone_direction(&mut rng, d, c, params.half_angle);
                let radius = rng.random::<f64>() * params.radius;
                let mut a = v.iter().map(|vk| radius * vk).collect::<Vec<_>>();
                a[0] += c * params.offset;
                features.extend(a);
                labels.push(c);
            }
        }
        let p = LogRegProblem::from_parts(n, m, d, seed, features, labels)?;
        if certify_separable(&p).is_some() {
            return Ok(p);
        }
    }
    Err(Error::ConstructionFailure(
        "cone dataset failed the separability certificate".into(),
    ))
}

/// Find `w` with `b·aᵀw > 0` for every sample by running the perceptron.
pub fn certify_separable(p: &LogRegProblem) -> Option<Vec<f64>> {
    let mut w = vec![0.0; p.d];
    for _epoch in 0..1000 {
        let mut mistakes = 0;
        for i in 0..p.n {
            for r in 0..p.m {
                let (a, b) = p.sample(i, r);
                if b * dot(a, &w) <= 0.0 {
                    w.iter_mut().zip(a).for_each(|(wk, ak)| *wk += b * ak);
                    mistakes += 1;
                }
            }
        }
        if mistakes == 0 {
            return Some(w);
        }
    }
    None
}

/// Logistic regression plus the bounded non-convex penalty
/// `λ Σ_j x_j² / (1 + x_j²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexLogReg {
    pub base: LogRegProblem,
    pub lambda: f64,
}

impl NonconvexLogReg {
    pub fn new(base: LogRegProblem, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid("penalty weight must be nonnegative"));
        }
        Ok(Self { base, lambda })
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
    }

    fn add_penalty_grad(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            let s = 1.0 + v * v;
            *o += self.lambda * 2.0 * v / (s * s);
        }
    }
}

impl GradOracle for NonconvexLogReg {
    fn agents(&self) -> usize {
        self.base.n
    }

    fn dim(&self) -> usize {
        self.base.d
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        self.base.logistic_value(agent, x) + self.penalty(x)
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        self.base.logistic_grad(agent, x, out);
        self.add_penalty_grad(x, out);
    }

    fn stochastic_grad(
        &self,
        agent: usize,
        x: &[f64],
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<()> {
        self.base.stochastic_grad(agent, x, rng, out)?;
        self.add_penalty_grad(x, out);
        Ok(())
    }

    fn constants(&self) -> OracleConstants {
        // |d²/dv² v²/(1+v²)| peaks at 2 (v = 0).
        OracleConstants {
            l: self.base.smoothness() + 2.0 * self.lambda,
            mu: None,
            g: None,
            sigma: None,
        }
    }
}

/// Minimize `f` by full-gradient descent with backtracking line search until
/// `‖∇f‖ ≤ tol`. Returns `(x*, f(x*))`.
pub fn solve_centralized(oracle: &dyn GradOracle, tol: f64) -> Result<(Vec<f64>, f64)> {
    const MAX_ITERS: usize = 1_000_000;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let d = oracle.dim();
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut fx = oracle.value(&x);
    // Any step ≤ 1/L decreases an L-smooth objective, so the search stops
    // there even when rounding hides the Armijo decrease.
    let min_step = 1.0 / oracle.constants().l;
    let mut step = min_step;
    for _ in 0..MAX_ITERS {
        oracle.grad(&x, &mut g);
        let gn2 = norm_sq(&g);
        if !gn2.is_finite() {
            return Err(Error::numeric("non-finite gradient"));
        }
        if gn2.sqrt() <= tol {
            return Ok((x, fx));
        }
        step *= 2.0;
        loop {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = xi - step * gi;
            }
            let ft = oracle.value(&trial);
            if ft <= fx - 0.5 * step * gn2 || step <= min_step {
                std::mem::swap(&mut x, &mut trial);
                fx = ft;
                break;
            }
            step = (step * 0.5).max(min_step);
        }
    }
    Err(Error::numeric(format!(
        "gradient descent did not reach ‖∇f‖ ≤ {tol:e} within {MAX_ITERS} iterations"
    )))
}

/// `(L, μ, Ĝ, σ̂)`: closed-form smoothness and strong convexity, plus
/// gradient-moment estimates over the ball of the given radius around 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l: f64,
    pub mu: f64,
    pub g_hat: f64,
    pub sigma_hat: f64,
}

pub fn estimate_constants(p: &LogRegProblem, radius: f64, points: usize, seed: u64) -> ProblemConstants {
    let d = p.d;
    let mut rng = SeedStreams::new(seed).stream(Purpose::Estimation, 0, 0);
    let mut g_sq = 0.0f64;
    let mut var = 0.0f64;
    let mut full = vec![0.0; d];
    let mut sample = vec![0.0; d];
    for k in 0..points.max(1) {
        let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nx = norm_sq(&x).sqrt();
        let r = if k == 0 { 0.0 } else { radius * rng.random::<f64>().powf(1.0 / d as f64) };
        x.iter_mut().for_each(|v| *v *= if nx > 0.0 { r / nx } else { 0.0 });
        for i in 0..p.n {
            p.logistic_grad(i, &x, &mut full);
            let (mut second, mut dev) = (0.0, 0.0);
            for s in 0..p.m {
                p.sample_grad(i, s, &x, &mut sample);
                second += norm_sq(&sample);
                dev += sample.iter().zip(&full).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            g_sq = g_sq.max(second / p.m as f64);
            var = var.max(dev / p.m as f64);
        }
    }
    ProblemConstants {
        l: p.smoothness(),
        mu: p.reg,
        g_hat: g_sq.sqrt(),
        sigma_hat: var.sqrt(),
    }
}
