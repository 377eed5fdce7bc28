use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{with_fraction, EtaPolicy, ExperimentConfig, GammaPolicy, Mode};
use super::metrics::{EpsTracker, RunStatus};
use super::output::{save_rows, Manifest, ManifestProfile, SweepRow, TraceRow};
use crate::compression::CompressionSpec;
use crate::digraph::{default_horizon, spectral_profile, DirectedGraph, MixingMatrix, SpectralProfile};
use crate::error::{Error, Result};
use crate::problems::{
    gen_cone_dataset, solve_centralized, GradOracle, LogRegProblem, NonconvexLogReg,
};
use crate::pushsum::{
    psi_z, stepsize_lemma1, stepsize_theorem1, NetworkState, Protocol, RoundTrace, StepsizePlan,
    StepsizeSource,
};
use crate::rng::{Purpose, SeedStreams};

/// Gradient-norm tolerance used to compute `f*`.
pub const SOLVER_TOLERANCE: f64 = 1e-9;

/// The objective of an SGD run.
#[derive(Debug, Clone, PartialEq)]
pub enum SgdObjective {
    LogReg(LogRegProblem),
    Nonconvex(NonconvexLogReg),
}

impl SgdObjective {
    pub fn oracle(&self) -> &dyn GradOracle {
        match self {
            SgdObjective::LogReg(p) => p,
            SgdObjective::Nonconvex(p) => p,
        }
    }

    pub fn data(&self) -> &LogRegProblem {
        match self {
            SgdObjective::LogReg(p) => p,
            SgdObjective::Nonconvex(p) => &p.base,
        }
    }
}

/// A resolved experiment: graph, mixing matrix, stepsizes and data.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub graph: DirectedGraph,
    pub mixing: MixingMatrix,
    pub profile: Option<SpectralProfile>,
    pub d: usize,
    pub omega: f64,
    pub plan: StepsizePlan,
    pub objective: Option<SgdObjective>,
    /// `(x*, f*)` for convex objectives.
    pub optimum: Option<(Vec<f64>, f64)>,
}

/// Result of one seeded run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub status: RunStatus,
    pub rounds_to_eps: Option<u64>,
    pub rounds_run: u64,
    pub bits_cum: u64,
    pub trace: Vec<TraceRow>,
    /// Time average of the mean iterates `x̄(0..T−1)`: uniform, or the
    /// `p = 1 − log T / T` weighted average under the strongly convex schedule.
    pub average: Option<Vec<f64>>,
    /// `f(average) − f*` (or `f(average)` without a known optimum).
    pub average_objective: Option<f64>,
    pub final_state: NetworkState,
}

fn build_objective(config: &ExperimentConfig, n: usize) -> Result<SgdObjective> {
    let p = &config.problem;
    let data = match &p.dataset {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            LogRegProblem::read_csv(f)?
        }
        None => gen_cone_dataset(n, p.m, config.d, p.data_seed)?,
    };
    if data.n() != n {
        return Err(Error::invalid(format!(
            "dataset has {} agents but the graph has {n} nodes",
            data.n()
        )));
    }
    Ok(match p.nonconvex_lambda {
        Some(l) => SgdObjective::Nonconvex(NonconvexLogReg::new(data, l)?),
        None => SgdObjective::LogReg(data),
    })
}

impl Setup {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let graph = config.topology.build()?;
        let mixing = MixingMatrix::out_degree(&graph)?;
        let profile = if config.gamma.needs_profile() {
            Some(compute_profile(&config, &mixing)?)
        } else {
            None
        };
        let (objective, optimum) = match config.mode {
            Mode::Consensus => (None, None),
            Mode::Sgd => {
                let obj = build_objective(&config, graph.n())?;
                let optimum = match &obj {
                    SgdObjective::LogReg(p) => Some(solve_centralized(p, SOLVER_TOLERANCE)?),
                    SgdObjective::Nonconvex(_) => None,
                };
                (Some(obj), optimum)
            }
        };
        Self::assemble(config, graph, mixing, profile, objective, optimum)
    }

    /// Build from precomputed parts. `profile` must be present when the
    /// gamma policy needs it.
    pub fn assemble(
        config: ExperimentConfig,
        graph: DirectedGraph,
        mixing: MixingMatrix,
        profile: Option<SpectralProfile>,
        objective: Option<SgdObjective>,
        optimum: Option<(Vec<f64>, f64)>,
    ) -> Result<Self> {
        config.validate()?;
        let n = graph.n();
        let d = objective.as_ref().map_or(config.d, |o| o.data().d());
        let omega = config.compression.omega(d)?;
        let beta = mixing.beta();
        let mut plan = match config.gamma {
            GammaPolicy::Theorem1 | GammaPolicy::Lemma1 if n == 1 => StepsizePlan {
                gamma: 1.0,
                eta: 0.0,
                rho: None,
                source: StepsizeSource::Manual,
            },
            GammaPolicy::Theorem1 | GammaPolicy::Lemma1 => {
                let prof = profile
                    .as_ref()
                    .ok_or_else(|| Error::invalid("gamma policy needs a spectral profile"))?;
                if config.gamma == GammaPolicy::Theorem1 {
                    stepsize_theorem1(prof, beta, omega)?
                } else {
                    stepsize_lemma1(prof, beta, omega)?
                }
            }
            GammaPolicy::Omega => StepsizePlan {
                gamma: omega,
                eta: 0.0,
                rho: None,
                source: StepsizeSource::Manual,
            },
            GammaPolicy::Manual { value } => StepsizePlan {
                gamma: value,
                eta: 0.0,
                rho: None,
                source: StepsizeSource::Manual,
            },
        };
        if let Some(obj) = &objective {
            let c = obj.oracle().constants();
            plan.eta = config.eta.eta(n, config.rounds(), c.l, c.mu)?;
        }
        Ok(Self {
            config,
            graph,
            mixing,
            profile,
            d,
            omega,
            plan,
            objective,
            optimum,
        })
    }

    /// Same graph and data with another compressor and gamma policy.
    pub fn variant(&self, compression: CompressionSpec, gamma: GammaPolicy) -> Result<Self> {
        let mut config = self.config.clone();
        config.compression = compression;
        config.gamma = gamma;
        let profile = match (&self.profile, gamma.needs_profile()) {
            (Some(p), _) => Some(p.clone()),
            (None, true) => Some(compute_profile(&config, &self.mixing)?),
            (None, false) => None,
        };
        Self::assemble(
            config,
            self.graph.clone(),
            self.mixing.clone(),
            profile,
            self.objective.clone(),
            self.optimum.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn gamma(&self) -> f64 {
        self.plan.gamma
    }

    pub fn eta(&self) -> f64 {
        self.plan.eta
    }

    /// Gaussian initial vectors, one stream per agent.
    pub fn initial_state(&self, seed: u64) -> Result<NetworkState> {
        let (n, d) = (self.n(), self.d);
        match self.config.mode {
            Mode::Sgd => NetworkState::zeros(n, d),
            Mode::Consensus => {
                let streams = SeedStreams::new(seed);
                let mut x = Vec::with_capacity(n * d);
                for i in 0..n {
                    let mut rng = streams.stream(Purpose::InitialState, 0, i as u64);
                    x.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                }
                NetworkState::from_flat(n, d, x)
            }
        }
    }

    pub fn run(&self, seed: u64) -> Result<RunResult> {
        self.run_observed(seed, true, &mut |_, _| {})
    }

    /// Run one seed, calling `observe` after every round.
    pub fn run_observed(
        &self,
        seed: u64,
        keep_trace: bool,
        observe: &mut dyn FnMut(&NetworkState, &RoundTrace),
    ) -> Result<RunResult> {
        match self.config.mode {
            Mode::Consensus => self.run_consensus(seed, keep_trace, observe),
            Mode::Sgd => self.run_sgd(seed, keep_trace, observe),
        }
    }

    fn protocol(&self, seed: u64) -> Result<Protocol<'_>> {
        Protocol::new(
            &self.mixing,
            self.plan.gamma,
            &self.config.compression,
            SeedStreams::new(seed),
        )
    }

    fn run_consensus(
        &self,
        seed: u64,
        keep_trace: bool,
        observe: &mut dyn FnMut(&NetworkState, &RoundTrace),
    ) -> Result<RunResult> {
        let cfg = &self.config;
        let proto = self.protocol(seed)?;
        let mut state = self.initial_state(seed)?;
        let psi0 = psi_z(&state, state.initial_mean());
        let mut tracker = EpsTracker::new(psi0, cfg.eps)?;
        let mut rec = Recorder::new(keep_trace, cfg.record_every);
        let mut bits = 0u64;
        let row = |t, psi_z: f64, psi_x, bits_cum, status| TraceRow {
            t,
            psi_z,
            psi_x,
            bits_cum,
            objective: None,
            status,
            objective_mean: None,
            objective_agent0: None,
        };
        rec.push(row(0, psi0, psi0 * psi0, 0, RunStatus::Running), false);

        let mut status = RunStatus::BudgetExhausted;
        if tracker.observe(0, psi0) && cfg.stop_at_eps {
            status = RunStatus::Converged;
        } else {
            for _ in 0..cfg.rounds() {
                let tr = proto.consensus_round(&mut state)?;
                bits += tr.bits_sent;
                observe(&state, &tr);
                let hit = tracker.observe(tr.t, tr.psi_z);
                let r = row(tr.t, tr.psi_z, tr.psi_x, bits, RunStatus::Running);
                if tr.diverged(&state) {
                    status = RunStatus::Diverged;
                    rec.push(r, true);
                    break;
                }
                if hit && cfg.stop_at_eps {
                    status = RunStatus::Converged;
                    rec.push(r, true);
                    break;
                }
                rec.push(r, false);
            }
            if status == RunStatus::BudgetExhausted && tracker.hit().is_some() {
                status = RunStatus::Converged;
            }
        }
        let last = rec.last.expect("initial row is always recorded");
        let mut trace = rec.finish();
        trace.last_mut().unwrap().status = status;
        Ok(RunResult {
            seed,
            status,
            rounds_to_eps: tracker.hit().filter(|_| status == RunStatus::Converged),
            rounds_run: last.t,
            bits_cum: bits,
            trace,
            average: None,
            average_objective: None,
            final_state: state,
        })
    }

    fn run_sgd(
        &self,
        seed: u64,
        keep_trace: bool,
        observe: &mut dyn FnMut(&NetworkState, &RoundTrace),
    ) -> Result<RunResult> {
        let cfg = &self.config;
        let obj = self
            .objective
            .as_ref()
            .ok_or_else(|| Error::invalid("SGD run without an objective"))?;
        let oracle = obj.oracle();
        let f_star = self.optimum.as_ref().map(|o| o.1);
        let proto = self.protocol(seed)?;
        let mut state = self.initial_state(seed)?;
        let rounds = cfg.rounds();
        let eta = self.plan.eta;

        let mut averager = Averager::new(self.d, rounds, cfg.eta);
        let mut rec = Recorder::new(keep_trace, cfg.record_every);
        let mut bits = 0u64;
        let row = |state: &NetworkState, t, psi_z: f64, psi_x, bits_cum| {
            let mean = state.mean();
            let fm = oracle.value(&mean);
            TraceRow {
                t,
                psi_z,
                psi_x,
                bits_cum,
                objective: Some(fm - f_star.unwrap_or(0.0)),
                status: RunStatus::Running,
                objective_mean: Some(fm),
                objective_agent0: Some(oracle.value(state.z_row(0))),
            }
        };
        let psi0 = psi_z(&state, &state.mean());
        if keep_trace {
            rec.push(row(&state, 0, psi0, 0.0, 0), false);
        } else {
            rec.skip(0);
        }
        let mut status = RunStatus::Completed;
        for _ in 0..rounds {
            averager.push(&state.mean());
            let tr = proto.sgd_round(&mut state, eta, oracle, false)?;
            bits += tr.bits_sent;
            observe(&state, &tr);
            let diverged = tr.diverged(&state);
            if diverged {
                status = RunStatus::Diverged;
            }
            if keep_trace && (diverged || rec.wants(tr.t) || tr.t == rounds) {
                rec.push(row(&state, tr.t, tr.psi_z, tr.psi_x, bits), true);
            } else {
                rec.skip(tr.t);
            }
            if diverged {
                break;
            }
        }
        let rounds_run = state.t;
        let mut trace = rec.finish();
        if let Some(last) = trace.last_mut() {
            last.status = status;
        }
        let average = (status == RunStatus::Completed).then(|| averager.finish());
        let average_objective = average
            .as_ref()
            .map(|a| oracle.value(a) - f_star.unwrap_or(0.0));
        Ok(RunResult {
            seed,
            status,
            rounds_to_eps: None,
            rounds_run,
            bits_cum: bits,
            trace,
            average,
            average_objective,
            final_state: state,
        })
    }

    pub fn manifest(&self, files: Vec<String>) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            seeds: self.config.seeds.clone(),
            n: self.n(),
            omega: self.omega,
            gamma: self.plan.gamma,
            eta: self.plan.eta,
            rho: self.plan.rho,
            spectral: ManifestProfile::new(self.mixing.beta(), self.profile.as_ref()),
            f_star: self.optimum.as_ref().map(|o| o.1),
            files,
        }
    }

    /// Run every configured seed and write `<prefix>seed<k>.csv` traces plus
    /// `manifest.json` into `dir`.
    pub fn run_to_dir(&self, dir: &Path, prefix: &str) -> Result<Vec<RunResult>> {
        let results: Vec<RunResult> = self
            .config
            .seeds
            .par_iter()
            .map(|&s| self.run(s))
            .collect::<Result<_>>()?;
        let mut files = Vec::new();
        for r in &results {
            let name = format!("{prefix}seed{}.csv", r.seed);
            save_rows(&r.trace, &dir.join(&name))?;
            files.push(name);
        }
        let manifest_name = if prefix.is_empty() {
            "manifest.json".to_string()
        } else {
            format!("{prefix}manifest.json")
        };
        self.manifest(files).save(&dir.join(manifest_name))?;
        Ok(results)
    }
}

fn compute_profile(config: &ExperimentConfig, w: &MixingMatrix) -> Result<SpectralProfile> {
    let horizon = config.horizon.unwrap_or_else(|| default_horizon(w.n()));
    spectral_profile(w, horizon)
}

/// Keeps every `every`-th row plus forced ones.
struct Recorder {
    keep: bool,
    every: u64,
    rows: Vec<TraceRow>,
    last: Option<TraceRow>,
}

impl Recorder {
    fn new(keep: bool, every: u64) -> Self {
        Self {
            keep,
            every,
            rows: Vec::new(),
            last: None,
        }
    }

    fn wants(&self, t: u64) -> bool {
        t % self.every == 0
    }

    fn push(&mut self, row: TraceRow, force: bool) {
        if self.keep && (force || self.wants(row.t)) {
            self.rows.push(row);
        }
        self.last = Some(row);
    }

    fn skip(&mut self, t: u64) {
        if let Some(l) = self.last.as_mut() {
            l.t = t;
        } else {
            self.last = Some(TraceRow {
                t,
                psi_z: 0.0,
                psi_x: 0.0,
                bits_cum: 0,
                objective: None,
                status: RunStatus::Running,
                objective_mean: None,
                objective_agent0: None,
            });
        }
    }

    /// Recorded rows; the last round is always included.
    fn finish(mut self) -> Vec<TraceRow> {
        if let Some(last) = self.last {
            if self.keep && self.rows.last().map(|r| r.t) != Some(last.t) {
                self.rows.push(last);
            }
            if !self.keep {
                self.rows.push(last);
            }
        }
        self.rows
    }
}

/// Streaming time average of `x̄(0), …, x̄(T−1)`.
struct Averager {
    sum: Vec<f64>,
    weight: f64,
    p: Option<f64>,
}

impl Averager {
    fn new(d: usize, rounds: u64, eta: EtaPolicy) -> Self {
        let t = rounds as f64;
        let p = (eta == EtaPolicy::StronglyConvex && rounds >= 2).then(|| 1.0 - t.ln() / t);
        Self {
            sum: vec![0.0; d],
            weight: 0.0,
            p,
        }
    }

    fn push(&mut self, x: &[f64]) {
        if let Some(p) = self.p {
            // Σ p^{T−1−k} x̄(k), built by Horner's rule.
            self.sum.iter_mut().for_each(|s| *s *= p);
            self.weight *= p;
        }
        self.sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
        self.weight += 1.0;
    }

    fn finish(self) -> Vec<f64> {
        let w = self.weight;
        self.sum.into_iter().map(|s| s / w).collect()
    }
}

/// Rows of (n, ω, gamma policy, seed) cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Spectral quantities of each graph, in the order of `ns`.
    pub spectra: Vec<(usize, ManifestProfile)>,
}

impl SweepResult {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_rows(&self.rows, path)
    }

    pub fn get(&self, n: usize, omega: f64, policy: &str) -> impl Iterator<Item = &SweepRow> + '_ {
        let policy = policy.to_string();
        self.rows
            .iter()
            .filter(move |r| r.n == n && r.omega == omega && r.gamma_policy == policy)
    }
}

/// Run the full cross product `ns × omegas × policies × base.seeds` of
/// consensus runs. The base compressor must be a sparsifier, whose kept
/// fraction is set to each `ω`. Cells run in parallel; a cell whose round
/// fails numerically is reported as diverged.
pub fn sweep_consensus(
    ns: &[usize],
    omegas: &[f64],
    policies: &[GammaPolicy],
    base: &ExperimentConfig,
) -> Result<SweepResult> {
    if ns.is_empty() || omegas.is_empty() || policies.is_empty() {
        return Err(Error::invalid("sweep lists must be non-empty"));
    }
    let mut base = base.clone();
    base.mode = Mode::Consensus;
    base.stop_at_eps = true;
    let need_profile = policies.iter().any(GammaPolicy::needs_profile);

    let graphs: Vec<(DirectedGraph, MixingMatrix, Option<SpectralProfile>)> = ns
        .par_iter()
        .map(|&n| {
            let mut cfg = base.clone();
            if cfg.topology.n() != Some(n) {
                cfg.topology = cfg.topology.with_n(n)?;
            }
            let g = cfg.topology.build()?;
            let w = MixingMatrix::out_degree(&g)?;
            let p = if need_profile && n > 1 {
                Some(compute_profile(&cfg, &w)?)
            } else {
                None
            };
            Ok((g, w, p))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        for &omega in omegas {
            for policy in policies {
                for &seed in &base.seeds {
                    cells.push((k, n, omega, *policy, seed));
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(k, n, omega, policy, seed)| -> Result<SweepRow> {
            let (g, w, p) = &graphs[k];
            let mut cfg = base.clone();
            cfg.topology = match cfg.topology.with_n(n) {
                Ok(t) => t,
                Err(_) => cfg.topology.clone(),
            };
            cfg.compression = with_fraction(&base.compression, omega)?;
            cfg.gamma = policy;
            cfg.seeds = vec![seed];
            let setup = Setup::assemble(cfg, g.clone(), w.clone(), p.clone(), None, None)?;
            let (status, rounds) = match setup.run_observed(seed, false, &mut |_, _| {}) {
                Ok(r) => (r.status, r.rounds_to_eps),
                Err(Error::NumericFailure(_)) => (RunStatus::Diverged, None),
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                n,
                omega,
                gamma_policy: policy.to_string(),
                rounds_to_eps: rounds,
                status,
                seed,
                gamma: setup.gamma(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spectra = ns
        .iter()
        .zip(&graphs)
        .map(|(&n, (_, w, p))| (n, ManifestProfile::new(w.beta(), p.as_ref())))
        .collect();
    Ok(SweepResult { rows, spectra })
}

/// Baseline variants reported next to a logistic-regression run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Uncompressed push-sum SGD (`γ = 1`, identity compressor).
    NoCompression,
    /// The configured compressor with `γ` fixed at 1.
    GammaOne,
}

impl Baseline {
    pub fn label(&self) -> &'static str {
        match self {
            Baseline::NoCompression => "no_compression",
            Baseline::GammaOne => "gamma_one",
        }
    }

    pub fn setup(&self, main: &Setup) -> Result<Setup> {
        let gamma = GammaPolicy::Manual { value: 1.0 };
        match self {
            Baseline::NoCompression => main.variant(CompressionSpec::identity(), gamma),
            Baseline::GammaOne => main.variant(main.config.compression.clone(), gamma),
        }
    }
}

/// Logistic-regression run with optional baselines. Traces go to
/// `<dir>/<label>_seed<k>.csv`, one manifest per variant.
pub fn run_logreg(
    config: ExperimentConfig,
    baselines: &[Baseline],
    dir: Option<&Path>,
) -> Result<Vec<(String, Vec<RunResult>)>> {
    if config.mode != Mode::Sgd {
        return Err(Error::invalid("logistic regression needs mode = \"sgd\""));
    }
    let main = Setup::new(config)?;
    let mut variants = vec![("compressed".to_string(), main.clone())];
    for b in baselines {
        variants.push((b.label().to_string(), b.setup(&main)?));
    }
    variants
        .into_iter()
        .map(|(label, setup)| {
            let results = match dir {
                Some(dir) => setup.run_to_dir(dir, &format!("{label}_"))?,
                None => setup
                    .config
                    .seeds
                    .par_iter()
                    .map(|&s| setup.run(s))
                    .collect::<Result<_>>()?,
            };
            Ok((label, results))
        })
        .collect()
}
