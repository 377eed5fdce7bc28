use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::{
    output::write_atomic, run_logreg, sweep_consensus, Baseline, EtaPolicy, ExperimentConfig,
    GammaPolicy, Mode, Overrides, Setup, TopologySpec,
};
use compressed_pushsum::problems::{certify_separable, gen_cone_dataset, LogRegProblem};

/// Compressed push-sum consensus and decentralized SGD over directed graphs.
#[derive(Parser)]
#[command(name = "cpsum", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rounds-to-accuracy over a grid of (n, ω, γ policy).
    ConsensusSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
        ns: Vec<usize>,
        /// Comma-separated compression ratios.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.5,1")]
        omegas: Vec<f64>,
        /// Comma-separated gamma policies (theorem1, lemma1, omega, manual:<v>).
        #[arg(long, value_delimiter = ',', default_value = "omega,manual:1")]
        gamma_policies: Vec<GammaPolicy>,
    },
    /// Decentralized logistic regression with optional baselines.
    Logreg {
        #[command(flatten)]
        common: Common,
        /// Also run the uncompressed push-sum SGD baseline.
        #[arg(long)]
        no_compression_baseline: bool,
        /// Also run the configured compressor with γ = 1.
        #[arg(long)]
        gamma_one_baseline: bool,
    },
    /// One experiment as configured, every seed.
    SingleRun {
        #[command(flatten)]
        common: Common,
    },
    /// Generate or inspect synthetic datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Write a two-cone dataset as CSV.
    Gen {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a dataset CSV.
    Dump {
        path: PathBuf,
        /// Print every row instead of the summary.
        #[arg(long)]
        rows: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ring:<n>, complete:<n>, erdos:<n>[:<p>] or file:<path>.
    #[arg(long)]
    topology: Option<TopologySpec>,
    #[arg(long)]
    n: Option<usize>,
    /// Kept fraction of the top/rand compressor.
    #[arg(long)]
    omega: Option<f64>,
    /// identity, top:<f>, rand:<f>, rand_unbiased:<f> or qsgd:<k>.
    #[arg(long)]
    compressor: Option<String>,
    /// Fixed consensus stepsize.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_policy: Option<GammaPolicy>,
    /// Fixed SGD stepsize.
    #[arg(long)]
    eta: Option<f64>,
    /// manual:<v>, convex, strongly_convex or nonconvex.
    #[arg(long)]
    eta_policy: Option<EtaPolicy>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Master seeds (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// Samples per agent.
    #[arg(long)]
    m: Option<usize>,
    /// Weight of the bounded non-convex penalty.
    #[arg(long)]
    nonconvex_lambda: Option<f64>,
}

impl Common {
    fn config(&self, default: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => default,
        };
        cfg.apply(&Overrides {
            topology: self.topology.clone(),
            n: self.n,
            omega: self.omega,
            compressor: self.compressor.clone(),
            gamma: self.gamma,
            gamma_policy: self.gamma_policy,
            eta: self.eta,
            eta_policy: self.eta_policy,
            rounds: self.rounds,
            eps: self.eps,
            seeds: self.seed.clone(),
            out: self.out.clone(),
            d: self.d,
            m: self.m,
            nonconvex_lambda: self.nonconvex_lambda,
        })?;
        Ok(cfg)
    }
}

fn default_consensus() -> ExperimentConfig {
    ExperimentConfig::consensus(TopologySpec::Ring { n: 20 }, CompressionSpec::top(0.1))
}

fn default_logreg() -> ExperimentConfig {
    ExperimentConfig::sgd(
        TopologySpec::Erdos { n: 100, p: None, seed: 0 },
        CompressionSpec::qsgd(2),
        200,
    )
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn single_run(cfg: ExperimentConfig) -> Result<()> {
    let dir = out_dir(&cfg);
    let setup = Setup::new(cfg)?;
    println!(
        "n={} d={} ω={:.4} γ={:.4e} η={:.4e}",
        setup.n(),
        setup.d,
        setup.omega,
        setup.gamma(),
        setup.eta()
    );
    for r in setup.run_to_dir(&dir, "trace_")? {
        let last = r.trace.last().expect("traces are never empty");
        println!(
            "seed {}: {} after {} rounds, ψ_z={:.3e}, bits={}{}",
            r.seed,
            r.status,
            r.rounds_run,
            last.psi_z,
            r.bits_cum,
            r.average_objective
                .map(|v| format!(", averaged objective {v:.4e}"))
                .unwrap_or_default()
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(cfg: ExperimentConfig, ns: &[usize], omegas: &[f64], policies: &[GammaPolicy]) -> Result<()> {
    let dir = out_dir(&cfg);
    let res = sweep_consensus(ns, omegas, policies, &cfg)?;
    res.save(&dir.join("sweep.csv"))?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": cfg,
        "seeds": cfg.seeds,
        "ns": ns,
        "omegas": omegas,
        "gamma_policies": policies.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "spectral": res.spectra,
        "files": ["sweep.csv"],
    });
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    for r in &res.rows {
        println!(
            "n={:<4} ω={:<6} {:<10} {:>16} {}",
            r.n,
            r.omega,
            r.gamma_policy,
            r.status,
            r.rounds_to_eps.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    println!("wrote {}", dir.join("sweep.csv").display());
    Ok(())
}

fn dataset(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Gen { n, m, d, seed, out } => {
            let p = gen_cone_dataset(n, m, d, seed)?;
            let mut buf = Vec::new();
            p.write_csv(&mut buf)?;
            write_atomic(&out, &buf)?;
            println!("wrote {} ({} samples)", out.display(), n * m);
        }
        DatasetCmd::Dump { path, rows } => dump(&path, rows)?,
    }
    Ok(())
}

fn dump(path: &Path, rows: bool) -> Result<()> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let p = LogRegProblem::read_csv(f)?;
    if rows {
        p.write_csv(std::io::stdout().lock())?;
        return Ok(());
    }
    println!("n={} m={} d={} seed={} reg={:.3e}", p.n(), p.m(), p.d(), p.seed(), p.reg());
    for i in 0..p.n() {
        let pos = (0..p.m()).filter(|&r| p.sample(i, r).1 > 0.0).count();
        println!("agent {i}: {pos} positive, {} negative", p.m() - pos);
    }
    match certify_separable(&p) {
        Some(_) => println!("linearly separable: yes"),
        None => println!("linearly separable: not certified"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::ConsensusSweep {
            common,
            ns,
            omegas,
            gamma_policies,
        } => {
            let mut cfg = common.config(default_consensus())?;
            cfg.mode = Mode::Consensus;
            sweep(cfg, &ns, &omegas, &gamma_policies)
        }
        Cmd::Logreg {
            common,
            no_compression_baseline,
            gamma_one_baseline,
        } => {
            let cfg = common.config(default_logreg())?;
            if cfg.mode != Mode::Sgd {
                bail!("logreg needs mode = \"sgd\" in the config");
            }
            let dir = out_dir(&cfg);
            let mut baselines = Vec::new();
            if no_compression_baseline {
                baselines.push(Baseline::NoCompression);
            }
            if gamma_one_baseline {
                baselines.push(Baseline::GammaOne);
            }
            for (label, results) in run_logreg(cfg, &baselines, Some(&dir))? {
                for r in results {
                    let last = r.trace.last().expect("traces are never empty");
                    println!(
                        "{label:<15} seed {:<3} {}: final objective {:.4e}, bits {}",
                        r.seed,
                        r.status,
                        last.objective.unwrap_or(f64::NAN),
                        r.bits_cum
                    );
                }
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
        Cmd::SingleRun { common } => single_run(common.config(default_consensus())?),
        Cmd::Dataset(cmd) => dataset(cmd),
    }
}
