//! Decentralized logistic regression on the two-cone dataset: suboptimality
//! against bits sent, with and without compression.
//!
//! Pass a directory as the first argument to also write the traces.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::{run_logreg, Baseline, ExperimentConfig, TopologySpec};

fn main() -> compressed_pushsum::Result<()> {
    let mut cfg = ExperimentConfig::sgd(
        TopologySpec::Erdos { n: 20, p: None, seed: 1 },
        CompressionSpec::qsgd(2),
        50,
    );
    cfg.rounds = Some(2000);
    cfg.record_every = 500;
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let runs = run_logreg(cfg, &[Baseline::NoCompression], out.as_deref())?;
    for (label, results) in runs {
        println!("{label}");
        for row in &results[0].trace {
            println!(
                "  t={:>5}  bits={:>12}  f(x̄)-f*={:.4e}  f(z_0)={:.4e}",
                row.t,
                row.bits_cum,
                row.objective.unwrap_or(f64::NAN),
                row.objective_agent0.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
