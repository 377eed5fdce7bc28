//! Rounds to 1e-4 relative accuracy over a small (n, omega) grid on rings,
//! comparing gamma = omega against gamma = 1.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::{sweep_consensus, ExperimentConfig, GammaPolicy, TopologySpec};

fn main() -> compressed_pushsum::Result<()> {
    let mut base = ExperimentConfig::consensus(TopologySpec::Ring { n: 10 }, CompressionSpec::top(0.1));
    base.d = 50;
    base.eps = 1e-4;
    base.rounds = Some(200_000);
    let policies = [GammaPolicy::Omega, GammaPolicy::Manual { value: 1.0 }];
    let res = sweep_consensus(&[10, 20], &[0.05, 0.2, 0.5, 1.0], &policies, &base)?;
    for r in &res.rows {
        println!(
            "n={:<3} omega={:<5} {:<9} gamma={:<7.4} {:<17} {}",
            r.n,
            r.omega,
            r.gamma_policy,
            r.gamma,
            r.status.to_string(),
            r.rounds_to_eps.map_or(String::new(), |t| t.to_string())
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        res.save(&std::path::Path::new(&dir).join("sweep.csv"))?;
    }
    Ok(())
}
