//! With strong compression, gamma = 1 makes compressed push-sum blow up while
//! a small consensus stepsize still converges.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::{ExperimentConfig, GammaPolicy, Setup, TopologySpec};

fn main() -> compressed_pushsum::Result<()> {
    for gamma in [GammaPolicy::Manual { value: 1.0 }, GammaPolicy::Omega] {
        let mut cfg = ExperimentConfig::consensus(TopologySpec::Ring { n: 10 }, CompressionSpec::rand(0.1));
        cfg.d = 100;
        cfg.gamma = gamma;
        cfg.eps = 1e-4;
        cfg.rounds = Some(300_000);
        cfg.record_every = 1000;
        let setup = Setup::new(cfg)?;
        let r = setup.run(0)?;
        let last = r.trace.last().expect("trace has at least the initial row");
        println!(
            "gamma={:<8.4} {:<17} after {:>6} rounds, psi_z={:.3e}",
            setup.gamma(),
            r.status.to_string(),
            r.rounds_run,
            last.psi_z
        );
    }
    Ok(())
}
