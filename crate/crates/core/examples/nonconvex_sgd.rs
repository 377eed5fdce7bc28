//! Compressed push-sum SGD on logistic loss plus a bounded non-convex
//! penalty. Tracks the squared gradient norm at the mean iterate.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::harness::{EtaPolicy, ExperimentConfig, Setup, TopologySpec};

fn main() -> compressed_pushsum::Result<()> {
    let mut cfg = ExperimentConfig::sgd(TopologySpec::Ring { n: 10 }, CompressionSpec::top(0.2), 20);
    cfg.eta = EtaPolicy::Nonconvex;
    cfg.problem.nonconvex_lambda = Some(0.1);
    cfg.rounds = Some(3000);
    let setup = Setup::new(cfg)?;
    let oracle = setup.objective.as_ref().expect("sgd mode builds an objective").oracle();
    let mut g = vec![0.0; setup.d];
    let mut checkpoints = Vec::new();
    setup.run_observed(0, false, &mut |state, tr| {
        if tr.t % 500 == 0 {
            oracle.grad(&state.mean(), &mut g);
            checkpoints.push((tr.t, g.iter().map(|v| v * v).sum::<f64>()));
        }
    })?;
    println!("eta = {:.3e}, gamma = {:.3e}", setup.eta(), setup.gamma());
    for (t, gn) in checkpoints {
        println!("t={t:>5}  |grad f(x̄)|² = {gn:.4e}");
    }
    Ok(())
}
