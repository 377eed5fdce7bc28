//! Spectral profile of out-degree mixing matrices and the stepsizes derived
//! from it.

use compressed_pushsum::digraph::{
    build_complete, build_erdos_renyi, build_ring, default_horizon, log_n_over_n, spectral_profile,
    MixingMatrix,
};
use compressed_pushsum::pushsum::{stepsize_lemma1, stepsize_theorem1};

fn main() -> compressed_pushsum::Result<()> {
    let graphs = [
        ("ring 10", build_ring(10)?),
        ("ring 20", build_ring(20)?),
        ("ring 40", build_ring(40)?),
        ("complete 10", build_complete(10)?),
        ("erdos 50", build_erdos_renyi(50, log_n_over_n(50), 1)?),
    ];
    let omega = 0.1;
    println!("{:<12} {:>6} {:>10} {:>8} {:>8} {:>11} {:>11}", "graph", "beta", "delta", "C", "kappa", "gamma_thm", "gamma_lem");
    for (name, g) in graphs {
        let w = MixingMatrix::out_degree(&g)?;
        let p = spectral_profile(&w, default_horizon(g.n()))?;
        let thm = stepsize_theorem1(&p, w.beta(), omega)?;
        let lem = stepsize_lemma1(&p, w.beta(), omega)?;
        println!(
            "{name:<12} {:>6.3} {:>10.3e} {:>8.3} {:>8.4} {:>11.3e} {:>11.3e}",
            w.beta(),
            p.delta,
            p.big_c,
            p.kappa,
            thm.gamma,
            lem.gamma
        );
    }
    Ok(())
}
