//! Average consensus on a directed ring with top-k compression.
//!
//! Prints the relative consensus error every few thousand rounds and the
//! round at which it first drops below 1e-5.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::digraph::{build_ring, MixingMatrix};
use compressed_pushsum::pushsum::{NetworkState, Protocol};
use compressed_pushsum::rng::{Purpose, SeedStreams};
use rand_distr::{Distribution, StandardNormal};

fn main() -> compressed_pushsum::Result<()> {
    let (n, d) = (20, 50);
    let w = MixingMatrix::out_degree(&build_ring(n)?)?;
    let q = CompressionSpec::top(0.1);
    let omega = q.omega(d)?;

    let streams = SeedStreams::new(7);
    let x0: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut rng = streams.stream(Purpose::InitialState, 0, i as u64);
            (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    let mut state = NetworkState::new(&x0)?;
    let psi0 = compressed_pushsum::pushsum::psi_z(&state, state.initial_mean());

    // gamma = omega is a safe choice for top-k in practice
    let proto = Protocol::new(&w, omega, &q, streams)?;
    let mut bits = 0u64;
    loop {
        let tr = proto.consensus_round(&mut state)?;
        bits += tr.bits_sent;
        let rel = tr.psi_z / psi0;
        if tr.t % 5000 == 0 {
            println!("t={:>6}  relative error {rel:.3e}", tr.t);
        }
        if rel <= 1e-5 {
            println!("reached 1e-5 after {} rounds, {:.2} Mbit sent", tr.t, bits as f64 / 1e6);
            break;
        }
    }
    Ok(())
}
