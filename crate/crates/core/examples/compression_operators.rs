//! Contraction ratio, wire cost and a Monte Carlo check for each operator.

use compressed_pushsum::compression::{estimate_contraction, CompressionSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> compressed_pushsum::Result<()> {
    let d = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ops = [
        CompressionSpec::identity(),
        CompressionSpec::top(0.1),
        CompressionSpec::rand(0.1),
        CompressionSpec::rand_unbiased(0.75),
        CompressionSpec::qsgd(2),
        CompressionSpec::qsgd(4),
    ];
    println!("{:<18} {:>8} {:>8} {:>12}", "operator", "omega", "bits", "E|Q(x)-x|²");
    for q in ops {
        let omega = q.omega(d)?;
        let est = estimate_contraction(&q, d, 10_000, &mut rng)?;
        println!(
            "{:<18} {omega:>8.4} {:>8} {:>8.4}±{:.4}{}",
            q.label(),
            q.bits(d),
            est.mean,
            est.std_err,
            if est.certifies(omega) { "" } else { "  (not certified)" }
        );
    }
    Ok(())
}
