//! Load a graph from an edge list, check it, and run consensus on it.

use compressed_pushsum::compression::CompressionSpec;
use compressed_pushsum::digraph::DirectedGraph;
use compressed_pushsum::harness::{ExperimentConfig, Setup, TopologySpec};

const EDGES: &str = "\
n=6
0 1
1 2
2 0
2 3
3 4
4 5
5 3
5 0
";

fn main() -> compressed_pushsum::Result<()> {
    let g = DirectedGraph::from_edge_list(EDGES)?;
    println!("{} nodes, {} edges, strongly connected: {}", g.n(), g.edge_count(), g.is_strongly_connected());

    let path = std::env::temp_dir().join("cpsum_custom_topology.txt");
    g.save(&path)?;

    let mut cfg = ExperimentConfig::consensus(TopologySpec::File { path }, CompressionSpec::qsgd(2));
    cfg.d = 10;
    cfg.rounds = Some(100_000);
    let setup = Setup::new(cfg)?;
    let r = setup.run(0)?;
    println!(
        "gamma={:.4}: {} after {} rounds, {} bits",
        setup.gamma(),
        r.status,
        r.rounds_run,
        r.bits_cum
    );
    Ok(())
}
