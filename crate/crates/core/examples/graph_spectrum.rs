//! Laplacian spectra of the benchmark topologies.
//!
//! Run with `cargo run --example graph_spectrum`.

use syncgain::graph::{nonzero_spectrum, WeightedDigraph, DEFAULT_DEDUP_TOLERANCE, PRESETS};

fn main() -> syncgain::Result<()> {
    for name in PRESETS {
        let g = WeightedDigraph::preset(name)?;
        let s = nonzero_spectrum(&g.laplacian(), DEFAULT_DEDUP_TOLERANCE)?;
        println!("{name}: {} agents, connected = {}", g.n_agents(), g.is_connected());
        for lam in s.eigenvalues() {
            println!("  {:+.6} {:+.6}i", lam.re, lam.im);
        }
    }

    // A graph without a spanning tree has a repeated zero eigenvalue.
    let split = WeightedDigraph::from_edges(4, &[(1, 2, 1.0), (3, 4, 1.0)])?;
    match nonzero_spectrum(&split.laplacian(), DEFAULT_DEDUP_TOLERANCE) {
        Ok(_) => println!("unexpected spectrum"),
        Err(e) => println!("split graph: {e}"),
    }
    Ok(())
}
