//! The three single-shot baselines on one scenario: the Riccati gain with
//! infinite gain margin, the box-corner common-Q design and the
//! per-eigenvalue common-Q design.

use syncgain::graph::WeightedDigraph;
use syncgain::linalg::Plant;
use syncgain::synth::{design, spectrum_of, AlgorithmConfig, Method};
use syncgain::verify::estimate_rate;

fn main() -> syncgain::Result<()> {
    let plant = Plant::preset("x29")?;
    let graph = WeightedDigraph::preset("cpx10")?;
    let s = spectrum_of(&graph)?;
    let cfg = AlgorithmConfig::default();

    for method in [Method::Riccati, Method::Listmann, Method::Aek] {
        let r = design(method, &plant, &graph, &cfg)?;
        let rate = estimate_rate(&plant, &s, &r.gain)?;
        println!(
            "{method:>8}: mu_hat = {:.4}  |K| = {:.4}  certified mu = {:.4}",
            rate.mu_hat,
            r.gain.norm2(),
            r.mu_star
        );
    }
    Ok(())
}
