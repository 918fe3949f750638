//! The iterative design: alternate synthesis and analysis steps until the synthesis
//! rate stops improving, starting from the one-step direct design.
//!
//! `cargo run --release --example iterative_design -- [plant] [graph]`

use syncgain::graph::WeightedDigraph;
use syncgain::linalg::Plant;
use syncgain::synth::{algorithm1, direct_design, spectrum_of, AlgorithmConfig, StepKind};
use syncgain::verify::estimate_rate;

fn main() -> syncgain::Result<()> {
    let mut args = std::env::args().skip(1);
    let plant_name = args.next().unwrap_or_else(|| "osc".into());
    let graph_name = args.next().unwrap_or_else(|| "circ4".into());
    let plant = Plant::preset(&plant_name)?;
    let graph = WeightedDigraph::preset(&graph_name)?;
    let s = spectrum_of(&graph)?;
    let cfg = AlgorithmConfig::default();

    let direct = direct_design(&plant, &graph, &cfg)?;
    println!(
        "direct: alpha = {:?}, mu = {:.4}, mu_hat = {:.4}",
        direct.alpha,
        direct.mu_star,
        estimate_rate(&plant, &s, &direct.gain)?.mu_hat
    );

    let r = algorithm1(&plant, &graph, &cfg)?;
    for (kind, mu) in &r.mu_trace {
        let tag = match kind {
            StepKind::Synthesis => "S",
            StepKind::Analysis => "A",
        };
        println!("  {tag} {mu:.5}");
    }
    println!(
        "alg1: {} iterations in {:.1}s, mu = {:.4}, mu_hat = {:.4}, |K| = {:.3}",
        r.iterations,
        r.wall_time,
        r.mu_star,
        estimate_rate(&plant, &s, &r.gain)?.mu_hat,
        r.gain.norm2()
    );
    println!("K =\n{}", r.gain.matrix());
    Ok(())
}
