//! Closed-loop simulation of a designed gain: distance to the synchronization
//! manifold over time, and the decay rate fitted to its tail.

use syncgain::graph::WeightedDigraph;
use syncgain::linalg::Plant;
use syncgain::sim::{self, fit_decay, initial_state, integrate};
use syncgain::synth::{design, spectrum_of, AlgorithmConfig, Method};
use syncgain::verify::estimate_rate;

fn main() -> syncgain::Result<()> {
    let plant = Plant::oscillator();
    let graph = WeightedDigraph::preset("circ4")?;
    let gain = design(Method::Riccati, &plant, &graph, &AlgorithmConfig::default())?.gain;
    let mu_hat = estimate_rate(&plant, &spectrum_of(&graph)?, &gain)?.mu_hat;

    let x0 = initial_state(graph.n_agents(), plant.n(), sim::DEFAULT_SEED);
    let traj = integrate(&x0, &plant, &gain, &graph.laplacian(), 10.0, sim::DEFAULT_STEP)?;
    for i in (0..traj.len()).step_by(1000) {
        println!("t = {:5.2}  dist = {:.3e}", traj.times[i], traj.distances[i]);
    }

    let fit = fit_decay(&traj, sim::DEFAULT_WINDOW_FRACTION)?;
    println!(
        "fitted rate {:.4} on [{:.1}, {:.1}] vs mu_hat {:.4}; dist(T)/dist(0) = {:.2e}",
        fit.rate,
        fit.window.0,
        fit.window.1,
        mu_hat,
        traj.final_ratio()
    );

    let path = std::env::temp_dir().join("syncgain_trajectory.csv");
    traj.save_csv(&path, true)?;
    println!("wrote {}", path.display());
    Ok(())
}
