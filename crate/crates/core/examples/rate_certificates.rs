//! Certifying a decay rate for a fixed gain, spectrally and with Lyapunov
//! LMIs on the real embeddings of the closed-loop modes.

use num_complex::Complex64;
use syncgain::graph::WeightedDigraph;
use syncgain::linalg::{closed_loop_mode, eigenvalues, eigenvalues_complex, real_embedding, Plant};
use syncgain::synth::{design, spectrum_of, AlgorithmConfig, Method};
use syncgain::verify::{check_mu_uges, estimate_rate, CheckMethod};

fn main() -> syncgain::Result<()> {
    let plant = Plant::oscillator();
    let graph = WeightedDigraph::preset("cpx5")?;
    let s = spectrum_of(&graph)?;
    let k = design(Method::Riccati, &plant, &graph, &AlgorithmConfig::default())?.gain;

    let rate = estimate_rate(&plant, &s, &k)?;
    println!("mu_hat = {:.6} (worst mode {})", rate.mu_hat, rate.worst_k);

    // The 2n x 2n real embedding carries the mode's spectrum and its conjugate.
    let lam: Complex64 = s.eigenvalues()[rate.worst_k];
    let mode = eigenvalues_complex(&closed_loop_mode(&plant, &k, lam)?.0)?;
    let embedded = eigenvalues(real_embedding(&plant, &k, lam)?.matrix())?;
    println!("mode eigenvalues     {mode:.4?}");
    println!("embedding eigenvalues {embedded:.4?}");

    for mu in [0.5 * rate.mu_hat, 0.99 * rate.mu_hat, 1.01 * rate.mu_hat] {
        let spectral = check_mu_uges(&plant, &s, &k, mu, CheckMethod::Spectral)?;
        let lyapunov = check_mu_uges(&plant, &s, &k, mu, CheckMethod::Lyapunov)?;
        println!("mu = {mu:.4}: spectral {spectral}, lyapunov {lyapunov}");
    }
    Ok(())
}
