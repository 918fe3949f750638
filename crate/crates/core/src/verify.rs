//! Certification of synchronization rates for a fixed gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpectrumSlice;
use crate::linalg::{closed_loop_mode, real_embedding, spectral_abscissa, spectral_abscissa_complex, Gain, Plant};
use crate::lmi::{assemble_lyap_check, check_feasible, SdpStatus};

/// Spectral rate of a gain: `mu_hat = -max_k abscissa(A - lambda_k B K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub mu_hat: f64,
    pub worst_k: usize,
    pub abscissas: Vec<f64>,
}

pub fn estimate_rate(p: &Plant, s: &SpectrumSlice, k: &Gain) -> Result<RateEstimate> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("spectrum slice is empty".into()));
    }
    let abscissas = s
        .eigenvalues()
        .iter()
        .map(|&lam| spectral_abscissa_complex(&closed_loop_mode(p, k, lam)?.0))
        .collect::<Result<Vec<f64>>>()?;
    let (worst_k, worst) = abscissas
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    Ok(RateEstimate { mu_hat: -worst, worst_k, abscissas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckMethod {
    /// Every real embedding has abscissa below `-mu`.
    Spectral,
    /// A rate-`mu` Lyapunov certificate exists for every real embedding.
    Lyapunov,
}

pub fn check_mu_uges(p: &Plant, s: &SpectrumSlice, k: &Gain, mu: f64, method: CheckMethod) -> Result<bool> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be finite and nonnegative, got {mu}")));
    }
    for &lam in s.eigenvalues() {
        let aek = real_embedding(p, k, lam)?;
        let ok = match method {
            CheckMethod::Spectral => spectral_abscissa(aek.matrix())? < -mu,
            CheckMethod::Lyapunov => {
                let out = check_feasible(&assemble_lyap_check(&aek, mu)?);
                match out.status {
                    SdpStatus::Feasible => true,
                    SdpStatus::Infeasible => false,
                    SdpStatus::SolverFailure => return Err(Error::SolverFailure(out.diagnostics)),
                }
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use num_complex::Complex64;

    fn real_slice(v: &[f64]) -> SpectrumSlice {
        SpectrumSlice::from_values(v.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    #[test]
    fn rate_examples() {
        let stable = Plant::new_unchecked(-Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        let s = real_slice(&[1.0, 4.0]);
        let r = estimate_rate(&stable, &s, &Gain::zeros(&stable)).unwrap();
        assert!((r.mu_hat - 1.0).abs() < 1e-12);

        let osc = Plant::oscillator();
        let r = estimate_rate(&osc, &s, &Gain::zeros(&osc)).unwrap();
        assert!(r.mu_hat.abs() < 1e-12);

        let scalar = Plant::new(Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let r = estimate_rate(&scalar, &real_slice(&[1.0, 3.0]), &Gain(Mat::from_element(1, 1, 2.0))).unwrap();
        assert!((r.abscissas[0] + 1.0).abs() < 1e-12 && (r.abscissas[1] + 5.0).abs() < 1e-12);
        assert!((r.mu_hat - 1.0).abs() < 1e-12);
        assert_eq!(r.worst_k, 0);
    }

    #[test]
    fn methods_agree_away_from_boundary() {
        let scalar = Plant::new(Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0)).unwrap();
        let s = SpectrumSlice::from_values(vec![Complex64::new(1.0, 0.5), Complex64::new(3.0, 0.0)]);
        let k = Gain(Mat::from_element(1, 1, 2.0));
        for method in [CheckMethod::Spectral, CheckMethod::Lyapunov] {
            assert!(check_mu_uges(&scalar, &s, &k, 0.0, method).unwrap());
            assert!(check_mu_uges(&scalar, &s, &k, 0.9, method).unwrap());
            assert!(!check_mu_uges(&scalar, &s, &k, 1.1, method).unwrap());
        }
    }
}
