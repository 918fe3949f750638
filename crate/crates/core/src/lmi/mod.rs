//! Matrix-inequality assembly and the semidefinite feasibility boundary.

mod assemble;
mod expr;
mod problem;
mod solver;

pub use assemble::{
    assemble_analysis, assemble_common_q, assemble_free_multipliers, assemble_lyap_check, assemble_q_form,
    assemble_structured_fixed_gain, assemble_synthesis, margin_for, TRACE_CAP,
};
pub use expr::AffineMat;
pub use problem::{
    AffineConstraint, BlockKind, ProblemBuilder, SdpOutcome, SdpProblem, SdpStatus, Sense, VariableBlock, VERIFY_RTOL,
};
pub use solver::{check_feasible, check_feasible_with, SolverSettings};

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, Mat};

/// Per-mode Lyapunov certificates `Q_e,k = [[Q_k, Sigma_k], [-Sigma_k, Q_k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub q: Vec<Mat>,
    pub sigma: Vec<Mat>,
}

impl Certificate {
    /// Reads `Q{k}` / `Sigma{k}` blocks out of a solved problem.
    pub fn from_assignment(prob: &SdpProblem, y: &[f64], modes: usize) -> Result<Self> {
        let mut q = Vec::with_capacity(modes);
        let mut sigma = Vec::with_capacity(modes);
        for k in 0..modes {
            q.push(prob.value_of(&format!("Q{k}"), y)?);
            sigma.push(prob.value_of(&format!("Sigma{k}"), y)?);
        }
        Ok(Self { q, sigma })
    }

    pub fn q_e(&self, k: usize) -> Mat {
        let n = self.q[k].nrows();
        let mut out = Mat::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&self.q[k]);
        out.view_mut((n, n), (n, n)).copy_from(&self.q[k]);
        out.view_mut((0, n), (n, n)).copy_from(&self.sigma[k]);
        out.view_mut((n, 0), (n, n)).copy_from(&(-&self.sigma[k]));
        out
    }

    /// Every `Q_e,k` is positive definite with margin `eps`.
    pub fn is_positive(&self, eps: f64) -> bool {
        (0..self.q.len()).all(|k| min_sym_eigenvalue(&self.q_e(k)) >= eps * (1.0 - 1e-6))
    }
}

/// Per-mode multipliers `Z_k`, `W_k` (each 2n x 2n).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    pub z: Vec<Mat>,
    pub w: Vec<Mat>,
}

impl MultiplierSet {
    /// `Z_k = I`, `W_k = alpha I`.
    pub fn initial(n: usize, modes: usize, alpha: f64) -> Self {
        let id = Mat::identity(2 * n, 2 * n);
        Self { z: vec![id.clone(); modes], w: vec![id * alpha; modes] }
    }

    pub fn from_assignment(prob: &SdpProblem, y: &[f64], modes: usize) -> Result<Self> {
        let mut z = Vec::with_capacity(modes);
        let mut w = Vec::with_capacity(modes);
        for k in 0..modes {
            z.push(prob.value_of(&format!("Z{k}"), y)?);
            w.push(prob.value_of(&format!("W{k}"), y)?);
        }
        Ok(Self { z, w })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub(crate) fn check_dims(&self, n: usize) -> Result<()> {
        let ok = self.z.len() == self.w.len()
            && self.z.iter().chain(&self.w).all(|m| m.shape() == (2 * n, 2 * n));
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!("multipliers must be {0}x{0}", 2 * n)))
        }
    }
}
