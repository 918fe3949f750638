//! Affine semidefinite feasibility problems over structured variable blocks.

use serde::Serialize;

use super::expr::AffineMat;
use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Symmetric(usize),
    Skew(usize),
    Full(usize, usize),
}

impl BlockKind {
    pub fn scalar_count(&self) -> usize {
        match *self {
            BlockKind::Symmetric(d) => d * (d + 1) / 2,
            BlockKind::Skew(d) => d * d.saturating_sub(1) / 2,
            BlockKind::Full(r, c) => r * c,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            BlockKind::Symmetric(d) | BlockKind::Skew(d) => (d, d),
            BlockKind::Full(r, c) => (r, c),
        }
    }

    /// Basis matrices in scalar order: upper triangle row-major for the
    /// symmetric and skew kinds, row-major for full blocks.
    fn basis(&self) -> Vec<Mat> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(self.scalar_count());
        match *self {
            BlockKind::Symmetric(d) => {
                for i in 0..d {
                    for j in i..d {
                        let mut m = Mat::zeros(r, c);
                        m[(i, j)] = 1.0;
                        m[(j, i)] = 1.0;
                        out.push(m);
                    }
                }
            }
            BlockKind::Skew(d) => {
                for i in 0..d {
                    for j in (i + 1)..d {
                        let mut m = Mat::zeros(r, c);
                        m[(i, j)] = 1.0;
                        m[(j, i)] = -1.0;
                        out.push(m);
                    }
                }
            }
            BlockKind::Full(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        let mut m = Mat::zeros(r, c);
                        m[(i, j)] = 1.0;
                        out.push(m);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableBlock {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
}

impl VariableBlock {
    pub fn len(&self) -> usize {
        self.kind.scalar_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the block's scalars for `value` into `y`.
    pub fn pack(&self, value: &Mat, y: &mut [f64]) {
        assert_eq!(value.shape(), self.kind.shape(), "pack shape mismatch for {}", self.name);
        let mut idx = self.offset;
        match self.kind {
            BlockKind::Symmetric(d) => {
                for i in 0..d {
                    for j in i..d {
                        y[idx] = value[(i, j)];
                        idx += 1;
                    }
                }
            }
            BlockKind::Skew(d) => {
                for i in 0..d {
                    for j in (i + 1)..d {
                        y[idx] = value[(i, j)];
                        idx += 1;
                    }
                }
            }
            BlockKind::Full(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        y[idx] = value[(i, j)];
                        idx += 1;
                    }
                }
            }
        }
    }

    pub fn unpack(&self, y: &[f64]) -> Mat {
        let (r, c) = self.kind.shape();
        let mut m = Mat::zeros(r, c);
        let mut idx = self.offset;
        match self.kind {
            BlockKind::Symmetric(d) => {
                for i in 0..d {
                    for j in i..d {
                        m[(i, j)] = y[idx];
                        m[(j, i)] = y[idx];
                        idx += 1;
                    }
                }
            }
            BlockKind::Skew(d) => {
                for i in 0..d {
                    for j in (i + 1)..d {
                        m[(i, j)] = y[idx];
                        m[(j, i)] = -y[idx];
                        idx += 1;
                    }
                }
            }
            BlockKind::Full(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        m[(i, j)] = y[idx];
                        idx += 1;
                    }
                }
            }
        }
        m
    }
}

/// `Psd`: value ⪰ margin·I. `Nsd`: value ⪯ −margin·I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Psd,
    Nsd,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Psd => 1.0,
            Sense::Nsd => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub name: String,
    pub expr: AffineMat,
    pub sense: Sense,
}

impl AffineConstraint {
    pub fn size(&self) -> usize {
        self.expr.shape().0
    }

    /// Value of the constraint matrix at `y`.
    pub fn value(&self, y: &[f64]) -> Mat {
        self.expr.eval(y)
    }

    /// `sign * F(y) - margin * I`, which must be PSD.
    pub fn slack_matrix(&self, y: &[f64], margin: f64) -> Mat {
        let s = self.size();
        self.value(y) * self.sense.sign() - Mat::identity(s, s) * margin
    }

    /// Smallest eigenvalue of the slack matrix.
    pub fn slack(&self, y: &[f64], margin: f64) -> f64 {
        min_sym_eigenvalue(&self.slack_matrix(y, margin))
    }

    /// Tolerance scale used by the independent verification.
    pub fn scale(&self) -> f64 {
        1.0 + self.expr.constant_part().norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<VariableBlock>,
    pub constraints: Vec<AffineConstraint>,
    pub margin: f64,
}

/// Absolute verification slack is `VERIFY_RTOL * (1 + ||F0||)`.
pub const VERIFY_RTOL: f64 = 1e-9;

impl SdpProblem {
    pub fn n_vars(&self) -> usize {
        self.blocks.iter().map(VariableBlock::len).sum()
    }

    pub fn block(&self, name: &str) -> Option<&VariableBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Unpacks a named block from an assignment.
    pub fn value_of(&self, name: &str, y: &[f64]) -> Result<Mat> {
        self.block(name)
            .map(|b| b.unpack(y))
            .ok_or_else(|| Error::InvalidArgument(format!("no variable block named {name}")))
    }

    pub fn constraint_sizes(&self) -> Vec<usize> {
        self.constraints.iter().map(AffineConstraint::size).collect()
    }

    /// Largest amount by which any constraint misses its margin (0 if none).
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| (-c.slack(y, self.margin)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Independent eigenvalue check of every constraint at `y`.
    pub fn verify(&self, y: &[f64]) -> bool {
        y.len() == self.n_vars()
            && y.iter().all(|v| v.is_finite())
            && self
                .constraints
                .iter()
                .all(|c| c.slack(y, self.margin) >= -VERIFY_RTOL * c.scale())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for c in &self.constraints {
            if !c.expr.is_symmetric() {
                return Err(Error::InvalidArgument(format!("constraint {} is not symmetric", c.name)));
            }
            if c.expr.terms().keys().any(|&i| i >= n) {
                return Err(Error::InvalidArgument(format!("constraint {} references an undeclared variable", c.name)));
            }
        }
        Ok(())
    }

    /// Debug dump: block layout plus dense constraint matrices.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let dense = |m: &Mat| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let constraints: Vec<serde_json::Value> = self
            .constraints
            .iter()
            .map(|c| {
                serde_json::json!({
                    "name": c.name,
                    "size": c.size(),
                    "sense": c.sense,
                    "constant": dense(c.expr.constant_part()),
                    "coefficients": c.expr.terms().iter().map(|(i, m)| {
                        serde_json::json!({"index": i, "matrix": dense(m)})
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "margin": self.margin,
            "n_vars": self.n_vars(),
            "blocks": self.blocks,
            "constraints": constraints,
        })
    }
}

/// Incremental construction of an [`SdpProblem`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    blocks: Vec<VariableBlock>,
    constraints: Vec<AffineConstraint>,
    next: usize,
}

impl Default for ProblemBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self { blocks: Vec::new(), constraints: Vec::new(), next: 0 }
    }

    /// Declares a variable block and returns it as an affine expression.
    pub fn variable(&mut self, name: impl Into<String>, kind: BlockKind) -> AffineMat {
        let block = VariableBlock { name: name.into(), kind, offset: self.next };
        let (r, c) = kind.shape();
        let mut expr = AffineMat::zeros(r, c);
        for (k, basis) in kind.basis().into_iter().enumerate() {
            expr = expr.add(&AffineMat::term(self.next + k, basis));
        }
        self.next += kind.scalar_count();
        self.blocks.push(block);
        expr
    }

    pub fn symmetric(&mut self, name: impl Into<String>, d: usize) -> AffineMat {
        self.variable(name, BlockKind::Symmetric(d))
    }

    pub fn skew(&mut self, name: impl Into<String>, d: usize) -> AffineMat {
        self.variable(name, BlockKind::Skew(d))
    }

    pub fn full(&mut self, name: impl Into<String>, r: usize, c: usize) -> AffineMat {
        self.variable(name, BlockKind::Full(r, c))
    }

    /// Adds `expr ⪰ margin·I` or `expr ⪯ −margin·I`. The expression is
    /// symmetrized as `(E + E^T)/2`, which is exact for expressions that are
    /// already symmetric.
    pub fn constrain(&mut self, name: impl Into<String>, expr: AffineMat, sense: Sense) {
        let expr = expr.add(&expr.transpose()).scale(0.5);
        self.constraints.push(AffineConstraint { name: name.into(), expr, sense });
    }

    pub fn build(self, margin: f64) -> SdpProblem {
        SdpProblem { blocks: self.blocks, constraints: self.constraints, margin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    /// Present iff `status == Feasible`.
    pub assignment: Option<Vec<f64>>,
    pub max_violation: f64,
    pub iterations: usize,
    pub diagnostics: String,
}

impl SdpOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }
}
