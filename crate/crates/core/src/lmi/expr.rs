//! Matrices that are affine in the scalar decision vector.

use std::collections::BTreeMap;

use crate::linalg::Mat;

/// `constant + sum_i y_i * terms[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMat {
    rows: usize,
    cols: usize,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl AffineMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols))
    }

    pub fn constant(m: Mat) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, terms: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    /// Single-variable term `y_index * basis`.
    pub fn term(index: usize, basis: Mat) -> Self {
        let mut out = Self::zeros(basis.nrows(), basis.ncols());
        out.terms.insert(index, basis);
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<usize, Mat> {
        &self.terms
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        let constant = f(&self.constant);
        let (rows, cols) = (constant.nrows(), constant.ncols());
        let terms = self.terms.iter().map(|(&i, m)| (i, f(m))).collect();
        Self { rows, cols, constant, terms }
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, m| m.iter().any(|v| *v != 0.0));
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "affine add shape mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&i, m) in &other.terms {
            out.terms
                .entry(i)
                .and_modify(|t| *t += m)
                .or_insert_with(|| m.clone());
        }
        out.prune()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s).prune()
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    /// `c * self`.
    pub fn lmul(&self, c: &Mat) -> Self {
        assert_eq!(c.ncols(), self.rows, "affine lmul shape mismatch");
        self.map(|m| c * m).prune()
    }

    /// `self * c`.
    pub fn rmul(&self, c: &Mat) -> Self {
        assert_eq!(c.nrows(), self.cols, "affine rmul shape mismatch");
        self.map(|m| m * c).prune()
    }

    /// `c ⊗ self`.
    pub fn kron_left(&self, c: &Mat) -> Self {
        self.map(|m| c.kronecker(m)).prune()
    }

    /// `self + self^T`, exactly symmetric in floating point.
    pub fn he(&self) -> Self {
        assert_eq!(self.rows, self.cols, "He of non-square expression");
        self.map(|m| m + m.transpose())
    }

    pub fn trace(&self) -> Self {
        assert_eq!(self.rows, self.cols, "trace of non-square expression");
        self.map(|m| Mat::from_element(1, 1, m.trace())).prune()
    }

    /// Assembles a block matrix from a row-major grid of expressions.
    pub fn blocks(grid: &[Vec<&AffineMat>]) -> Self {
        let row_heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let col_widths: Vec<usize> = grid[0].iter().map(|e| e.cols).collect();
        let rows: usize = row_heights.iter().sum();
        let cols: usize = col_widths.iter().sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), col_widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, e) in row.iter().enumerate() {
                assert_eq!(e.shape(), (row_heights[bi], col_widths[bj]), "block shape mismatch");
                out.constant.view_mut((r0, c0), e.shape()).copy_from(&e.constant);
                for (&i, m) in &e.terms {
                    out.terms
                        .entry(i)
                        .or_insert_with(|| Mat::zeros(rows, cols))
                        .view_mut((r0, c0), e.shape())
                        .copy_from(m);
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        out
    }

    pub fn eval(&self, y: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (&i, m) in &self.terms {
            out += m * y[i];
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && std::iter::once(&self.constant)
                .chain(self.terms.values())
                .all(|m| *m == m.transpose())
    }
}
