//! Dense linear-algebra kernels for the agent model.
//!
//! Everything here works on small dense matrices (n <= 40). Eigenvalues come
//! from nalgebra's Schur decompositions; the Lyapunov and Riccati solvers are
//! built on top of a complex Schur form with eigenvalue reordering.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative singular-value threshold for the controllability rank test.
pub const CONTROLLABILITY_RTOL: f64 = 1e-8;

/// Agent dynamics `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    a: Mat,
    b: Mat,
}

impl Plant {
    /// Builds a plant, rejecting non-square `A`, mismatched `B`, non-finite
    /// entries and uncontrollable pairs.
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let plant = Self::new_unchecked(a, b)?;
        let rank = plant.controllability_rank();
        if rank < plant.n() {
            return Err(Error::Uncontrollable { rank, n: plant.n() });
        }
        Ok(plant)
    }

    /// Same as [`Plant::new`] without the controllability test.
    pub fn new_unchecked(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {}xm, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    /// Harmonic oscillator with a single actuated velocity channel.
    pub fn oscillator() -> Self {
        Self::new(
            Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .expect("oscillator preset is controllable")
    }

    /// Lateral dynamics of the Grumman X-29A forward-swept-wing aircraft.
    pub fn x29() -> Self {
        #[rustfmt::skip]
        let a = Mat::from_row_slice(4, 4, &[
            -2.059,   0.997,   -16.55,  0.0,
            -0.1023, -0.0679,   6.779,  0.0,
            -0.0603, -0.9928,  -0.1645, 0.04413,
             1.0,     0.07168,  0.0,    0.0,
        ]);
        #[rustfmt::skip]
        let b = Mat::from_row_slice(4, 2, &[
             1.347,      0.2365,
             0.09194,   -0.07056,
            -0.0006141,  0.0006866,
             0.0,        0.0,
        ]);
        Self::new(a, b).expect("X-29 preset is controllable")
    }

    /// Looks up a named plant preset (`osc` or `x29`).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "osc" => Ok(Self::oscillator()),
            "x29" => Ok(Self::x29()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Numerical rank of `[B, AB, ..., A^{n-1}B]`.
    pub fn controllability_rank(&self) -> usize {
        let n = self.n();
        let m = self.m();
        let mut ctrb = Mat::zeros(n, n * m);
        let mut block = self.b.clone();
        for i in 0..n {
            ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        let sv = ctrb.singular_values();
        let top = sv.max();
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > CONTROLLABILITY_RTOL * top).count()
    }
}

/// Static state-feedback matrix `K` (m x n).
#[derive(Debug, Clone, PartialEq)]
pub struct Gain(pub Mat);

impl Gain {
    pub fn new(k: Mat) -> Result<Self> {
        ensure_finite(&k, "K")?;
        Ok(Self(k))
    }

    pub fn zeros(plant: &Plant) -> Self {
        Self(Mat::zeros(plant.m(), plant.n()))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn norm2(&self) -> f64 {
        matrix_2norm(&self.0)
    }

    fn check(&self, plant: &Plant) -> Result<()> {
        if self.0.nrows() != plant.m() || self.0.ncols() != plant.n() {
            return Err(Error::DimensionMismatch(format!(
                "K must be {}x{}, got {}x{}",
                plant.m(),
                plant.n(),
                self.0.nrows(),
                self.0.ncols()
            )));
        }
        Ok(())
    }
}

/// Complex closed-loop mode `A - lambda B K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMode(pub CMat);

/// Real 2n x 2n embedding of a complex mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RealEmbedding(pub Mat);

impl RealEmbedding {
    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

pub(crate) fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("eigenvalues of non-square matrix".into()));
    }
    ensure_finite(m, "eigenvalue input")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(m.clone().complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of a complex square matrix (diagonal of its Schur form).
pub fn eigenvalues_complex(m: &CMat) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("eigenvalues of non-square matrix".into()));
    }
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let t = Schur::new(m.clone()).unpack().1;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest real part over the spectrum of a real matrix.
pub fn spectral_abscissa(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest real part over the spectrum of a complex matrix.
pub fn spectral_abscissa_complex(m: &CMat) -> Result<f64> {
    Ok(eigenvalues_complex(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `A - lambda B K`.
pub fn closed_loop_mode(p: &Plant, k: &Gain, lambda: Complex64) -> Result<ComplexMode> {
    k.check(p)?;
    let bk = to_complex(&(p.b() * k.matrix()));
    Ok(ComplexMode(to_complex(p.a()) - bk * lambda))
}

/// `[[A - a BK, b BK], [-b BK, A - a BK]]` for `lambda = a + jb`.
pub fn real_embedding(p: &Plant, k: &Gain, lambda: Complex64) -> Result<RealEmbedding> {
    k.check(p)?;
    let n = p.n();
    let bk = p.b() * k.matrix();
    let diag = p.a() - &bk * lambda.re;
    let off = &bk * lambda.im;
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&diag);
    out.view_mut((n, n), (n, n)).copy_from(&diag);
    out.view_mut((0, n), (n, n)).copy_from(&off);
    out.view_mut((n, 0), (n, n)).copy_from(&(-off));
    Ok(RealEmbedding(out))
}

/// Largest singular value.
pub fn matrix_2norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Solves `A^T P + P A + Q = 0` for Hurwitz `A` (Bartels-Stewart on the
/// complex Schur form of `A`).
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov needs square A and Q of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(q, "Q")?;
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz(abscissa));
    }

    // A = U T U^H with T upper triangular, hence A^T = A^H = U T^H U^H.
    let (u, t) = Schur::new(to_complex(a)).unpack();
    let qt = u.adjoint() * to_complex(q) * &u;
    let mut pt = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut rhs = -qt[(i, j)];
            for k in 0..i {
                rhs -= t[(k, i)].conj() * pt[(k, j)];
            }
            for k in 0..j {
                rhs -= pt[(i, k)] * t[(k, j)];
            }
            pt[(i, j)] = rhs / (t[(i, i)].conj() + t[(j, j)]);
        }
    }
    let p = symmetrize(&(&u * pt * u.adjoint()).map(|z| z.re));

    let residual = (a.transpose() * &p + &p * a + q).norm();
    let scale = q.norm() + a.norm() * p.norm();
    if !(residual <= 1e-9 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::IllConditioned(residual));
    }
    Ok(p)
}

/// Complex Schur form `M = U T U^H` with the eigenvalues satisfying `select`
/// moved to the leading diagonal positions. Returns `(U, T, count)`.
pub fn ordered_schur(m: &CMat, select: impl Fn(Complex64) -> bool) -> (CMat, CMat, usize) {
    let (mut u, mut t) = Schur::new(m.clone()).unpack();
    let n = t.nrows();
    // Clean the strictly lower part left over from the QR iterations.
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    let mut placed = 0;
    for start in 0..n {
        if !select(t[(start, start)]) {
            continue;
        }
        // Bubble the selected eigenvalue up to position `placed`.
        let mut k = start;
        while k > placed {
            swap_adjacent(&mut t, &mut u, k - 1);
            k -= 1;
        }
        placed += 1;
    }
    (u, t, placed)
}

/// Exchanges diagonal entries `k` and `k+1` of an upper-triangular `t`
/// with a unitary rotation, accumulating it into `u`.
fn swap_adjacent(t: &mut CMat, u: &mut CMat, k: usize) {
    let n = t.nrows();
    let a = t[(k, k)];
    let b = t[(k + 1, k + 1)];
    let c = t[(k, k + 1)];
    // First column of the rotation is the eigenvector of [[a, c], [0, b]] for b.
    let x1 = c;
    let x2 = b - a;
    let r = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if r == 0.0 {
        return;
    }
    let (g1, g2) = (x1 / r, x2 / r);
    // G = [[g1, -conj(g2)], [g2, conj(g1)]]
    let g = [[g1, -g2.conj()], [g2, g1.conj()]];
    // T <- G^H T (rows k, k+1)
    for j in 0..n {
        let r0 = t[(k, j)];
        let r1 = t[(k + 1, j)];
        t[(k, j)] = g[0][0].conj() * r0 + g[1][0].conj() * r1;
        t[(k + 1, j)] = g[0][1].conj() * r0 + g[1][1].conj() * r1;
    }
    // T <- T G, U <- U G (columns k, k+1)
    for i in 0..n {
        let c0 = t[(i, k)];
        let c1 = t[(i, k + 1)];
        t[(i, k)] = c0 * g[0][0] + c1 * g[1][0];
        t[(i, k + 1)] = c0 * g[0][1] + c1 * g[1][1];
        let c0 = u[(i, k)];
        let c1 = u[(i, k + 1)];
        u[(i, k)] = c0 * g[0][0] + c1 * g[1][0];
        u[(i, k + 1)] = c0 * g[0][1] + c1 * g[1][1];
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

fn care_residual(a: &Mat, g: &Mat, qc: f64, p: &Mat) -> Mat {
    let n = a.nrows();
    a.transpose() * p + p * a - p * g * p + Mat::identity(n, n) * qc
}

/// Stabilizing solution of `A^T P + P A - 2b P B B^T P + a I = 0`.
///
/// The stable invariant subspace of the Hamiltonian
/// `[[A, -2b BB^T], [-aI, -A^T]]` is extracted from a reordered Schur form,
/// then polished with one Newton-Kleinman step.
pub fn solve_care(p: &Plant, a: f64, b: f64) -> Result<Mat> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "CARE weights must be positive, got a = {a}, b = {b}"
        )));
    }
    let n = p.n();
    let g = p.b() * p.b().transpose() * (2.0 * b);
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(p.a());
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(Mat::identity(n, n) * -a));
    h.view_mut((n, n), (n, n)).copy_from(&(-p.a().transpose()));

    let (u, _t, stable) = ordered_schur(&to_complex(&h), |z| z.re < 0.0);
    if stable != n {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {n}"
        )));
    }
    let u1 = u.view((0, 0), (n, n)).into_owned();
    let u2 = u.view((n, 0), (n, n)).into_owned();
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| Error::NoStabilizingSolution("singular U1 block".into()))?;
    let pc = u2 * u1_inv;
    if !pc.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NoStabilizingSolution("non-finite subspace basis".into()));
    }
    let mut sol = symmetrize(&pc.map(|z| z.re));

    // Newton-Kleinman refinement.
    let closed = p.a() - &g * &sol;
    let rhs = Mat::identity(n, n) * a + &sol * &g * &sol;
    if let Ok(next) = solve_lyapunov(&closed, &rhs) {
        let before = care_residual(p.a(), &g, a, &sol).norm();
        let after = care_residual(p.a(), &g, a, &next).norm();
        if after <= before {
            sol = next;
        }
    }

    let scale = 2.0 * p.a().norm() * sol.norm() + g.norm() * sol.norm().powi(2) + a * (n as f64).sqrt();
    let residual = care_residual(p.a(), &g, a, &sol).norm();
    if !(residual <= 1e-8 * scale) {
        return Err(Error::ResidualTooLarge(residual / scale));
    }
    if min_sym_eigenvalue(&sol) <= 0.0 {
        return Err(Error::NoStabilizingSolution("solution is not positive definite".into()));
    }
    if spectral_abscissa(&(p.a() - &g * &sol))? >= 0.0 {
        return Err(Error::NoStabilizingSolution("closed loop is not Hurwitz".into()));
    }
    Ok(sol)
}
