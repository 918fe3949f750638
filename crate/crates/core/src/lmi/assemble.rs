//! Assembly of the synchronization matrix inequalities.
//!
//! Notation shared by the assemblers, for a value `lambda = a + jb`:
//!
//! * `Qe = [[Q, S], [-S, Q]]` with `Q` symmetric and `S` skew,
//! * `Lambda = [[a, -b], [b, a]]`,
//! * `Theta = (I2 ⊗ A X) - (Lambda ⊗ B Y)` and `Xe = I2 ⊗ X`,
//! * the lifted inequality
//!
//! ```text
//! [[2 mu Qe + He(Theta Z),   Qe + Theta W - (Xe Z)^T],
//!  [Qe + (Theta W)^T - Xe Z, -He(Xe W)              ]]  ⪯ -eps I
//! ```
//!
//! which is affine in `(X, Y, Q, S)` for frozen `(Z, W)` and affine in
//! `(Z, W, Q, S)` for frozen `(X, Y)`.

use num_complex::Complex64;

use super::expr::AffineMat;
use super::problem::{ProblemBuilder, SdpProblem, Sense};
use super::MultiplierSet;
use crate::error::{Error, Result};
use crate::graph::SpectrumSlice;
use crate::linalg::{matrix_2norm, min_sym_eigenvalue, Gain, Mat, Plant, RealEmbedding};

/// Upper bound imposed on `trace(Q_k)` to rule out unbounded certificates.
pub const TRACE_CAP: f64 = 1e6;

/// Strictness margin `1e-6 (1 + ||A||_2)`.
pub fn margin_for(a: &Mat) -> f64 {
    1e-6 * (1.0 + matrix_2norm(a))
}

fn lambda_block(z: Complex64) -> Mat {
    Mat::from_row_slice(2, 2, &[z.re, -z.im, z.im, z.re])
}

fn i2() -> Mat {
    Mat::identity(2, 2)
}

/// `[[Q, S], [-S, Q]]`.
fn embed_qs(q: &AffineMat, s: &AffineMat) -> AffineMat {
    let neg = s.scale(-1.0);
    AffineMat::blocks(&[vec![q, s], vec![&neg, q]])
}

fn trace_cap(q: &AffineMat) -> AffineMat {
    AffineMat::constant(Mat::from_element(1, 1, TRACE_CAP)).sub(&q.trace())
}

/// Lifted inequality for given `Theta`, `Xe`, `Z`, `W` expressions.
fn lifted(qe: &AffineMat, theta_z: &AffineMat, theta_w: &AffineMat, xe_z: &AffineMat, xe_w: &AffineMat, mu: f64) -> AffineMat {
    let tl = qe.scale(2.0 * mu).add(&theta_z.he());
    let tr = qe.add(theta_w).sub(&xe_z.transpose());
    let bl = tr.transpose();
    let br = xe_w.he().scale(-1.0);
    AffineMat::blocks(&[vec![&tl, &tr], vec![&bl, &br]])
}

/// `[[X + X^T - I, Y^T], [Y, kbar^2 I]]`.
fn norm_bound(x: &AffineMat, y: &AffineMat, kbar: f64) -> AffineMat {
    let n = x.shape().0;
    let m = y.shape().0;
    let tl = x.he().sub(&AffineMat::identity(n));
    let yt = y.transpose();
    let br = AffineMat::identity(m).scale(kbar * kbar);
    AffineMat::blocks(&[vec![&tl, &yt], vec![y, &br]])
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be finite and nonnegative, got {mu}")));
    }
    Ok(())
}

fn check_kbar(kbar: f64) -> Result<()> {
    if !(kbar > 0.0 && kbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("gain bound must be positive, got {kbar}")));
    }
    Ok(())
}

/// Synthesis step: variables `X`, `Y` and per mode `Q_k`, `Sigma_k`, with the
/// multipliers frozen.
pub fn assemble_synthesis(p: &Plant, s: &SpectrumSlice, mult: &MultiplierSet, mu: f64, kbar: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    check_kbar(kbar)?;
    let (n, m) = (p.n(), p.m());
    if mult.len() != s.len() {
        return Err(Error::DimensionMismatch(format!("{} multiplier pairs for {} modes", mult.len(), s.len())));
    }
    mult.check_dims(n)?;

    let mut b = ProblemBuilder::new();
    let x = b.full("X", n, n);
    let y = b.full("Y", m, n);
    let xe = x.kron_left(&i2());
    let ax = x.lmul(p.a());
    let by = y.lmul(p.b());
    for (k, &lam) in s.eigenvalues().iter().enumerate() {
        let q = b.symmetric(format!("Q{k}"), n);
        let sg = b.skew(format!("Sigma{k}"), n);
        let qe = embed_qs(&q, &sg);
        let theta = ax.kron_left(&i2()).sub(&by.kron_left(&lambda_block(lam)));
        let (z, w) = (&mult.z[k], &mult.w[k]);
        let big = lifted(&qe, &theta.rmul(z), &theta.rmul(w), &xe.rmul(z), &xe.rmul(w), mu);
        b.constrain(format!("lifted{k}"), big, Sense::Nsd);
        b.constrain(format!("Qe{k}"), qe, Sense::Psd);
        b.constrain(format!("trace{k}"), trace_cap(&q), Sense::Psd);
    }
    b.constrain("norm", norm_bound(&x, &y, kbar), Sense::Psd);
    Ok(b.build(margin_for(p.a())))
}

/// Analysis step: variables per mode `Z_k`, `W_k`, `Q_k`, `Sigma_k`, with
/// `(X, Y)` frozen. The norm bound only involves frozen data and is checked
/// up front.
pub fn assemble_analysis(p: &Plant, s: &SpectrumSlice, x: &Mat, y: &Mat, mu: f64, kbar: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    check_kbar(kbar)?;
    let (n, m) = (p.n(), p.m());
    if x.shape() != (n, n) || y.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "X must be {n}x{n} and Y {m}x{n}, got {:?} and {:?}",
            x.shape(),
            y.shape()
        )));
    }
    crate::linalg::ensure_finite(x, "X")?;
    crate::linalg::ensure_finite(y, "Y")?;
    let nb = norm_bound(&AffineMat::constant(x.clone()), &AffineMat::constant(y.clone()), kbar).eval(&[]);
    let lowest = min_sym_eigenvalue(&nb);
    if lowest < -1e-9 * (1.0 + nb.norm()) {
        return Err(Error::FrozenGainViolatesNormBound(lowest));
    }

    let xe = i2().kronecker(x);
    let ax = p.a() * x;
    let by = p.b() * y;
    let mut b = ProblemBuilder::new();
    for (k, &lam) in s.eigenvalues().iter().enumerate() {
        let z = b.full(format!("Z{k}"), 2 * n, 2 * n);
        let w = b.full(format!("W{k}"), 2 * n, 2 * n);
        let q = b.symmetric(format!("Q{k}"), n);
        let sg = b.skew(format!("Sigma{k}"), n);
        let qe = embed_qs(&q, &sg);
        let theta = i2().kronecker(&ax) - lambda_block(lam).kronecker(&by);
        let big = lifted(&qe, &z.lmul(&theta), &w.lmul(&theta), &z.lmul(&xe), &w.lmul(&xe), mu);
        b.constrain(format!("lifted{k}"), big, Sense::Nsd);
        b.constrain(format!("Qe{k}"), qe, Sense::Psd);
        b.constrain(format!("trace{k}"), trace_cap(&q), Sense::Psd);
    }
    Ok(b.build(margin_for(p.a())))
}

/// Common-quadratic design: one `Q` and `Y` shared by every value, with
/// `Q_e = diag(Q, Q)`, and the gain bound written with `X := Q`.
pub fn assemble_common_q(p: &Plant, values: &[Complex64], mu: f64, kbar: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    check_kbar(kbar)?;
    if values.is_empty() {
        return Err(Error::EmptyValueList);
    }
    if let Some(bad) = values.iter().find(|z| !(z.re > 0.0)) {
        return Err(Error::InvalidArgument(format!("value {bad} must have positive real part")));
    }
    let (n, m) = (p.n(), p.m());
    let mut b = ProblemBuilder::new();
    let q = b.symmetric("Q", n);
    let y = b.full("Y", m, n);
    let aq = q.lmul(p.a());
    let by = y.lmul(p.b());
    let zero = AffineMat::zeros(n, n);
    let qq = AffineMat::blocks(&[vec![&q, &zero], vec![&zero, &q]]);
    for (k, &lam) in values.iter().enumerate() {
        let diag = aq.sub(&by.scale(lam.re));
        let off = by.scale(lam.im);
        let neg_off = off.scale(-1.0);
        let mode = AffineMat::blocks(&[vec![&diag, &off], vec![&neg_off, &diag]]);
        b.constrain(format!("value{k}"), mode.he().add(&qq.scale(2.0 * mu)), Sense::Nsd);
    }
    b.constrain("Q", q.clone(), Sense::Psd);
    b.constrain("trace", trace_cap(&q), Sense::Psd);
    b.constrain("norm", norm_bound(&q, &y, kbar), Sense::Psd);
    Ok(b.build(margin_for(p.a())))
}

/// Lyapunov certificate for a fixed real embedding:
/// `P_e = [[P, -Pi], [Pi, P]] ⪰ eps I` and `He(P_e A_e) ⪯ -2 mu P_e - eps I`.
pub fn assemble_lyap_check(aek: &RealEmbedding, mu: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    let ae = aek.matrix();
    let n = checked_half(ae)?;
    let mut b = ProblemBuilder::new();
    let pk = b.symmetric("P", n);
    let pi = b.skew("Pi", n);
    let neg_pi = pi.scale(-1.0);
    let pe = AffineMat::blocks(&[vec![&pk, &neg_pi], vec![&pi, &pk]]);
    b.constrain("lyap", pe.rmul(ae).he().add(&pe.scale(2.0 * mu)), Sense::Nsd);
    b.constrain("Pe", pe, Sense::Psd);
    b.constrain("trace", trace_cap(&pk), Sense::Psd);
    Ok(b.build(margin_for(ae)))
}

/// Direct form `He(A_e Q_e) ⪯ -2 mu Q_e` with a structured `Q_e`.
pub fn assemble_q_form(aek: &RealEmbedding, mu: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    let ae = aek.matrix();
    let n = checked_half(ae)?;
    let mut b = ProblemBuilder::new();
    let q = b.symmetric("Q", n);
    let sg = b.skew("Sigma", n);
    let qe = embed_qs(&q, &sg);
    b.constrain("lyap", qe.lmul(ae).he().add(&qe.scale(2.0 * mu)), Sense::Nsd);
    b.constrain("Qe", qe, Sense::Psd);
    b.constrain("trace", trace_cap(&q), Sense::Psd);
    Ok(b.build(margin_for(ae)))
}

/// Lifted form with free multipliers:
/// `(Phi_mu ⊗ Q_e) + He([A_e; -I] [X1, X2]) ⪯ -eps I`.
pub fn assemble_free_multipliers(aek: &RealEmbedding, mu: f64) -> Result<SdpProblem> {
    check_mu(mu)?;
    let ae = aek.matrix();
    let n = checked_half(ae)?;
    let mut b = ProblemBuilder::new();
    let q = b.symmetric("Q", n);
    let sg = b.skew("Sigma", n);
    let x1 = b.full("X1", 2 * n, 2 * n);
    let x2 = b.full("X2", 2 * n, 2 * n);
    let qe = embed_qs(&q, &sg);
    // Z = W = I with Theta := A_e X and Xe := X reproduces the free form.
    let big = lifted(&qe, &x1.lmul(ae), &x2.lmul(ae), &x1, &x2, mu);
    b.constrain("lifted", big, Sense::Nsd);
    b.constrain("Qe", qe, Sense::Psd);
    b.constrain("trace", trace_cap(&q), Sense::Psd);
    Ok(b.build(margin_for(ae)))
}

/// Structured lifted form for a fixed gain `K`: `Y = K X` is substituted so
/// the inequality is affine in `(X, Q, Sigma)` for frozen `(Z, W)`.
pub fn assemble_structured_fixed_gain(
    p: &Plant,
    k: &Gain,
    lambda: Complex64,
    z: &Mat,
    w: &Mat,
    mu: f64,
) -> Result<SdpProblem> {
    check_mu(mu)?;
    let n = p.n();
    if k.matrix().shape() != (p.m(), n) || z.shape() != (2 * n, 2 * n) || w.shape() != (2 * n, 2 * n) {
        return Err(Error::DimensionMismatch("gain or multiplier shape".into()));
    }
    let mut b = ProblemBuilder::new();
    let x = b.full("X", n, n);
    let q = b.symmetric("Q", n);
    let sg = b.skew("Sigma", n);
    let qe = embed_qs(&q, &sg);
    let xe = x.kron_left(&i2());
    let theta = x.lmul(p.a()).kron_left(&i2()).sub(&x.lmul(&(p.b() * k.matrix())).kron_left(&lambda_block(lambda)));
    let big = lifted(&qe, &theta.rmul(z), &theta.rmul(w), &xe.rmul(z), &xe.rmul(w), mu);
    b.constrain("lifted", big, Sense::Nsd);
    b.constrain("Qe", qe, Sense::Psd);
    b.constrain("trace", trace_cap(&q), Sense::Psd);
    Ok(b.build(margin_for(p.a())))
}

fn checked_half(ae: &Mat) -> Result<usize> {
    if !ae.is_square() || ae.nrows() % 2 != 0 || ae.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!("real embedding must be 2n x 2n, got {:?}", ae.shape())));
    }
    crate::linalg::ensure_finite(ae, "real embedding")?;
    Ok(ae.nrows() / 2)
}
