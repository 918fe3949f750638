//! Building a small LMI by hand and asking the feasibility oracle about it.
//!
//! Find a symmetric `P` with `P > 0` and `A^T P + P A < 0` for a stable `A`,
//! then make `A` unstable and watch the answer flip.

use syncgain::linalg::{min_sym_eigenvalue, Mat};
use syncgain::lmi::{check_feasible, AffineMat, ProblemBuilder, Sense};

fn lyapunov_lmi(a: &Mat) -> syncgain::lmi::SdpProblem {
    let mut b = ProblemBuilder::new();
    let p = b.symmetric("P", a.nrows());
    let decay = p.lmul(&a.transpose()).add(&p.rmul(a));
    // Homogeneous problems need a normalization.
    let cap = AffineMat::constant(Mat::from_element(1, 1, 1e3)).sub(&p.trace());
    b.constrain("P", p, Sense::Psd);
    b.constrain("decay", decay, Sense::Nsd);
    b.constrain("trace", cap, Sense::Psd);
    b.build(1e-6)
}

fn main() -> syncgain::Result<()> {
    let stable = Mat::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -2.0]);
    let prob = lyapunov_lmi(&stable);
    let out = check_feasible(&prob);
    println!("stable A: {:?} after {} iterations", out.status, out.iterations);
    if let Some(y) = &out.assignment {
        let p = prob.value_of("P", y)?;
        println!("P =\n{p}min eig {:.3e}, max violation {:.1e}", min_sym_eigenvalue(&p), out.max_violation);
    }

    let unstable = Mat::from_row_slice(2, 2, &[0.5, 4.0, 0.0, -2.0]);
    let out = check_feasible(&lyapunov_lmi(&unstable));
    println!("unstable A: {:?} ({})", out.status, out.diagnostics);
    Ok(())
}
