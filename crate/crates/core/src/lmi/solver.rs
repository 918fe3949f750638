//! Feasibility oracle for [`SdpProblem`]s.
//!
//! Each problem is split into independent components (constraints that
//! share no variables). Every component is handed to the Clarabel conic
//! interior-point solver as the margin problem
//!
//! ```text
//!   maximize t   s.t.   sign_j F_j(y) - margin I - t I ⪰ 0,   t <= margin_cap
//! ```
//!
//! A component is feasible when the returned point passes the independent
//! eigenvalue check. It is infeasible when the solver converges to a
//! negative optimal margin or certifies primal infeasibility. Anything else
//! is a solver failure. A feasible answer is re-checked constraint by
//! constraint before it is returned.

use std::collections::BTreeMap;
use std::sync::Once;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
};

use super::problem::{AffineConstraint, SdpOutcome, SdpProblem, SdpStatus, Sense, VERIFY_RTOL};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iter: u32,
    /// Gap and feasibility tolerance passed to the conic solver.
    pub tol: f64,
    /// Upper bound on the margin `t`; keeps the objective bounded.
    pub margin_cap: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-9, margin_cap: 1.0 }
    }
}

pub fn check_feasible(prob: &SdpProblem) -> SdpOutcome {
    check_feasible_with(prob, &SolverSettings::default())
}

pub fn check_feasible_with(prob: &SdpProblem, settings: &SolverSettings) -> SdpOutcome {
    let outcome = |status, msg: String, iterations| SdpOutcome {
        status,
        assignment: None,
        max_violation: f64::NAN,
        iterations,
        diagnostics: msg,
    };
    if let Err(e) = prob.validate() {
        return outcome(SdpStatus::SolverFailure, e.to_string(), 0);
    }
    single_threaded_blas();

    let mut y = vec![0.0; prob.n_vars()];
    let mut iterations = 0;
    for comp in components(prob) {
        if comp.vars.is_empty() {
            // Constant constraints: nothing to optimize.
            for &ci in &comp.constraints {
                let c = &prob.constraints[ci];
                if c.slack(&y, prob.margin) < -VERIFY_RTOL * c.scale() {
                    let msg = format!("constant constraint {} violated", c.name);
                    return outcome(SdpStatus::Infeasible, msg, iterations);
                }
            }
            continue;
        }
        let (result, it) = solve_component(prob, &comp, settings);
        iterations += it;
        match result {
            ComponentResult::Feasible(local) => {
                for (k, &v) in comp.vars.iter().enumerate() {
                    y[v] = local[k];
                }
            }
            ComponentResult::Infeasible(msg) => return outcome(SdpStatus::Infeasible, msg, iterations),
            ComponentResult::Failure(msg) => return outcome(SdpStatus::SolverFailure, msg, iterations),
        }
    }

    if !prob.verify(&y) {
        let msg = format!("candidate failed verification (violation {:.3e})", prob.max_violation(&y));
        return outcome(SdpStatus::SolverFailure, msg, iterations);
    }
    SdpOutcome {
        status: SdpStatus::Feasible,
        max_violation: prob.max_violation(&y),
        assignment: Some(y),
        iterations,
        diagnostics: String::new(),
    }
}

/// Results must not depend on thread scheduling, and the caller already
/// parallelizes across problems.
fn single_threaded_blas() {
    static ONCE: Once = Once::new();
    extern "C" {
        fn openblas_set_num_threads(n: std::os::raw::c_int);
    }
    // SAFETY: plain setter exported by the linked OpenBLAS.
    ONCE.call_once(|| unsafe { openblas_set_num_threads(1) });
}

struct Component {
    vars: Vec<usize>,
    constraints: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn components(prob: &SdpProblem) -> Vec<Component> {
    let n = prob.n_vars();
    let mut parent: Vec<usize> = (0..n).collect();
    for c in &prob.constraints {
        let mut vars = c.expr.terms().keys();
        if let Some(&first) = vars.next() {
            for &v in vars {
                let (a, b) = (find(&mut parent, first), find(&mut parent, v));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Component> = BTreeMap::new();
    let mut constant = Component { vars: Vec::new(), constraints: Vec::new() };
    for (ci, c) in prob.constraints.iter().enumerate() {
        match c.expr.terms().keys().next() {
            Some(&v) => {
                let root = find(&mut parent, v);
                groups
                    .entry(root)
                    .or_insert_with(|| Component { vars: Vec::new(), constraints: Vec::new() })
                    .constraints
                    .push(ci);
            }
            None => constant.constraints.push(ci),
        }
    }
    for v in 0..n {
        let root = find(&mut parent, v);
        if let Some(g) = groups.get_mut(&root) {
            g.vars.push(v);
        }
    }
    let mut out = vec![constant];
    out.extend(groups.into_values());
    out
}

enum ComponentResult {
    Feasible(Vec<f64>),
    Infeasible(String),
    Failure(String),
}

fn sign(c: &AffineConstraint) -> f64 {
    match c.sense {
        Sense::Psd => 1.0,
        Sense::Nsd => -1.0,
    }
}

/// Scaled upper-triangle vectorization used by the PSD triangle cone:
/// column-major, off-diagonal entries times sqrt(2).
fn svec(m: &Mat) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { m[(i, j)] * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Conic data `s = b - A x` for one component, with `x = (y_local, t)`.
struct ConicData {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

/// Scalar constraint `c - l(y) >= 0` with `c > 0`, such as a trace cap.
fn is_cap(c: &AffineConstraint) -> bool {
    c.size() == 1 && sign(c) * c.expr.constant_part()[(0, 0)] > 0.0
}

fn is_homogeneous(c: &AffineConstraint) -> bool {
    c.expr.constant_part().iter().all(|&v| v == 0.0)
}

/// A component made of homogeneous constraints plus caps is solved at unit
/// scale: caps become `l(y) <= 1`, the margin is dropped, and the point is
/// scaled back up afterwards. Solving it at the cap's own scale (with an
/// absolute margin) is badly conditioned.
fn normalizable(prob: &SdpProblem, comp: &Component) -> bool {
    let cs = || comp.constraints.iter().map(|&ci| &prob.constraints[ci]);
    cs().all(|c| is_homogeneous(c) || is_cap(c)) && cs().any(is_cap) && cs().any(is_homogeneous)
}

fn conic_data(prob: &SdpProblem, comp: &Component, settings: &SolverSettings, normalized: bool) -> ConicData {
    let local: BTreeMap<usize, usize> = comp.vars.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let p = comp.vars.len();
    let margin = if normalized { 0.0 } else { prob.margin };
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p + 1];
    let mut b = Vec::new();
    let mut cones = Vec::new();

    // Scalar constraints and the margin cap share one nonnegative cone.
    let (scalars, matrices): (Vec<usize>, Vec<usize>) =
        comp.constraints.iter().partition(|&&ci| prob.constraints[ci].size() == 1);
    for &ci in &scalars {
        let c = &prob.constraints[ci];
        let sg = sign(c);
        let row = b.len();
        let c0 = sg * c.expr.constant_part()[(0, 0)];
        if normalized && c0 > 0.0 {
            b.push(1.0);
            for (v, m) in c.expr.terms() {
                columns[local[v]].push((row, -sg * m[(0, 0)] / c0));
            }
        } else {
            // Positive row scaling keeps both the set and the sign of t.
            let r = 1.0 / c0.abs().max(1.0);
            b.push(r * (c0 - margin));
            for (v, m) in c.expr.terms() {
                columns[local[v]].push((row, -r * sg * m[(0, 0)]));
            }
            columns[p].push((row, r));
        }
    }
    columns[p].push((b.len(), 1.0));
    b.push(settings.margin_cap);
    cones.push(NonnegativeConeT(b.len()));

    for &ci in &matrices {
        let c = &prob.constraints[ci];
        let d = c.size();
        let sg = sign(c);
        let row0 = b.len();
        let c0 = c.expr.constant_part() * sg - Mat::identity(d, d) * margin;
        b.extend(svec(&c0));
        for (v, m) in c.expr.terms() {
            for (r, val) in svec(&(m * -sg)).into_iter().enumerate() {
                if val != 0.0 {
                    columns[local[v]].push((row0 + r, val));
                }
            }
        }
        for (r, val) in svec(&Mat::identity(d, d)).into_iter().enumerate() {
            if val != 0.0 {
                columns[p].push((row0 + r, val));
            }
        }
        cones.push(PSDTriangleConeT(d));
    }

    let mut colptr = vec![0];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in &mut columns {
        col.sort_by_key(|e| e.0);
        for &(r, v) in col.iter() {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    ConicData { a: CscMatrix::new(b.len(), p + 1, colptr, rowval, nzval), b, cones }
}


/// Multiple of a normalized point to return. Any factor between the one
/// that reaches the margin and the one that hits a cap is valid; the
/// geometric mean of the two keeps the point away from both, which matters
/// when the point seeds a later problem.
fn rescale(prob: &SdpProblem, comp: &Component, y: &[f64]) -> f64 {
    let mut hi = f64::INFINITY;
    let mut m = f64::INFINITY;
    for &ci in &comp.constraints {
        let c = &prob.constraints[ci];
        if is_cap(c) {
            let c0 = sign(c) * c.expr.constant_part()[(0, 0)];
            let lin = sign(c) * c.value(y)[(0, 0)] - c0;
            if lin < 0.0 {
                hi = hi.min((c0 - prob.margin) / -lin);
            }
        } else {
            m = m.min(c.slack(y, 0.0));
        }
    }
    let lo = if m > 0.0 { prob.margin / m } else { f64::INFINITY };
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) if lo <= hi => (lo * hi).sqrt(),
        (true, false) => 2.0 * lo,
        (_, true) => hi,
        (false, false) => 1.0,
    }
}

/// Factors applied to the margin cap when a solve ends unresolved. The cap
/// only bounds the objective, so the answer does not depend on it, but the
/// interior-point path does and a stalled run often completes on another.
const CAP_RETRIES: [f64; 2] = [1e2, 1e-2];

fn solve_component(prob: &SdpProblem, comp: &Component, settings: &SolverSettings) -> (ComponentResult, usize) {
    let normalized = normalizable(prob, comp);
    let mut last = run(prob, comp, settings, normalized);
    let mut iterations = last.iterations;
    for factor in CAP_RETRIES {
        if !matches!(last.verdict, Verdict::Unresolved(_)) {
            break;
        }
        let retry = SolverSettings { margin_cap: settings.margin_cap * factor, ..settings.clone() };
        last = run(prob, comp, &retry, normalized);
        iterations += last.iterations;
    }
    let run = Run { verdict: last.verdict, iterations };
    let result = match run.verdict {
        Verdict::Verified(y) => ComponentResult::Feasible(y),
        Verdict::Infeasible(msg) => ComponentResult::Infeasible(msg),
        Verdict::Unresolved(msg) => ComponentResult::Failure(msg),
    };
    (result, run.iterations)
}

enum Verdict {
    Verified(Vec<f64>),
    Infeasible(String),
    Unresolved(String),
}

struct Run {
    verdict: Verdict,
    iterations: usize,
}

fn run(prob: &SdpProblem, comp: &Component, settings: &SolverSettings, normalized: bool) -> Run {
    let p = comp.vars.len();
    let data = conic_data(prob, comp, settings, normalized);
    let pmat = CscMatrix::<f64>::zeros((p + 1, p + 1));
    let mut q = vec![0.0; p + 1];
    q[p] = -1.0;
    let failed = |msg: String| Run { verdict: Verdict::Unresolved(msg), iterations: 0 };
    let cfg = match DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .build()
    {
        Ok(c) => c,
        Err(e) => return failed(format!("solver settings: {e}")),
    };
    let mut solver = match DefaultSolver::new(&pmat, &q, &data.a, &data.b, &data.cones, cfg) {
        Ok(s) => s,
        Err(e) => return failed(format!("solver setup: {e:?}")),
    };
    solver.solve();
    let sol = &solver.solution;
    let iterations = sol.iterations as usize;

    let mut full = vec![0.0; prob.n_vars()];
    for (k, &v) in comp.vars.iter().enumerate() {
        full[v] = sol.x[k];
    }
    if normalized {
        let s = rescale(prob, comp, &full);
        full.iter_mut().for_each(|v| *v *= s);
    }
    let verified = full.iter().all(|v| v.is_finite())
        && comp.constraints.iter().all(|&ci| {
            let c = &prob.constraints[ci];
            c.slack(&full, prob.margin) >= -VERIFY_RTOL * c.scale()
        });
    let verdict = if verified {
        Verdict::Verified(comp.vars.iter().map(|&v| full[v]).collect())
    } else {
        let converged = matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
        match sol.status {
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Verdict::Infeasible("solver certified primal infeasibility".into())
            }
            // At unit scale a converged margin that cannot be scaled up to
            // the required one means the margin is unattainable under the caps.
            _ if converged && (sol.x[p] < 0.0 || normalized) => {
                Verdict::Infeasible(format!("optimal margin {:.3e} is insufficient", sol.x[p]))
            }
            status => Verdict::Unresolved(format!("solver status {status:?}, point not verified")),
        }
    };
    Run { verdict, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::expr::AffineMat;
    use crate::lmi::problem::ProblemBuilder;

    fn scalar(v: f64) -> AffineMat {
        AffineMat::constant(Mat::from_element(1, 1, v))
    }

    #[test]
    fn svec_preserves_inner_product() {
        let a = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let b = Mat::from_row_slice(3, 3, &[0.5, -1.0, 0.0, -1.0, 2.0, 1.5, 0.0, 1.5, -3.0]);
        let lhs: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - a.dot(&b)).abs() < 1e-12);
    }

    #[test]
    fn interval_feasible() {
        let mut b = ProblemBuilder::new();
        let y = b.full("y", 1, 1);
        b.constrain("lower", y.clone(), Sense::Psd);
        b.constrain("upper", scalar(1.0).sub(&y), Sense::Psd);
        let p = b.build(1e-6);
        let out = check_feasible(&p);
        assert_eq!(out.status, SdpStatus::Feasible);
        let v = out.assignment.unwrap()[0];
        assert!((1e-6 - 1e-12..=1.0 - 1e-6 + 1e-12).contains(&v), "{v}");
    }

    #[test]
    fn interval_infeasible() {
        let mut b = ProblemBuilder::new();
        let y = b.full("y", 1, 1);
        b.constrain("lower", y.clone(), Sense::Psd);
        b.constrain("upper", scalar(-1.0).sub(&y), Sense::Psd);
        let out = check_feasible(&b.build(1e-6));
        assert_eq!(out.status, SdpStatus::Infeasible);
        assert!(out.assignment.is_none());
    }

    #[test]
    fn matrix_completion_style() {
        // [[1, y], [y, 1]] ⪰ 0 together with y >= 0.99 is feasible; y >= 1.01 is not.
        for (bound, feasible) in [(0.99, true), (1.01, false)] {
            let mut b = ProblemBuilder::new();
            let y = b.full("y", 1, 1);
            let one = scalar(1.0);
            b.constrain("psd", AffineMat::blocks(&[vec![&one, &y], vec![&y, &one]]), Sense::Psd);
            b.constrain("bound", y.sub(&scalar(bound)), Sense::Psd);
            let out = check_feasible(&b.build(1e-6));
            assert_eq!(out.is_feasible(), feasible, "{}", out.diagnostics);
        }
    }

    #[test]
    fn independent_components_are_combined() {
        let mut b = ProblemBuilder::new();
        let u = b.full("u", 1, 1);
        let v = b.full("v", 1, 1);
        b.constrain("u", u.sub(&scalar(2.0)), Sense::Psd);
        b.constrain("v", v.add(&scalar(3.0)), Sense::Nsd);
        let p = b.build(1e-6);
        let out = check_feasible(&p);
        assert!(out.is_feasible(), "{:?}", out);
        let y = out.assignment.unwrap();
        assert!(y[0] >= 2.0 && y[1] <= -3.0);
        assert!(p.verify(&y));
    }
}
