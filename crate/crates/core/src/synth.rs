//! Gain design: the iterative synthesis/analysis scheme and four baselines.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{nonzero_spectrum, SpectrumSlice, WeightedDigraph, DEFAULT_DEDUP_TOLERANCE};
use crate::linalg::{matrix_2norm, solve_care, Gain, Mat, Plant};
use crate::lmi::{
    assemble_analysis, assemble_common_q, assemble_synthesis, check_feasible_with, Certificate, MultiplierSet,
    SdpProblem, SdpStatus, SolverSettings,
};
use crate::verify::estimate_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Riccati,
    Listmann,
    Aek,
    Direct,
    Alg1,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Riccati, Method::Listmann, Method::Aek, Method::Direct, Method::Alg1];

    pub fn name(self) -> &'static str {
        match self {
            Method::Riccati => "riccati",
            Method::Listmann => "listmann",
            Method::Aek => "aek",
            Method::Direct => "direct",
            Method::Alg1 => "alg1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected one of riccati, listmann, aek, direct, alg1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfig {
    pub kbar: f64,
    /// Outer-loop stopping tolerance on consecutive synthesis rates.
    pub tolerance: f64,
    pub alpha_grid: Vec<f64>,
    /// Absolute tolerance of every bisection on `mu`.
    pub mu_tol: f64,
    /// Upper end of the bisection bracket; derived from the data when unset.
    pub mu_cap: Option<f64>,
    pub max_iter: usize,
    #[serde(skip)]
    pub solver: SolverSettings,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            kbar: 20.0,
            tolerance: 1e-3,
            alpha_grid: vec![0.01, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0],
            mu_tol: 1e-4,
            mu_cap: None,
            max_iter: 50,
            solver: SolverSettings::default(),
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.kbar) || !positive(self.tolerance) || !positive(self.mu_tol) {
            return Err(Error::Config("kbar, tolerance and mu_tol must be positive".into()));
        }
        if self.tolerance <= self.mu_tol {
            return Err(Error::Config("tolerance must exceed mu_tol".into()));
        }
        if self.alpha_grid.is_empty() || !self.alpha_grid.iter().all(|&a| positive(a)) {
            return Err(Error::Config("alpha grid must be nonempty and positive".into()));
        }
        if self.mu_cap.is_some_and(|c| !positive(c)) || self.max_iter == 0 {
            return Err(Error::Config("mu_cap and max_iter must be positive".into()));
        }
        Ok(())
    }

    /// `kbar (||A|| + max|lambda| ||B||) + ||A||` unless overridden.
    pub fn cap_for(&self, p: &Plant, s: &SpectrumSlice) -> f64 {
        self.mu_cap.unwrap_or_else(|| {
            let na = matrix_2norm(p.a());
            self.kbar * (na + s.max_modulus() * matrix_2norm(p.b())) + na
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Synthesis,
    Analysis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub gain: Gain,
    /// Last certified rate. Riccati designs carry no certificate and report
    /// their spectral rate instead.
    pub mu_star: f64,
    pub mu_trace: Vec<(StepKind, f64)>,
    pub certificates: Option<Certificate>,
    pub multipliers: Option<MultiplierSet>,
    pub iterations: usize,
    pub wall_time: f64,
    pub method: Method,
    /// Multiplier scale of the initialization that was kept.
    pub alpha: Option<f64>,
    /// A solver failure cut the iteration short; the result is the best
    /// certified point reached before it.
    pub degraded: bool,
    /// Bisection probes the solver could not decide (treated as uncertified).
    pub undecided_probes: usize,
}

/// Largest `mu` in `[lower, cap]` accepted by a monotone predicate, to `tol`.
///
/// `start` is an already-certified `(mu, witness)`; without it the predicate
/// is first evaluated at 0 and `None` is returned when that fails. The search
/// gallops upward from the lower bracket before bisecting, so warm starts
/// close to the optimum stay cheap.
pub fn bisect_mu<W>(
    mut feasible: impl FnMut(f64) -> Result<Option<W>>,
    cap: f64,
    tol: f64,
    start: Option<(f64, W)>,
) -> Result<Option<(f64, W)>> {
    if !(tol > 0.0 && cap >= 0.0) {
        return Err(Error::InvalidArgument(format!("bisection needs tol > 0 and cap >= 0, got {tol}, {cap}")));
    }
    let warm = start.is_some();
    let (mut lo, mut best) = match start {
        Some(s) => s,
        None => match feasible(0.0)? {
            Some(w) => (0.0, w),
            None => return Ok(None),
        },
    };
    if lo >= cap {
        return Ok(Some((lo, best)));
    }
    let mut step = if warm { 4.0 * tol } else { (cap / 16.0).max(tol) };
    let mut hi = loop {
        let trial = (lo + step).min(cap);
        match feasible(trial)? {
            Some(w) => {
                lo = trial;
                best = w;
                if trial >= cap {
                    return Ok(Some((lo, best)));
                }
                step *= 2.0;
            }
            None => break trial,
        }
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match feasible(mid)? {
            Some(w) => {
                lo = mid;
                best = w;
            }
            None => hi = mid,
        }
    }
    Ok(Some((lo, best)))
}

/// Output of one synthesis step.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisStep {
    pub mu: f64,
    pub x: Mat,
    pub y: Mat,
    pub certificates: Certificate,
    /// Bisection probes the solver could not decide.
    pub undecided: usize,
}

impl SynthesisStep {
    pub fn gain(&self) -> Result<Gain> {
        let xi = self
            .x
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SolverFailure("singular X in synthesis output".into()))?;
        Gain::new(&self.y * xi)
    }
}

/// Output of one analysis step.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisStep {
    pub mu: f64,
    pub multipliers: MultiplierSet,
    pub certificates: Certificate,
    pub undecided: usize,
}

/// Outcome of one bisection probe. A probe the solver could not decide is
/// not certified, so it bounds the bracket from above like an infeasible one;
/// it is counted so callers can report it.
fn solve(prob: &SdpProblem, settings: &SolverSettings, undecided: &AtomicUsize) -> Option<Vec<f64>> {
    let out = check_feasible_with(prob, settings);
    match out.status {
        SdpStatus::Feasible => out.assignment,
        SdpStatus::Infeasible => None,
        SdpStatus::SolverFailure => {
            undecided.fetch_add(1, Ordering::Relaxed);
            None
        }
    }
}

/// Packs named block values into an assignment for `prob`.
fn pack(prob: &SdpProblem, values: &[(String, &Mat)]) -> Option<Vec<f64>> {
    let mut y = vec![0.0; prob.n_vars()];
    for (name, value) in values {
        let block = prob.block(name)?;
        if block.kind.shape() != value.shape() {
            return None;
        }
        block.pack(value, &mut y);
    }
    Some(y)
}

/// Accepts a previously certified point only after re-checking it against
/// the problem rebuilt at its own `mu`.
fn confirm_seed<W>(mu: f64, build: impl Fn(f64) -> Result<SdpProblem>, values: &[(String, &Mat)], witness: W) -> Result<Option<(f64, W)>> {
    let prob = build(mu)?;
    Ok(pack(&prob, values).filter(|y| prob.verify(y)).map(|_| (mu, witness)))
}

fn certificate_values<'a>(c: &'a Certificate, out: &mut Vec<(String, &'a Mat)>) {
    for (k, (q, s)) in c.q.iter().zip(&c.sigma).enumerate() {
        out.push((format!("Q{k}"), q));
        out.push((format!("Sigma{k}"), s));
    }
}

pub fn synthesis_step(p: &Plant, s: &SpectrumSlice, m: &MultiplierSet, cfg: &AlgorithmConfig) -> Result<SynthesisStep> {
    synthesis_step_from(p, s, m, cfg, None)
}

/// Synthesis step whose bisection starts from a certified `(X, Y, Q, Sigma)`.
pub fn synthesis_step_from(
    p: &Plant,
    s: &SpectrumSlice,
    m: &MultiplierSet,
    cfg: &AlgorithmConfig,
    seed: Option<SynthesisStep>,
) -> Result<SynthesisStep> {
    let build = |mu: f64| assemble_synthesis(p, s, m, mu, cfg.kbar);
    let undecided = AtomicUsize::new(0);
    let feasible = |mu: f64| -> Result<Option<SynthesisStep>> {
        let prob = build(mu)?;
        let Some(y) = solve(&prob, &cfg.solver, &undecided) else {
            return Ok(None);
        };
        Ok(Some(SynthesisStep {
            mu,
            x: prob.value_of("X", &y)?,
            y: prob.value_of("Y", &y)?,
            certificates: Certificate::from_assignment(&prob, &y, s.len())?,
            undecided: 0,
        }))
    };
    let start = match seed {
        Some(seed) => {
            let mut values = vec![("X".to_string(), &seed.x), ("Y".to_string(), &seed.y)];
            certificate_values(&seed.certificates, &mut values);
            confirm_seed(seed.mu, build, &values, seed.clone())?
        }
        None => None,
    };
    match bisect_mu(feasible, cfg.cap_for(p, s), cfg.mu_tol, start)? {
        Some((mu, mut step)) => {
            step.mu = mu;
            step.undecided = undecided.load(Ordering::Relaxed);
            Ok(step)
        }
        None => Err(Error::Infeasible("synthesis step infeasible at mu = 0".into())),
    }
}

pub fn analysis_step(p: &Plant, s: &SpectrumSlice, x: &Mat, y: &Mat, cfg: &AlgorithmConfig) -> Result<AnalysisStep> {
    analysis_step_from(p, s, x, y, cfg, None)
}

/// Analysis step whose bisection starts from certified `(Z, W, Q, Sigma)`.
pub fn analysis_step_from(
    p: &Plant,
    s: &SpectrumSlice,
    x: &Mat,
    y: &Mat,
    cfg: &AlgorithmConfig,
    seed: Option<AnalysisStep>,
) -> Result<AnalysisStep> {
    let build = |mu: f64| assemble_analysis(p, s, x, y, mu, cfg.kbar);
    // Surface a violated norm precondition before any bisection.
    build(0.0)?;
    let undecided = AtomicUsize::new(0);
    let feasible = |mu: f64| -> Result<Option<AnalysisStep>> {
        let prob = build(mu)?;
        let Some(a) = solve(&prob, &cfg.solver, &undecided) else {
            return Ok(None);
        };
        Ok(Some(AnalysisStep {
            mu,
            multipliers: MultiplierSet::from_assignment(&prob, &a, s.len())?,
            certificates: Certificate::from_assignment(&prob, &a, s.len())?,
            undecided: 0,
        }))
    };
    let start = match seed {
        Some(seed) => {
            let mut values = Vec::new();
            for (k, (z, w)) in seed.multipliers.z.iter().zip(&seed.multipliers.w).enumerate() {
                values.push((format!("Z{k}"), z));
                values.push((format!("W{k}"), w));
            }
            certificate_values(&seed.certificates, &mut values);
            confirm_seed(seed.mu, build, &values, seed.clone())?
        }
        None => None,
    };
    match bisect_mu(feasible, cfg.cap_for(p, s), cfg.mu_tol, start)? {
        Some((mu, mut step)) => {
            step.mu = mu;
            step.undecided = undecided.load(Ordering::Relaxed);
            Ok(step)
        }
        None => Err(Error::Infeasible("analysis step infeasible at mu = 0".into())),
    }
}

/// Nonzero Laplacian spectrum of a graph that has a spanning tree.
pub fn spectrum_of(g: &WeightedDigraph) -> Result<SpectrumSlice> {
    if !g.is_connected() {
        return Err(Error::InvalidGraph("graph has no spanning tree".into()));
    }
    nonzero_spectrum(&g.laplacian(), DEFAULT_DEDUP_TOLERANCE)
}

/// One synthesis step per grid `alpha` from `Z = I`, `W = alpha I`; the
/// best rate wins, ties (within `mu_tol`) going to the smallest `alpha`.
fn best_initialization(p: &Plant, s: &SpectrumSlice, cfg: &AlgorithmConfig) -> Result<(f64, MultiplierSet, SynthesisStep)> {
    let runs: Vec<(f64, Result<SynthesisStep>)> = cfg
        .alpha_grid
        .par_iter()
        .map(|&alpha| (alpha, synthesis_step(p, s, &MultiplierSet::initial(p.n(), s.len(), alpha), cfg)))
        .collect();
    let top = runs
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|st| st.mu))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sorted: Vec<&(f64, Result<SynthesisStep>)> = runs.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((alpha, Ok(step))) = sorted
        .iter()
        .find(|(_, r)| r.as_ref().is_ok_and(|st| st.mu >= top - cfg.mu_tol))
        .map(|r| (r.0, r.1.as_ref()))
    {
        return Ok((alpha, MultiplierSet::initial(p.n(), s.len(), alpha), step.clone()));
    }
    // Nothing feasible: prefer reporting a solver failure over infeasibility.
    if let Some((_, Err(e))) = runs.iter().find(|(_, r)| matches!(r, Err(Error::SolverFailure(_)))) {
        return Err(Error::SolverFailure(e.to_string()));
    }
    Err(Error::InfeasibleAtInitialization)
}

/// Bookkeeping of an iterative run, turned into a result by `finish`.
struct Run {
    method: Method,
    alpha: f64,
    trace: Vec<(StepKind, f64)>,
    iterations: usize,
    undecided: usize,
    t0: Instant,
}

impl Run {
    fn finish(self, step: &SynthesisStep, mult: MultiplierSet, degraded: bool) -> Result<SynthesisResult> {
        Ok(SynthesisResult {
            gain: step.gain()?,
            mu_star: self.trace.last().map_or(step.mu, |t| t.1),
            mu_trace: self.trace,
            certificates: Some(step.certificates.clone()),
            multipliers: Some(mult),
            iterations: self.iterations,
            wall_time: self.t0.elapsed().as_secs_f64(),
            method: self.method,
            alpha: Some(self.alpha),
            degraded,
            undecided_probes: self.undecided,
        })
    }
}

/// A single synthesis step with the initial multipliers.
pub fn direct_design(p: &Plant, g: &WeightedDigraph, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let t0 = Instant::now();
    let s = spectrum_of(g)?;
    let (alpha, mult, step) = best_initialization(p, &s, cfg)?;
    let run = Run {
        method: Method::Direct,
        alpha,
        trace: vec![(StepKind::Synthesis, step.mu)],
        iterations: 1,
        undecided: step.undecided,
        t0,
    };
    run.finish(&step, mult, false)
}

/// Alternates analysis and synthesis steps from the best initialization
/// until the synthesis rate stalls within `cfg.tolerance`.
pub fn algorithm1(p: &Plant, g: &WeightedDigraph, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let t0 = Instant::now();
    let s = spectrum_of(g)?;
    let (alpha, mut mult, mut synth) = best_initialization(p, &s, cfg)?;
    let mut run = Run {
        method: Method::Alg1,
        alpha,
        trace: vec![(StepKind::Synthesis, synth.mu)],
        iterations: 0,
        undecided: synth.undecided,
        t0,
    };

    while run.iterations < cfg.max_iter {
        let seed = AnalysisStep {
            mu: synth.mu,
            multipliers: mult.clone(),
            certificates: synth.certificates.clone(),
            undecided: 0,
        };
        let analysis = match analysis_step_from(p, &s, &synth.x, &synth.y, cfg, Some(seed)) {
            Ok(a) => a,
            Err(Error::SolverFailure(_)) => return run.finish(&synth, mult, true),
            Err(e) => return Err(e),
        };
        run.trace.push((StepKind::Analysis, analysis.mu));
        run.undecided += analysis.undecided;

        let seed = SynthesisStep {
            mu: analysis.mu,
            x: synth.x.clone(),
            y: synth.y.clone(),
            certificates: analysis.certificates.clone(),
            undecided: 0,
        };
        let next = match synthesis_step_from(p, &s, &analysis.multipliers, cfg, Some(seed)) {
            Ok(st) => st,
            Err(Error::SolverFailure(_)) => return run.finish(&synth, mult, true),
            Err(e) => return Err(e),
        };
        run.iterations += 1;
        run.trace.push((StepKind::Synthesis, next.mu));
        run.undecided += next.undecided;
        let improvement = (next.mu - synth.mu).abs();
        synth = next;
        mult = analysis.multipliers;
        if improvement <= cfg.tolerance {
            break;
        }
    }
    run.finish(&synth, mult, false)
}

/// Riccati gain `K = B^T P(a)` with `b = min Re lambda` and the largest `a`
/// whose gain norm stays within `kbar`.
pub fn riccati_design(p: &Plant, s: &SpectrumSlice, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    if s.is_empty() {
        return Err(Error::InvalidArgument("spectrum slice is empty".into()));
    }
    let t0 = Instant::now();
    let b = s.min_real();
    let gain_at = |a: f64| -> Result<Mat> { Ok(p.b().transpose() * solve_care(p, a, b)?) };
    let within = |k: &Mat| matrix_2norm(k) <= cfg.kbar;

    let (mut lo, mut hi);
    let mut k_lo;
    let k1 = gain_at(1.0)?;
    if within(&k1) {
        (lo, k_lo) = (1.0, k1);
        hi = 2.0;
        loop {
            let k = gain_at(hi)?;
            if !within(&k) {
                break;
            }
            (lo, k_lo) = (hi, k);
            hi *= 2.0;
            if hi > 1e15 {
                return Err(Error::Infeasible("Riccati gain norm never reaches the bound".into()));
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        loop {
            let k = gain_at(lo)?;
            if within(&k) {
                k_lo = k;
                break;
            }
            hi = lo;
            lo *= 0.5;
            if lo < 1e-15 {
                return Err(Error::Infeasible("Riccati gain exceeds the bound for every weight".into()));
            }
        }
    }
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        let k = gain_at(mid)?;
        if within(&k) {
            (lo, k_lo) = (mid, k);
        } else {
            hi = mid;
        }
    }
    let gain = Gain::new(k_lo)?;
    let mu = estimate_rate(p, s, &gain)?.mu_hat;
    Ok(SynthesisResult {
        gain,
        mu_star: mu,
        mu_trace: Vec::new(),
        certificates: None,
        multipliers: None,
        iterations: 0,
        wall_time: t0.elapsed().as_secs_f64(),
        method: Method::Riccati,
        alpha: None,
        degraded: false,
        undecided_probes: 0,
    })
}

/// Corners of the first-quadrant box around the slice, deduplicated.
pub fn box_corners(s: &SpectrumSlice) -> Vec<Complex64> {
    let vals = s.eigenvalues();
    let re_min = vals.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let re_max = vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let im_max = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let tol = s.dedup_tolerance();
    let mut out: Vec<Complex64> = Vec::with_capacity(4);
    for re in [re_min, re_max] {
        for im in [0.0, im_max] {
            let c = Complex64::new(re, im);
            if !out.iter().any(|o| (o - c).norm() <= tol) {
                out.push(c);
            }
        }
    }
    out
}

fn common_q_design(p: &Plant, s: &SpectrumSlice, values: &[Complex64], cfg: &AlgorithmConfig, method: Method) -> Result<SynthesisResult> {
    cfg.validate()?;
    let t0 = Instant::now();
    let undecided = AtomicUsize::new(0);
    let feasible = |mu: f64| -> Result<Option<(Mat, Mat)>> {
        let prob = assemble_common_q(p, values, mu, cfg.kbar)?;
        let Some(y) = solve(&prob, &cfg.solver, &undecided) else {
            return Ok(None);
        };
        Ok(Some((prob.value_of("Q", &y)?, prob.value_of("Y", &y)?)))
    };
    let Some((mu, (q, y))) = bisect_mu(feasible, cfg.cap_for(p, s), cfg.mu_tol, None)? else {
        return Err(Error::Infeasible(format!("{method}: infeasible at mu = 0")));
    };
    let qi = q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("singular Q in common-Q output".into()))?;
    let zero = Mat::zeros(p.n(), p.n());
    Ok(SynthesisResult {
        gain: Gain::new(y * qi)?,
        mu_star: mu,
        mu_trace: vec![(StepKind::Synthesis, mu)],
        certificates: Some(Certificate { q: vec![q; s.len()], sigma: vec![zero; s.len()] }),
        multipliers: None,
        iterations: 1,
        wall_time: t0.elapsed().as_secs_f64(),
        method,
        alpha: None,
        degraded: false,
        undecided_probes: undecided.load(Ordering::Relaxed),
    })
}

/// Common-Q design imposed on the corners of the box bounding the spectrum.
pub fn listmann_design(p: &Plant, s: &SpectrumSlice, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("spectrum slice is empty".into()));
    }
    common_q_design(p, s, &box_corners(s), cfg, Method::Listmann)
}

/// Common-Q design imposed on every eigenvalue of the slice.
pub fn aek_design(p: &Plant, s: &SpectrumSlice, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("spectrum slice is empty".into()));
    }
    common_q_design(p, s, s.eigenvalues(), cfg, Method::Aek)
}

/// Dispatches on `method`.
pub fn design(method: Method, p: &Plant, g: &WeightedDigraph, cfg: &AlgorithmConfig) -> Result<SynthesisResult> {
    match method {
        Method::Alg1 => algorithm1(p, g, cfg),
        Method::Direct => direct_design(p, g, cfg),
        _ => {
            let s = spectrum_of(g)?;
            match method {
                Method::Riccati => riccati_design(p, &s, cfg),
                Method::Listmann => listmann_design(p, &s, cfg),
                _ => aek_design(p, &s, cfg),
            }
        }
    }
}
