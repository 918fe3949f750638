//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (uncaptured) before asserting, so a full run doubles as a report.
//!
//! The benchmark grid is computed once and shared; it dominates the runtime.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use syncgain::bench::{run_benchmark, BenchRow, ScenarioConfig};
use syncgain::graph::SpectrumSlice;
use syncgain::linalg::{
    closed_loop_mode, eigenvalues, eigenvalues_complex, matrix_2norm, real_embedding, spectral_abscissa, Gain, Mat, Plant,
};
use syncgain::lmi::{
    assemble_free_multipliers, assemble_lyap_check, assemble_q_form, assemble_structured_fixed_gain,
    assemble_synthesis, check_feasible, margin_for, MultiplierSet, SdpOutcome, SdpProblem, SdpStatus, VERIFY_RTOL,
};
use syncgain::sim::{self, fit_decay, initial_state, integrate};
use syncgain::synth::{spectrum_of, Method};
use syncgain::verify::{check_mu_uges, CheckMethod};

const NORM_BOUND: f64 = 20.0;
const NORM_RTOL: f64 = 1e-6;
const BENCH_BUDGET: Duration = Duration::from_secs(15 * 60);
const MONOTONE_TOL: f64 = 1e-4;
const ITERATION_CAP: usize = 50;
const EIG_TOL: f64 = 1e-8;
const ORDER_TOL: f64 = 1e-3;
const FIT_BAND: (f64, f64) = (0.8, 1.2);
const ENVELOPE_RATE: f64 = 0.8;
const ENVELOPE_SLACK: f64 = 1e-9;

fn report(name: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "[{tag}] {name}: {detail}");
}

struct Bench {
    cfg: ScenarioConfig,
    rows: Vec<BenchRow>,
    elapsed: Duration,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let cfg = ScenarioConfig::default();
        let t0 = Instant::now();
        let rows = run_benchmark(&cfg).expect("default config is valid");
        Bench { cfg, rows, elapsed: t0.elapsed() }
    })
}

fn row<'a>(b: &'a Bench, scenario: &str, method: Method) -> &'a BenchRow {
    b.rows
        .iter()
        .find(|r| r.scenario == scenario && r.method == method)
        .unwrap_or_else(|| panic!("no row {scenario}/{method}"))
}

fn mu_hat(r: &BenchRow) -> f64 {
    r.mu_hat.unwrap_or(f64::NEG_INFINITY)
}

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random plant, gain and Laplacian eigenvalue in the right half plane.
fn random_mode(rng: &mut ChaCha8Rng, max_n: usize) -> (Plant, Gain, Complex64) {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=n);
    let plant = Plant::new_unchecked(gauss(rng, n, n), gauss(rng, n, m)).unwrap();
    let gain = Gain::new(gauss(rng, m, n)).unwrap();
    let lambda = Complex64::new(rng.random_range(0.1..3.0), rng.random_range(-2.0..2.0));
    (plant, gain, lambda)
}

/// Shifts `A` so the closed-loop mode has spectral abscissa exactly `-r`.
fn hurwitz_mode(rng: &mut ChaCha8Rng, max_n: usize) -> (Plant, Gain, Complex64, f64) {
    let (p, k, lam) = random_mode(rng, max_n);
    let r = rng.random_range(0.05..2.0);
    let abscissa = spectral_abscissa(real_embedding(&p, &k, lam).unwrap().matrix()).unwrap();
    let a = p.a() - Mat::identity(p.n(), p.n()) * (abscissa + r);
    (Plant::new_unchecked(a, p.b().clone()).unwrap(), k, lam, r)
}

/// A rate that stays clear of the boundary `r` by more than ten margins.
fn rate_away_from(rng: &mut ChaCha8Rng, r: f64, eps: f64) -> f64 {
    loop {
        let mu = rng.random_range(0.0..2.0 * r);
        if (mu - r).abs() > 10.0 * eps {
            return mu;
        }
    }
}

fn feasible(out: &SdpOutcome) -> Option<bool> {
    match out.status {
        SdpStatus::Feasible => Some(true),
        SdpStatus::Infeasible => Some(false),
        SdpStatus::SolverFailure => None,
    }
}

/// Eigenvalue check written against the raw constraint data, independent of
/// the library's own verification routine. Returns the worst scaled slack.
fn independent_slack(prob: &SdpProblem, y: &[f64]) -> f64 {
    prob.constraints
        .iter()
        .map(|c| {
            let f = c.expr.eval(y);
            let sign = if c.sense == syncgain::lmi::Sense::Psd { 1.0 } else { -1.0 };
            let sym = (&f + f.transpose()) * (0.5 * sign);
            let min = SymmetricEigen::new(sym).eigenvalues.min();
            (min - prob.margin) / (1.0 + c.expr.constant_part().norm())
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn benchmark_gains_are_bounded_and_certified() {
    let b = bench();
    let mut bad = Vec::new();
    for r in &b.rows {
        let sc = b.cfg.scenarios().unwrap().into_iter().find(|s| s.id == r.scenario).unwrap();
        let ok = match (&r.gain, r.mu_hat, r.gain_norm) {
            (Some(k), Some(mu), Some(norm)) => {
                let s = spectrum_of(&sc.graph).unwrap();
                norm <= NORM_BOUND * (1.0 + NORM_RTOL)
                    && mu > 0.0
                    && check_mu_uges(&sc.plant, &s, k, 0.99 * mu, CheckMethod::Spectral).unwrap()
            }
            _ => false,
        };
        if !ok || r.failed() {
            bad.push(format!("{}/{} ({}, mu_hat {:?}, |K| {:?})", r.scenario, r.method, r.status, r.mu_hat, r.gain_norm));
        }
    }
    let ok = b.rows.len() == 50 && bad.is_empty() && b.elapsed < BENCH_BUDGET;
    report(
        "benchmark gains bounded and certified",
        ok,
        &format!("{} rows in {:.0}s, offending: {bad:?}", b.rows.len(), b.elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn iterative_traces_are_monotone_and_terminate() {
    let b = bench();
    let mut detail = Vec::new();
    let mut ok = true;
    for r in b.rows.iter().filter(|r| r.method == Method::Alg1) {
        let drops = r.mu_trace.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max);
        let iters = r.iters.unwrap_or(usize::MAX);
        let good = !r.failed() && drops <= MONOTONE_TOL && iters < ITERATION_CAP;
        ok &= good;
        detail.push(format!("{}: {iters} it, max drop {drops:.1e}", r.scenario));
    }
    report("iterative traces monotone, below iteration cap", ok, &detail.join("; "));
    assert!(ok);
}

fn match_multisets(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

#[test]
fn embedding_spectrum_is_mode_and_conjugate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, k, lam) = random_mode(&mut rng, 4);
        let mode = eigenvalues_complex(&closed_loop_mode(&p, &k, lam).unwrap().0).unwrap();
        let mut expected = mode.clone();
        expected.extend(mode.iter().map(|z| z.conj()));
        let embedded = eigenvalues(real_embedding(&p, &k, lam).unwrap().matrix()).unwrap();
        worst = worst.max(match_multisets(&expected, &embedded));
    }
    let ok = worst <= EIG_TOL;
    report("real embedding spectrum", ok, &format!("100 cases, worst mismatch {worst:.1e}"));
    assert!(ok);
}

#[test]
fn lyapunov_lmi_matches_spectral_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    let mut feasible_count = 0;
    for case in 0..50 {
        let (p, k, lam, r) = hurwitz_mode(&mut rng, 4);
        let aek = real_embedding(&p, &k, lam).unwrap();
        let mu = rate_away_from(&mut rng, r, margin_for(aek.matrix()));
        let spectral = spectral_abscissa(aek.matrix()).unwrap() < -mu;
        let lmi = feasible(&check_feasible(&assemble_lyap_check(&aek, mu).unwrap()));
        feasible_count += usize::from(spectral);
        if lmi != Some(spectral) {
            mismatches.push(format!("case {case}: n={} r={r:.3} mu={mu:.3} spectral={spectral} lmi={lmi:?}", p.n()));
        }
    }
    let ok = mismatches.is_empty();
    report(
        "Lyapunov LMI vs spectral test",
        ok,
        &format!("50 cases ({feasible_count} stable at mu), mismatches: {mismatches:?}"),
    );
    assert!(ok);
}

#[test]
fn free_multiplier_form_matches_q_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let (mut feasible_count, mut structured_count) = (0, 0);
    for case in 0..20 {
        let (p, k, lam, r) = hurwitz_mode(&mut rng, 2);
        let aek = real_embedding(&p, &k, lam).unwrap();
        let mu = rate_away_from(&mut rng, r, margin_for(aek.matrix()));
        let q = feasible(&check_feasible(&assemble_q_form(&aek, mu).unwrap()));
        let free = feasible(&check_feasible(&assemble_free_multipliers(&aek, mu).unwrap()));
        let n2 = 2 * p.n();
        let alpha = [0.01, 0.1, 1.0][case % 3];
        let z = Mat::identity(n2, n2);
        let w = Mat::identity(n2, n2) * alpha;
        let structured = feasible(&check_feasible(&assemble_structured_fixed_gain(&p, &k, lam, &z, &w, mu).unwrap()));
        feasible_count += usize::from(q == Some(true));
        structured_count += usize::from(structured == Some(true));
        if q.is_none() || q != free || (structured == Some(true) && q != Some(true)) || structured.is_none() {
            problems.push(format!("case {case}: q={q:?} free={free:?} structured={structured:?}"));
        }
    }
    let ok = problems.is_empty();
    report(
        "free multipliers vs Q-form, structured form sufficient",
        ok,
        &format!("20 cases, {feasible_count} feasible, {structured_count} structured feasible, problems: {problems:?}"),
    );
    assert!(ok);
}

fn random_synthesis(rng: &mut ChaCha8Rng) -> (SdpProblem, f64) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=n);
    let p = Plant::new_unchecked(gauss(rng, n, n), gauss(rng, n, m)).unwrap();
    let modes = rng.random_range(1..=2);
    let values = (0..modes)
        .map(|_| Complex64::new(rng.random_range(0.2..3.0), rng.random_range(-1.5..1.5)))
        .collect();
    let s = SpectrumSlice::from_values(values);
    let alpha = [0.01, 0.1, 1.0, 10.0][rng.random_range(0..4)];
    let kbar = rng.random_range(0.5..20.0);
    let mu = rng.random_range(0.0..2.0);
    let prob = assemble_synthesis(&p, &s, &MultiplierSet::initial(n, modes, alpha), mu, kbar).unwrap();
    (prob, kbar)
}

#[test]
fn synthesis_points_respect_gain_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut points, mut attempts, mut worst): (usize, usize, f64) = (0, 0, 0.0);
    let mut ok = true;
    while points < 100 && attempts < 2000 {
        attempts += 1;
        let (prob, kbar) = random_synthesis(&mut rng);
        let out = check_feasible(&prob);
        let Some(y) = out.assignment.filter(|_| out.status == SdpStatus::Feasible) else { continue };
        let x = prob.value_of("X", &y).unwrap();
        let yv = prob.value_of("Y", &y).unwrap();
        let k = &yv * x.try_inverse().expect("certified X is invertible");
        let ratio = matrix_2norm(&k) / kbar;
        worst = worst.max(ratio);
        ok &= ratio <= 1.0 + NORM_RTOL;
        points += 1;
    }
    ok &= points == 100;
    report(
        "synthesis gain bound",
        ok,
        &format!("{points} feasible points from {attempts} draws, worst |K|/kbar = {worst:.6}"),
    );
    assert!(ok);
}

#[test]
fn iterative_design_dominates_baselines_on_x29() {
    let b = bench();
    let mut ok = true;
    let mut detail = Vec::new();
    for sc in ["x29-circ10", "x29-cpx10"] {
        let alg1 = mu_hat(row(b, sc, Method::Alg1));
        let ric = row(b, sc, Method::Riccati);
        let direct = mu_hat(row(b, sc, Method::Direct));
        let norm = ric.gain_norm.unwrap_or(f64::NAN);
        let good = alg1 >= mu_hat(ric) && alg1 >= direct - ORDER_TOL && (19.98..=NORM_BOUND).contains(&norm);
        ok &= good;
        detail.push(format!(
            "{sc}: alg1 {alg1:.4}, riccati {:.4} (|K| {norm:.5}), direct {direct:.4}",
            mu_hat(ric)
        ));
    }
    report("iterative design vs baselines", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn box_corner_design_is_no_better_than_per_mode() {
    let b = bench();
    let mut ok = true;
    let mut detail = Vec::new();
    for plant in ["osc", "x29"] {
        for graph in ["cpx5", "cpx10"] {
            let sc = format!("{plant}-{graph}");
            let l = mu_hat(row(b, &sc, Method::Listmann));
            let a = mu_hat(row(b, &sc, Method::Aek));
            ok &= l <= a + ORDER_TOL;
            detail.push(format!("{sc}: listmann {l:.5} aek {a:.5}"));
        }
    }
    report("box-corner vs per-mode common Q", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn simulated_decay_matches_spectral_rate() {
    let b = bench();
    let mut bad = Vec::new();
    let mut count = 0;
    for sc in b.cfg.scenarios().unwrap() {
        let l = sc.graph.laplacian();
        let x0 = initial_state(sc.graph.n_agents(), sc.plant.n(), b.cfg.seed);
        for r in b.rows.iter().filter(|r| r.scenario == sc.id) {
            let (Some(k), Some(mu)) = (&r.gain, r.mu_hat) else {
                bad.push(format!("{}/{}: no gain", r.scenario, r.method));
                continue;
            };
            count += 1;
            let horizon = b.cfg.horizon_for(&sc.plant_name, Some(mu));
            let traj = integrate(&x0, &sc.plant, k, &l, horizon, b.cfg.step).unwrap();
            let fit = fit_decay(&traj, sim::DEFAULT_WINDOW_FRACTION).unwrap();
            let envelope = (-ENVELOPE_RATE * mu * horizon).exp() + ENVELOPE_SLACK;
            let in_band = fit.rate >= FIT_BAND.0 * mu && fit.rate <= FIT_BAND.1 * mu;
            if !in_band || traj.final_ratio() > envelope {
                bad.push(format!(
                    "{}/{}: fit {:.4} vs mu_hat {mu:.4}, ratio {:.2e} vs {envelope:.2e}",
                    r.scenario,
                    r.method,
                    fit.rate,
                    traj.final_ratio()
                ));
            }
        }
    }
    let ok = bad.is_empty() && count == b.rows.len();
    report("simulated decay vs spectral rate", ok, &format!("{count} trajectories, offending: {bad:?}"));
    assert!(ok);
}

#[test]
fn feasible_outcomes_reverify_and_faults_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut problems: Vec<SdpProblem> = Vec::new();
    for i in 0..40 {
        let (p, k, lam, r) = hurwitz_mode(&mut rng, 3);
        let aek = real_embedding(&p, &k, lam).unwrap();
        let mu = rate_away_from(&mut rng, r, margin_for(aek.matrix()));
        problems.push(match i % 3 {
            0 => assemble_lyap_check(&aek, mu).unwrap(),
            1 => assemble_q_form(&aek, mu).unwrap(),
            _ => assemble_free_multipliers(&aek, mu).unwrap(),
        });
    }
    problems.extend((0..40).map(|_| random_synthesis(&mut rng).0));

    let (mut feasible_count, mut perturbed_checks) = (0, 0);
    let mut problems_found = Vec::new();
    for (i, prob) in problems.iter().enumerate() {
        let out = check_feasible(prob);
        let Some(y) = out.assignment.as_ref().filter(|_| out.is_feasible()) else { continue };
        feasible_count += 1;
        if independent_slack(prob, y) < -VERIFY_RTOL {
            problems_found.push(format!("problem {i}: Feasible point fails eigenvalue check"));
        }
        // Flipping the sign violates every homogeneous definiteness constraint.
        let flipped: Vec<f64> = y.iter().map(|v| -v).collect();
        if prob.verify(&flipped) {
            problems_found.push(format!("problem {i}: negated assignment accepted"));
        }
        // A large kick on one coordinate: the library verdict must agree with
        // the independent check whenever the latter is not borderline.
        let mut kicked = y.clone();
        let j = rng.random_range(0..kicked.len());
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        kicked[j] += if rng.random_bool(0.5) { 1e3 } else { -1e3 } * scale;
        let slack = independent_slack(prob, &kicked);
        if slack.abs() > 1e-6 {
            perturbed_checks += 1;
            if prob.verify(&kicked) != (slack >= 0.0) {
                problems_found.push(format!("problem {i}: perturbed verdict disagrees (slack {slack:.2e})"));
            }
        }
    }
    let ok = problems_found.is_empty() && feasible_count > 0;
    report(
        "feasible outcomes re-verify, injected faults rejected",
        ok,
        &format!(
            "{} problems, {feasible_count} feasible, {perturbed_checks} perturbed verdicts compared, issues: {problems_found:?}",
            problems.len()
        ),
    );
    assert!(ok);
}
