//! Closed-loop network simulation and distance to the synchronization set.
//!
//! The network state is split as `x = 1 ⊗ c + e`, where `c = (w^T ⊗ I) x`
//! uses the left null vector `w` of the Laplacian (`w^T L = 0`, `w^T 1 = 1`).
//! The consensus part obeys `c' = A c` and the disagreement part `e` obeys the
//! full network field while staying in `ker(w^T ⊗ I)`. Distances are taken
//! from `e` alone, so they stay accurate long after the disagreement has
//! decayed below the rounding level of a growing consensus trajectory.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg::{Gain, Mat, Plant};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
/// Networks up to this many scalar states use the assembled Kronecker matrix.
pub const KRONECKER_LIMIT: usize = 64;
/// Distances are floored here before taking logarithms.
pub const DISTANCE_FLOOR: f64 = f64::MIN_POSITIVE;

/// Horizon used for a plant preset: 10 for `x29`, 20 otherwise.
pub fn default_horizon(plant: &str) -> f64 {
    if plant == "x29" {
        10.0
    } else {
        20.0
    }
}

/// Dominant-mode decay (in units of `mu_hat * T`) a horizon must cover so
/// the tail window sees the slowest mode rather than faster transients.
pub const SETTLING_DECAY: f64 = 10.0;

/// The plant's default horizon, stretched to `SETTLING_DECAY / mu_hat` for
/// slow gains. Nonpositive or unknown rates keep the default.
pub fn horizon_for_rate(plant: &str, mu_hat: Option<f64>) -> f64 {
    let base = default_horizon(plant);
    match mu_hat {
        Some(mu) if mu > 0.0 && mu.is_finite() => base.max(SETTLING_DECAY / mu),
        _ => base,
    }
}

/// Linear network field `x' = (I_N ⊗ A - L ⊗ BK) x`.
#[derive(Debug, Clone)]
pub enum ClosedLoop {
    Kronecker(Mat),
    Blocks { a: Mat, bk: Mat, l: Mat },
}

impl ClosedLoop {
    pub fn new(p: &Plant, k: &Gain, l: &Laplacian) -> Result<Self> {
        if k.matrix().shape() != (p.m(), p.n()) {
            return Err(Error::DimensionMismatch(format!(
                "gain is {:?}, plant needs {}x{}",
                k.matrix().shape(),
                p.m(),
                p.n()
            )));
        }
        let bk = p.b() * k.matrix();
        let l = l.matrix().clone();
        let agents = l.nrows();
        Ok(if agents * p.n() <= KRONECKER_LIMIT {
            Self::Kronecker(Mat::identity(agents, agents).kronecker(p.a()) - l.kronecker(&bk))
        } else {
            Self::Blocks { a: p.a().clone(), bk, l }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Kronecker(m) => m.nrows(),
            Self::Blocks { a, l, .. } => a.nrows() * l.nrows(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("state has {} entries, expected {}", x.len(), self.dim())));
        }
        Ok(match self {
            Self::Kronecker(m) => m * x,
            Self::Blocks { a, bk, l } => {
                // Column i of X is agent i: X' = A X - BK X L^T.
                let n = a.nrows();
                let xs = DMatrix::from_column_slice(n, l.nrows(), x.as_slice());
                let dx = a * &xs - bk * (&xs * l.transpose());
                DVector::from_column_slice(dx.as_slice())
            }
        })
    }
}

pub fn closed_loop_field(x: &DVector<f64>, p: &Plant, k: &Gain, l: &Laplacian) -> Result<DVector<f64>> {
    ClosedLoop::new(p, k, l)?.apply(x)
}

/// `|x|_A = ||x - 1_N ⊗ mean_i(x_i)||_2`.
pub fn dist_to_sync(x: &[f64], agents: usize, n: usize) -> Result<f64> {
    if agents == 0 || n == 0 || x.len() != agents * n {
        return Err(Error::DimensionMismatch(format!("state has {} entries, expected {agents}x{n}", x.len())));
    }
    let mut mean = vec![0.0; n];
    for agent in x.chunks(n) {
        mean.iter_mut().zip(agent).for_each(|(m, v)| *m += v / agents as f64);
    }
    let sq: f64 = x.chunks(n).flat_map(|agent| agent.iter().zip(&mean).map(|(v, m)| (v - m).powi(2))).sum();
    Ok(sq.sqrt())
}

/// Standard-normal initial state, one draw per scalar coordinate.
pub fn initial_state(agents: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..agents * n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agents: usize,
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_ratio(&self) -> f64 {
        match (self.distances.first(), self.distances.last()) {
            (Some(&d0), Some(&d1)) if d0 > 0.0 => d1 / d0,
            _ => 0.0,
        }
    }

    /// CSV with header `t,dist`, plus `x{agent}_{coord}` columns when
    /// `with_states` is set.
    pub fn write_csv<W: Write>(&self, out: W, with_states: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "dist".to_string()];
        if with_states {
            for i in 0..self.agents {
                header.extend((0..self.n).map(|j| format!("x{i}_{j}")));
            }
        }
        w.write_record(&header)?;
        for (idx, (&t, &d)) in self.times.iter().zip(&self.distances).enumerate() {
            let mut row = vec![t.to_string(), d.to_string()];
            if with_states {
                row.extend(self.states[idx].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, with_states: bool) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, with_states)
    }
}

/// Normalized left null vector of `L`, if the zero eigenvalue is simple.
fn consensus_weights(l: &Mat) -> Option<DVector<f64>> {
    let svd = l.transpose().svd(false, true);
    let vt = svd.v_t?;
    let (idx, &smallest) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let second = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    let scale = 1.0 + l.norm();
    if smallest > 1e-10 * scale || second <= 1e-8 * scale {
        return None;
    }
    let w = vt.row(idx).transpose();
    let sum = w.sum();
    (sum.abs() > 1e-12).then(|| w / sum)
}

fn rk4(f: impl Fn(&DVector<f64>) -> Result<DVector<f64>>, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (h / 2.0)))?;
    let k3 = f(&(x + &k2 * (h / 2.0)))?;
    let k4 = f(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Classical fixed-step RK4 over `[0, horizon]` with `round(horizon / h)`
/// steps; a zero horizon gives the initial sample only.
pub fn integrate(x0: &[f64], p: &Plant, k: &Gain, l: &Laplacian, horizon: f64, h: f64) -> Result<Trajectory> {
    if !(h > 0.0 && h.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need h > 0 and T >= 0, got h = {h}, T = {horizon}")));
    }
    let field = ClosedLoop::new(p, k, l)?;
    let (agents, n) = (l.n_agents(), p.n());
    if x0.len() != agents * n {
        return Err(Error::DimensionMismatch(format!("initial state has {} entries, expected {}", x0.len(), agents * n)));
    }
    let x0 = DVector::from_column_slice(x0);

    // Consensus / disagreement split; without a simple zero eigenvalue the
    // whole state is treated as disagreement.
    let (mut c, mut e) = match consensus_weights(l.matrix()) {
        Some(w) => {
            let xs = DMatrix::from_column_slice(n, agents, x0.as_slice());
            let c = &xs * &w;
            let e = DVector::from_iterator(agents * n, (0..agents).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| xs[(j, i)] - c[j]));
            (c, e)
        }
        None => (DVector::zeros(n), x0),
    };

    let steps = (horizon / h).round() as usize;
    let mut traj = Trajectory {
        agents,
        n,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        distances: Vec::with_capacity(steps + 1),
    };
    let a = p.a();
    for step in 0..=steps {
        let t = step as f64 * h;
        if step > 0 {
            c = rk4(|v| Ok(a * v), &c, h)?;
            e = rk4(|v| field.apply(v), &e, h)?;
        }
        if !c.iter().chain(e.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState(t));
        }
        let x: Vec<f64> = e.iter().enumerate().map(|(idx, v)| v + c[idx % n]).collect();
        traj.distances.push(dist_to_sync(e.as_slice(), agents, n)?);
        traj.states.push(x);
        traj.times.push(t);
    }
    Ok(traj)
}

/// Least-squares fit of `log dist(t) = log(M dist(0)) - rate t` on a tail window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Overshoot constant relative to `dist(0)` (absolute when `dist(0) = 0`).
    pub m: f64,
    pub rate: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the log fit.
    pub residual: f64,
}

pub fn fit_decay(traj: &Trajectory, window_fraction: f64) -> Result<DecayFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::DegenerateWindow(format!("window fraction {window_fraction} not in (0, 1]")));
    }
    let (Some(&t0), Some(&t1)) = (traj.times.first(), traj.times.last()) else {
        return Err(Error::DegenerateWindow("empty trajectory".into()));
    };
    let start = t1 - window_fraction * (t1 - t0);
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.distances)
        .filter(|(&t, _)| t >= start - 1e-12 * (1.0 + t1.abs()))
        .map(|(&t, &d)| (t, d.max(DISTANCE_FLOOR).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateWindow(format!("{} samples in window", pts.len())));
    }
    let k = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if stt <= 0.0 {
        return Err(Error::DegenerateWindow("window has zero width".into()));
    }
    let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>() / stt;
    let intercept = ym - slope * tm;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    let d0 = traj.distances[0];
    let m = if d0 > 0.0 { (intercept - d0.ln()).exp() } else { intercept.exp() };
    Ok(DecayFit { m, rate: -slope, window: (pts[0].0, t1), residual })
}
