//! Weighted directed communication graphs and their Laplacian spectra.
//!
//! Edge convention: `weights[(i, j)] > 0` means agent `i` receives the state
//! of agent `j` and uses it in its control law.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Mat};

pub const DEFAULT_DEDUP_TOLERANCE: f64 = 1e-6;

/// Names of the built-in benchmark topologies.
pub const PRESETS: [&str; 5] = ["circ4", "circ10", "cpx5", "cpx10", "star10"];

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    weights: Mat,
}

/// JSON form: `{"n": N, "edges": [[i, j, w], ...]}` with 1-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedDigraph {
    pub fn new(weights: Mat) -> Result<Self> {
        let n = weights.nrows();
        if !weights.is_square() {
            return Err(Error::InvalidGraph("weight matrix must be square".into()));
        }
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 agents, got {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!("weight ({i}, {j}) = {w} is not a nonnegative number")));
                }
                if i == j && w != 0.0 {
                    return Err(Error::InvalidGraph(format!("self-loop on agent {}", i + 1)));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Builds a graph from 1-based `(receiver, sender, weight)` triples.
    /// Repeated pairs accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Mat::zeros(n, n);
        for &(i, j, wt) in edges {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range 1..={n}")));
            }
            w[(i - 1, j - 1)] += wt;
        }
        Self::new(w)
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        Self::from_edges(json.n, &json.edges)
    }

    pub fn to_json(&self) -> GraphJson {
        let n = self.n_agents();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if w != 0.0 {
                    edges.push((i + 1, j + 1, w));
                }
            }
        }
        GraphJson { n, edges }
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn laplacian(&self) -> Laplacian {
        laplacian(self)
    }

    /// True iff some agent's information reaches every other agent along
    /// nonzero-weight edges (a spanning tree rooted at that agent), which is
    /// equivalent to a simple zero Laplacian eigenvalue.
    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }

    /// Built-in benchmark topology. All presets use unit weights.
    ///
    /// * `circ4`, `circ10`: directed cycles, agent i listens to agent i-1.
    /// * `cpx5`: directed 5-cycle plus chord 1 -> 3.
    /// * `cpx10`: directed 10-cycle plus chords 1 -> 4 and 6 -> 9.
    /// * `star10`: bidirectional star with agent 1 as hub.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "circ4" => Ok(Self::cycle(4)),
            "circ10" => Ok(Self::cycle(10)),
            "cpx5" => Self::cycle_with_chords(5, &[(1, 3)]),
            "cpx10" => Self::cycle_with_chords(10, &[(1, 4), (6, 9)]),
            "star10" => {
                let mut edges = Vec::new();
                for leaf in 2..=10 {
                    edges.push((1, leaf, 1.0));
                    edges.push((leaf, 1, 1.0));
                }
                Self::from_edges(10, &edges)
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// Unit-weight directed cycle, agent i listens to agent i-1.
    pub fn cycle(n: usize) -> Self {
        let mut w = Mat::zeros(n, n);
        for i in 0..n {
            w[(i, (i + n - 1) % n)] = 1.0;
        }
        Self::new(w).expect("cycle is a valid graph")
    }

    /// Directed cycle plus unit chords `from -> to` (1-based).
    fn cycle_with_chords(n: usize, chords: &[(usize, usize)]) -> Result<Self> {
        let mut w = Self::cycle(n).weights;
        for &(from, to) in chords {
            w[(to - 1, from - 1)] = 1.0;
        }
        Self::new(w)
    }
}

/// `L = diag(W 1) - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(pub Mat);

impl Laplacian {
    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn n_agents(&self) -> usize {
        self.0.nrows()
    }
}

pub fn laplacian(g: &WeightedDigraph) -> Laplacian {
    let n = g.n_agents();
    let mut l = -g.weights.clone();
    for i in 0..n {
        l[(i, i)] = g.weights.row(i).sum();
    }
    Laplacian(l)
}

/// Distinct nonzero Laplacian eigenvalues, one representative per conjugate
/// pair (`Im >= 0`), sorted by real part then by `|Im|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSlice {
    eigenvalues: Vec<Complex64>,
    dedup_tolerance: f64,
}

impl SpectrumSlice {
    /// Wraps an explicit list of values without any checks. Used for
    /// baselines that impose conditions at values off the spectrum.
    pub fn from_values(values: Vec<Complex64>) -> Self {
        Self { eigenvalues: values, dedup_tolerance: DEFAULT_DEDUP_TOLERANCE }
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dedup_tolerance(&self) -> f64 {
        self.dedup_tolerance
    }

    /// Largest modulus over the stored values.
    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }
}

pub fn nonzero_spectrum(l: &Laplacian, dedup_tolerance: f64) -> Result<SpectrumSlice> {
    if !(dedup_tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("dedup tolerance must be positive, got {dedup_tolerance}")));
    }
    let all = eigenvalues(l.matrix())?;
    let zeros = all.iter().filter(|z| z.norm() < dedup_tolerance).count();
    if zeros != 1 {
        return Err(Error::MultipleZeroEigenvalues(zeros));
    }
    let mut reps: Vec<Complex64> = all
        .into_iter()
        .filter(|z| z.norm() >= dedup_tolerance)
        .map(|z| {
            let im = if z.im.abs() < dedup_tolerance { 0.0 } else { z.im.abs() };
            Complex64::new(z.re, im)
        })
        .collect();
    reps.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.abs().total_cmp(&b.im.abs())));
    let mut kept: Vec<Complex64> = Vec::with_capacity(reps.len());
    for z in reps {
        if kept.iter().all(|k| (k - z).norm() >= dedup_tolerance) {
            kept.push(z);
        }
    }
    Ok(SpectrumSlice { eigenvalues: kept, dedup_tolerance })
}

pub fn is_connected(g: &WeightedDigraph) -> bool {
    let n = g.n_agents();
    // Information flows j -> i whenever weights[(i, j)] > 0.
    let out: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| g.weights[(i, j)] > 0.0).collect())
        .collect();
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut count = 1;
        while let Some(j) = queue.pop_front() {
            for &i in &out[j] {
                if !seen[i] {
                    seen[i] = true;
                    count += 1;
                    queue.push_back(i);
                }
            }
        }
        count == n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn laplacian_examples() {
        let pair = WeightedDigraph::new(Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(pair.laplacian().0, Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let l = WeightedDigraph::cycle(4).laplacian().0;
        #[rustfmt::skip]
        let circulant = Mat::from_row_slice(4, 4, &[
             1.0,  0.0,  0.0, -1.0,
            -1.0,  1.0,  0.0,  0.0,
             0.0, -1.0,  1.0,  0.0,
             0.0,  0.0, -1.0,  1.0,
        ]);
        assert_eq!(l, circulant);

        let empty = WeightedDigraph::new(Mat::zeros(3, 3)).unwrap();
        assert_eq!(empty.laplacian().0, Mat::zeros(3, 3));
    }

    #[test]
    fn invalid_graphs() {
        assert!(WeightedDigraph::new(Mat::zeros(1, 1)).is_err());
        assert!(WeightedDigraph::new(Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).is_err());
        assert!(WeightedDigraph::new(Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).is_err());
        assert!(WeightedDigraph::from_edges(3, &[(0, 1, 1.0)]).is_err());
        assert!(matches!(WeightedDigraph::preset("ring7"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn spectrum_examples() {
        let pair = WeightedDigraph::from_edges(2, &[(1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        let s = nonzero_spectrum(&pair.laplacian(), DEFAULT_DEDUP_TOLERANCE).unwrap();
        assert!(close(s.eigenvalues(), &[c(2.0, 0.0)], 1e-12));

        // Circulant: 1 - exp(-j pi k / 2) = {0, 1 - j, 2, 1 + j}.
        let s = nonzero_spectrum(&WeightedDigraph::cycle(4).laplacian(), 1e-6).unwrap();
        assert!(close(s.eigenvalues(), &[c(1.0, 1.0), c(2.0, 0.0)], 1e-10));

        let k3 = WeightedDigraph::new(Mat::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let s = nonzero_spectrum(&k3.laplacian(), 1e-6).unwrap();
        assert!(close(s.eigenvalues(), &[c(3.0, 0.0)], 1e-10));
    }

    #[test]
    fn disconnected_spectrum_errors() {
        let two = WeightedDigraph::from_edges(4, &[(1, 2, 1.0), (2, 1, 1.0), (3, 4, 1.0), (4, 3, 1.0)]).unwrap();
        assert!(!two.is_connected());
        assert!(matches!(
            nonzero_spectrum(&two.laplacian(), 1e-6),
            Err(Error::MultipleZeroEigenvalues(2))
        ));
    }

    #[test]
    fn connectivity_examples() {
        assert!(WeightedDigraph::cycle(4).is_connected());
        let inward: Vec<_> = (2..=5).map(|leaf| (1, leaf, 1.0)).collect();
        assert!(!WeightedDigraph::from_edges(5, &inward).unwrap().is_connected());
        let outward: Vec<_> = (2..=5).map(|leaf| (leaf, 1, 1.0)).collect();
        assert!(WeightedDigraph::from_edges(5, &outward).unwrap().is_connected());
    }

    #[test]
    fn presets_have_expected_spectra() {
        let s = nonzero_spectrum(&WeightedDigraph::preset("circ4").unwrap().laplacian(), 1e-6).unwrap();
        assert!(close(s.eigenvalues(), &[c(1.0, 1.0), c(2.0, 0.0)], 1e-10));
        let s = nonzero_spectrum(&WeightedDigraph::preset("star10").unwrap().laplacian(), 1e-6).unwrap();
        assert!(close(s.eigenvalues(), &[c(1.0, 0.0), c(10.0, 0.0)], 1e-10));
        for name in ["cpx5", "cpx10"] {
            let s = nonzero_spectrum(&WeightedDigraph::preset(name).unwrap().laplacian(), 1e-6).unwrap();
            assert!(s.eigenvalues().iter().any(|z| z.im > 1e-3), "{name} has no complex pair");
        }
    }

    #[test]
    fn preset_spectrum_properties() {
        for name in PRESETS {
            let g = WeightedDigraph::preset(name).unwrap();
            assert!(g.is_connected());
            let l = g.laplacian();
            let row_sum = (l.matrix() * nalgebra::DVector::from_element(g.n_agents(), 1.0)).amax();
            assert!(row_sum <= 1e-12 * l.matrix().norm());
            let s1 = nonzero_spectrum(&l, 1e-6).unwrap();
            let s2 = nonzero_spectrum(&l, 1e-6).unwrap();
            assert_eq!(s1, s2);
            assert!(!s1.is_empty());
            let all = eigenvalues(l.matrix()).unwrap();
            for z in s1.eigenvalues() {
                assert!(z.re > 0.0 && z.im >= 0.0);
                if z.im != 0.0 {
                    assert!(all.iter().any(|w| (w - z.conj()).norm() < 1e-8));
                }
            }
            for w in s1.eigenvalues().windows(2) {
                assert!(w[0].re <= w[1].re);
                assert!((w[0] - w[1]).norm() >= 1e-6);
            }
        }
    }

    #[test]
    fn structural_connectivity_matches_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut both = [0usize; 2];
        for _ in 0..100 {
            let n = rng.random_range(2..=8);
            let density = rng.random_range(0.05..0.6);
            let w = Mat::from_fn(n, n, |i, j| {
                if i != j && rng.random_bool(density) {
                    rng.random_range(0.5..2.0)
                } else {
                    0.0
                }
            });
            let g = WeightedDigraph::new(w).unwrap();
            let zeros = eigenvalues(g.laplacian().matrix())
                .unwrap()
                .iter()
                .filter(|z| z.norm() < 1e-6)
                .count();
            assert_eq!(g.is_connected(), zeros == 1);
            both[g.is_connected() as usize] += 1;
        }
        assert!(both[0] > 0 && both[1] > 0);
    }

    #[test]
    fn json_round_trip() {
        let g = WeightedDigraph::preset("cpx5").unwrap();
        let text = serde_json::to_string(&g.to_json()).unwrap();
        let back: GraphJson = serde_json::from_str(&text).unwrap();
        assert_eq!(WeightedDigraph::from_json(&back).unwrap(), g);
        let parsed: GraphJson = serde_json::from_str(r#"{"n": 2, "edges": [[1, 2, 0.5]]}"#).unwrap();
        assert_eq!(WeightedDigraph::from_json(&parsed).unwrap().weights()[(0, 1)], 0.5);
    }
}
