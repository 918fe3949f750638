//! Benchmark orchestration: scenario configs, the method grid, CSV tables
//! and trajectory files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphJson, WeightedDigraph, PRESETS};
use crate::linalg::{Gain, Mat, Plant};
use crate::sim::{self, DecayFit};
use crate::synth::{design, spectrum_of, AlgorithmConfig, Method, StepKind};
use crate::verify::estimate_rate;

pub const SEED_ENV: &str = "SYNC_SEED";

/// A plant given by preset name or by inline row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Preset(String),
    Inline { name: String, a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} must be a nonempty rectangular list of rows")));
    }
    Ok(Mat::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PlantSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Preset(n) | Self::Inline { name: n, .. } => n,
        }
    }

    pub fn resolve(&self) -> Result<Plant> {
        match self {
            Self::Preset(n) => Plant::preset(n),
            Self::Inline { a, b, .. } => Plant::new(rows_to_mat(a, "A")?, rows_to_mat(b, "B")?),
        }
    }

    pub fn inline(name: &str, p: &Plant) -> Self {
        Self::Inline { name: name.to_string(), a: mat_to_rows(p.a()), b: mat_to_rows(p.b()) }
    }
}

/// A graph given by preset name or inline as `{"name", "n", "edges"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Preset(String),
    Inline {
        name: String,
        #[serde(flatten)]
        graph: GraphJson,
    },
}

impl GraphSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Preset(n) | Self::Inline { name: n, .. } => n,
        }
    }

    pub fn resolve(&self) -> Result<WeightedDigraph> {
        match self {
            Self::Preset(n) => WeightedDigraph::preset(n),
            Self::Inline { graph, .. } => WeightedDigraph::from_json(graph),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plants: Vec<PlantSpec>,
    pub graphs: Vec<GraphSpec>,
    pub methods: Vec<Method>,
    pub kbar: f64,
    pub tolerance: f64,
    pub alpha_grid: Vec<f64>,
    pub mu_tol: f64,
    pub mu_cap: Option<f64>,
    pub max_iter: usize,
    /// Simulation horizon; when unset, the plant default stretched for slow gains.
    pub horizon: Option<f64>,
    pub step: f64,
    pub seed: u64,
    /// Record wall times. Disable for byte-identical tables across runs.
    pub timing: bool,
    /// Include per-agent state columns in trajectory files.
    pub states: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let alg = AlgorithmConfig::default();
        Self {
            plants: vec![PlantSpec::Preset("osc".into()), PlantSpec::Preset("x29".into())],
            graphs: PRESETS.iter().map(|g| GraphSpec::Preset(g.to_string())).collect(),
            methods: Method::ALL.to_vec(),
            kbar: alg.kbar,
            tolerance: alg.tolerance,
            alpha_grid: alg.alpha_grid,
            mu_tol: alg.mu_tol,
            mu_cap: alg.mu_cap,
            max_iter: alg.max_iter,
            horizon: None,
            step: sim::DEFAULT_STEP,
            seed: sim::DEFAULT_SEED,
            timing: true,
            states: false,
        }
    }
}

/// One plant/graph pair.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub plant_name: String,
    pub plant: Plant,
    pub graph: WeightedDigraph,
}

impl ScenarioConfig {
    /// Parses and validates a JSON config. Every failure is a config error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an integer")))?;
        }
        Ok(())
    }

    pub fn algorithm(&self) -> AlgorithmConfig {
        AlgorithmConfig {
            kbar: self.kbar,
            tolerance: self.tolerance,
            alpha_grid: self.alpha_grid.clone(),
            mu_tol: self.mu_tol,
            mu_cap: self.mu_cap,
            max_iter: self.max_iter,
            ..AlgorithmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm().validate()?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if self.horizon.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::Config("horizon must be finite and nonnegative".into()));
        }
        self.scenarios().map(|_| ())
    }

    /// Resolves every plant/graph pair, plants outermost.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let config = |e: Error| Error::Config(e.to_string());
        let mut out = Vec::new();
        for ps in &self.plants {
            let plant = ps.resolve().map_err(config)?;
            for gs in &self.graphs {
                let graph = gs.resolve().map_err(config)?;
                out.push(Scenario {
                    id: format!("{}-{}", ps.name(), gs.name()),
                    plant_name: ps.name().to_string(),
                    plant: plant.clone(),
                    graph,
                });
            }
        }
        Ok(out)
    }

    /// Configured horizon, or the plant default stretched for slow rates.
    pub fn horizon_for(&self, plant_name: &str, mu_hat: Option<f64>) -> f64 {
        self.horizon.unwrap_or_else(|| sim::horizon_for_rate(plant_name, mu_hat))
    }
}

/// One table line. `mu_hat` and `gain_norm` are recomputed from the gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub method: Method,
    pub mu_hat: Option<f64>,
    pub gain_norm: Option<f64>,
    pub time_s: Option<f64>,
    pub iters: Option<usize>,
    /// `ok`, `degraded` (stopped early on a solver failure, last verified
    /// gain kept) or `failed: <reason>`.
    pub status: String,
    #[serde(skip)]
    pub gain: Option<Gain>,
    /// Rate trace of iterative methods.
    #[serde(skip)]
    pub mu_trace: Vec<(StepKind, f64)>,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }
}

fn run_cell(sc: &Scenario, method: Method, alg: &AlgorithmConfig, timing: bool) -> BenchRow {
    let t0 = Instant::now();
    let outcome = design(method, &sc.plant, &sc.graph, alg).and_then(|r| {
        let s = spectrum_of(&sc.graph)?;
        let rate = estimate_rate(&sc.plant, &s, &r.gain)?;
        Ok((r, rate.mu_hat))
    });
    let time_s = timing.then(|| t0.elapsed().as_secs_f64());
    let mut row = BenchRow {
        scenario: sc.id.clone(),
        method,
        mu_hat: None,
        gain_norm: None,
        time_s,
        iters: None,
        status: String::new(),
        gain: None,
        mu_trace: Vec::new(),
    };
    match outcome {
        Ok((r, mu_hat)) => {
            row.mu_hat = Some(mu_hat);
            row.gain_norm = Some(r.gain.norm2());
            row.iters = (method == Method::Alg1).then_some(r.iterations);
            row.status = if r.degraded { "degraded" } else { "ok" }.into();
            row.gain = Some(r.gain);
            row.mu_trace = r.mu_trace;
        }
        Err(e) => row.status = format!("failed: {e}"),
    }
    row
}

/// Every (scenario, method) cell; failures become rows. Rows come back in
/// config order, scenario first.
pub fn run_benchmark(cfg: &ScenarioConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let alg = cfg.algorithm();
    let scenarios = cfg.scenarios()?;
    let cells: Vec<(usize, usize)> =
        (0..scenarios.len()).flat_map(|i| (0..cfg.methods.len()).map(move |j| (i, j))).collect();
    let mut rows: Vec<((usize, usize), BenchRow)> = cells
        .par_iter()
        .map(|&(i, j)| ((i, j), run_cell(&scenarios[i], cfg.methods[j], &alg, cfg.timing)))
        .collect();
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub const TABLE_HEADER: &str = "scenario,method,mu_hat,gain_norm,time_s,iters,status";

pub fn write_table<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TABLE_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_table(rows: &[BenchRow], path: &Path) -> Result<()> {
    write_table(rows, std::fs::File::create(path)?)
}

pub fn read_table(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// A trajectory file written by [`emit_trajectories`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub scenario: String,
    pub method: Method,
    pub path: PathBuf,
    pub initial_distance: f64,
    pub final_ratio: f64,
    /// Tail fit; absent for single-sample trajectories.
    pub fit: Option<DecayFit>,
}

/// Simulates every row that carries a gain and writes
/// `<prefix><scenario>_<method>.csv`. All methods of a scenario share the
/// same initial state.
pub fn emit_trajectories(cfg: &ScenarioConfig, rows: &[BenchRow], prefix: &Path) -> Result<Vec<TrajectoryFile>> {
    let scenarios = cfg.scenarios()?;
    let mut out = Vec::new();
    for sc in &scenarios {
        let l = sc.graph.laplacian();
        let x0 = sim::initial_state(sc.graph.n_agents(), sc.plant.n(), cfg.seed);
        for row in rows.iter().filter(|r| r.scenario == sc.id) {
            let Some(gain) = &row.gain else { continue };
            let horizon = cfg.horizon_for(&sc.plant_name, row.mu_hat);
            let traj = sim::integrate(&x0, &sc.plant, gain, &l, horizon, cfg.step)?;
            let path = PathBuf::from(format!("{}{}_{}.csv", prefix.display(), sc.id, row.method));
            traj.save_csv(&path, cfg.states)?;
            out.push(TrajectoryFile {
                scenario: sc.id.clone(),
                method: row.method,
                path,
                initial_distance: traj.distances[0],
                final_ratio: traj.final_ratio(),
                fit: (traj.len() > 1).then(|| sim::fit_decay(&traj, sim::DEFAULT_WINDOW_FRACTION)).transpose()?,
            });
        }
    }
    Ok(out)
}

/// Gain file: `{"m", "n", "K": row-major}`, optionally with the plant and
/// graph it was designed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainFile {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
}

impl GainFile {
    pub fn new(gain: &Gain) -> Self {
        let k = gain.matrix();
        Self { m: k.nrows(), n: k.ncols(), k: k.transpose().as_slice().to_vec(), plant: None, graph: None }
    }

    pub fn gain(&self) -> Result<Gain> {
        if self.k.len() != self.m * self.n || self.m == 0 || self.n == 0 {
            return Err(Error::Config(format!("gain file has {} entries for a {}x{} matrix", self.k.len(), self.m, self.n)));
        }
        Gain::new(Mat::from_row_slice(self.m, self.n, &self.k)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> ScenarioConfig {
        ScenarioConfig {
            plants: vec![PlantSpec::Preset("osc".into())],
            graphs: vec![GraphSpec::Preset("circ4".into())],
            methods,
            timing: false,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.scenarios().unwrap().len(), 10);
        assert_eq!(cfg.kbar, 20.0);
        assert_eq!(cfg.tolerance, 1e-3);

        for bad in [
            r#"{"plants": ["nope"]}"#,
            r#"{"methods": ["e"]}"#,
            r#"{"kbar": -1}"#,
            r#"{"unknown_key": 1}"#,
            r#"{"graphs": [{"name": "g", "n": 2, "edges": [[1, 3, 1.0]]}]}"#,
            "not json",
        ] {
            assert!(matches!(ScenarioConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn inline_specs_parse() {
        let cfg = ScenarioConfig::from_json(
            r#"{"plants": [{"name": "dbl", "a": [[0, 1], [0, 0]], "b": [[0], [1]]}],
                "graphs": [{"name": "pair", "n": 2, "edges": [[1, 2, 1.0], [2, 1, 1.0]]}],
                "methods": ["riccati"]}"#,
        )
        .unwrap();
        let sc = cfg.scenarios().unwrap();
        assert_eq!(sc[0].id, "dbl-pair");
        assert_eq!(sc[0].plant.a()[(0, 1)], 1.0);
        assert_eq!(cfg.horizon_for("dbl", None), 20.0);
        assert_eq!(cfg.horizon_for("x29", Some(2.0)), 10.0);
        assert_eq!(cfg.horizon_for("x29", Some(0.1)), 100.0);
    }

    #[test]
    fn empty_method_list_gives_no_rows() {
        assert!(run_benchmark(&small(vec![])).unwrap().is_empty());
    }

    #[test]
    fn table_round_trip() {
        let rows = run_benchmark(&small(vec![Method::Riccati, Method::Listmann])).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.status == "ok" && r.iters.is_none() && r.time_s.is_none()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_table(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TABLE_HEADER);
        assert_eq!(text.lines().count(), 3);
        let back = read_table(&path).unwrap();
        let strip = |r: &BenchRow| BenchRow { gain: None, mu_trace: Vec::new(), ..r.clone() };
        assert_eq!(back, rows.iter().map(strip).collect::<Vec<_>>());
    }

    #[test]
    fn failures_become_rows() {
        let mut cfg = small(vec![Method::Direct]);
        cfg.alpha_grid = vec![1e9];
        let rows = run_benchmark(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        if rows[0].failed() {
            assert!(rows[0].mu_hat.is_none() && rows[0].gain.is_none());
        }
    }

    #[test]
    fn trajectories_share_initial_state() {
        let mut cfg = small(vec![Method::Riccati, Method::Listmann, Method::Aek]);
        cfg.horizon = Some(1.0);
        cfg.step = 1e-2;
        let rows = run_benchmark(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_trajectories(&cfg, &rows, &dir.path().join("run_")).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| f.initial_distance == files[0].initial_distance && f.path.exists()));
        assert!(files[0].path.file_name().unwrap().to_str().unwrap().starts_with("run_osc-circ4_"));

        cfg.horizon = Some(0.0);
        let files = emit_trajectories(&cfg, &rows, &dir.path().join("zero_")).unwrap();
        let text = std::fs::read_to_string(&files[0].path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(files[0].fit.is_none());
    }

    #[test]
    fn gain_file_round_trip() {
        let g = Gain(Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let f = GainFile::new(&g);
        assert_eq!(f.k, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"m":2,"n":3,"K":[1.0,2.0,3.0,4.0,5.0,6.0]}"#);
        let back: GainFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.gain().unwrap(), g);
        let bad = GainFile { k: vec![1.0], ..f };
        assert!(matches!(bad.gain(), Err(Error::Config(_))));
    }
}
