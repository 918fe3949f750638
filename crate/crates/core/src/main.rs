use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use syncgain::bench::{self, GainFile, GraphSpec, PlantSpec, ScenarioConfig};
use syncgain::graph::{GraphJson, WeightedDigraph};
use syncgain::linalg::Plant;
use syncgain::lmi::{assemble_synthesis, MultiplierSet};
use syncgain::synth::{design, spectrum_of, AlgorithmConfig, Method};
use syncgain::verify::{check_mu_uges, estimate_rate, CheckMethod};
use syncgain::{sim, Error, Result};

#[derive(Parser)]
#[command(name = "syncgain", version, about = "Synchronizing state-feedback design over directed graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Nonzero Laplacian eigenvalues of a graph (preset name or JSON file).
    Spectrum { graph: String },
    /// Design a gain with one method.
    Synth {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        plant: String,
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 20.0)]
        kbar: f64,
        /// Write the gain file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a decay rate for a stored gain.
    Verify {
        #[arg(long)]
        gain: PathBuf,
        #[arg(long)]
        mu: f64,
        /// Overrides the plant recorded in the gain file.
        #[arg(long)]
        plant: Option<String>,
        /// Overrides the graph recorded in the gain file.
        #[arg(long)]
        graph: Option<String>,
        #[arg(long, value_enum, default_value_t = Check::Spectral)]
        check: Check,
    },
    /// Simulate the closed loop of a stored gain and write `t,dist` CSV.
    Simulate {
        #[arg(long)]
        gain: PathBuf,
        #[arg(long)]
        plant: Option<String>,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = sim::DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = sim::DEFAULT_SEED, env = bench::SEED_ENV)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add per-agent state columns.
        #[arg(long)]
        states: bool,
    },
    /// Run the method grid of a JSON scenario config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Table path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one trajectory CSV per row, named `<prefix><scenario>_<method>.csv`.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Print the initial synthesis problem (Z = I, W = alpha I) as JSON.
    DumpSdp {
        #[arg(long)]
        plant: String,
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 20.0)]
        kbar: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Spectral,
    Lyapunov,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn plant_spec(arg: &str) -> Result<PlantSpec> {
    if Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg)?;
        return serde_json::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")));
    }
    Ok(PlantSpec::Preset(arg.to_string()))
}

fn graph_spec(arg: &str) -> Result<GraphSpec> {
    if Path::new(arg).is_file() {
        let text = std::fs::read_to_string(arg)?;
        let graph: GraphJson = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
        let name = Path::new(arg).file_stem().map_or("graph".into(), |s| s.to_string_lossy().into_owned());
        return Ok(GraphSpec::Inline { name, graph });
    }
    Ok(GraphSpec::Preset(arg.to_string()))
}

fn resolve(plant: &PlantSpec, graph: &GraphSpec) -> Result<(Plant, WeightedDigraph)> {
    Ok((plant.resolve().map_err(config_err)?, graph.resolve().map_err(config_err)?))
}

/// Gain plus the plant and graph it applies to (flags win over the file).
fn gain_context(path: &Path, plant: Option<String>, graph: Option<String>) -> Result<(GainFile, PlantSpec, GraphSpec)> {
    let file = GainFile::load(path)?;
    let plant = match plant {
        Some(p) => plant_spec(&p)?,
        None => file.plant.clone().ok_or_else(|| Error::Config("gain file names no plant; pass --plant".into()))?,
    };
    let graph = match graph {
        Some(g) => graph_spec(&g)?,
        None => file.graph.clone().ok_or_else(|| Error::Config("gain file names no graph; pass --graph".into()))?,
    };
    Ok((file, plant, graph))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values always serialize"));
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Spectrum { graph } => {
            let g = graph_spec(&graph)?.resolve().map_err(config_err)?;
            for lam in spectrum_of(&g)?.eigenvalues() {
                println!("{} {}", lam.re, lam.im);
            }
        }
        Cmd::Synth { method, plant, graph, kbar, out } => {
            let (ps, gs) = (plant_spec(&plant)?, graph_spec(&graph)?);
            let (p, g) = resolve(&ps, &gs)?;
            let cfg = AlgorithmConfig { kbar, ..AlgorithmConfig::default() };
            cfg.validate()?;
            let r = design(method, &p, &g, &cfg)?;
            let rate = estimate_rate(&p, &spectrum_of(&g)?, &r.gain)?;
            let file = GainFile { plant: Some(ps), graph: Some(gs), ..GainFile::new(&r.gain) };
            if let Some(path) = &out {
                file.save(path)?;
            }
            print_json(&json!({
                "method": method,
                "mu_hat": rate.mu_hat,
                "mu_star": r.mu_star,
                "gain_norm": r.gain.norm2(),
                "iterations": r.iterations,
                "alpha": r.alpha,
                "degraded": r.degraded,
                "wall_time": r.wall_time,
                "mu_trace": r.mu_trace,
                "gain": file,
            }));
        }
        Cmd::Verify { gain, mu, plant, graph, check } => {
            let (file, ps, gs) = gain_context(&gain, plant, graph)?;
            let (p, g) = resolve(&ps, &gs)?;
            let k = file.gain()?;
            let s = spectrum_of(&g)?;
            let method = match check {
                Check::Spectral => CheckMethod::Spectral,
                Check::Lyapunov => CheckMethod::Lyapunov,
            };
            let ok = check_mu_uges(&p, &s, &k, mu, method)?;
            let rate = estimate_rate(&p, &s, &k)?;
            print_json(&json!({ "mu": mu, "uges": ok, "mu_hat": rate.mu_hat, "gain_norm": k.norm2() }));
        }
        Cmd::Simulate { gain, plant, graph, horizon, step, seed, out, states } => {
            let (file, ps, gs) = gain_context(&gain, plant, graph)?;
            let (p, g) = resolve(&ps, &gs)?;
            let k = file.gain()?;
            let horizon = match horizon {
                Some(t) => t,
                None => {
                    let rate = estimate_rate(&p, &spectrum_of(&g)?, &k)?.mu_hat;
                    sim::horizon_for_rate(ps.name(), Some(rate))
                }
            };
            let x0 = sim::initial_state(g.n_agents(), p.n(), seed);
            let traj = sim::integrate(&x0, &p, &k, &g.laplacian(), horizon, step)?;
            match &out {
                Some(path) => traj.save_csv(path, states)?,
                None => traj.write_csv(std::io::stdout().lock(), states)?,
            }
            if out.is_some() {
                let fit = (traj.len() > 1).then(|| sim::fit_decay(&traj, sim::DEFAULT_WINDOW_FRACTION)).transpose()?;
                print_json(&json!({ "samples": traj.len(), "final_ratio": traj.final_ratio(), "fit": fit }));
            }
        }
        Cmd::Bench { config, out, trajectories } => {
            let cfg = ScenarioConfig::load(&config)?;
            let rows = bench::run_benchmark(&cfg)?;
            match &out {
                Some(path) => bench::emit_table(&rows, path)?,
                None => bench::write_table(&rows, std::io::stdout().lock())?,
            }
            if let Some(prefix) = &trajectories {
                bench::emit_trajectories(&cfg, &rows, prefix)?;
            }
            for r in rows.iter().filter(|r| r.failed()) {
                eprintln!("{} {}: {}", r.scenario, r.method, r.status);
            }
            if rows.iter().any(|r| r.failed()) {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::DumpSdp { plant, graph, mu, alpha, kbar } => {
            let (p, g) = resolve(&plant_spec(&plant)?, &graph_spec(&graph)?)?;
            let s = spectrum_of(&g)?;
            let mult = MultiplierSet::initial(p.n(), s.len(), alpha);
            let prob = assemble_synthesis(&p, &s, &mult, mu, kbar)?;
            print_json(&prob.to_debug_json());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let config = matches!(
                e,
                Error::Config(_) | Error::UnknownPreset(_) | Error::InvalidGraph(_) | Error::Json(_) | Error::Io(_)
            );
            ExitCode::from(if config { 1 } else { 2 })
        }
    }
}
