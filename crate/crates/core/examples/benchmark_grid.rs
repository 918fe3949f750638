//! A small benchmark grid driven by a JSON config, written as a CSV table.
//! The full grid is `syncgain bench --config <file>`.

use syncgain::bench::{run_benchmark, write_table, ScenarioConfig};

const CONFIG: &str = r#"{
    "plants": ["osc"],
    "graphs": ["circ4", "cpx5"],
    "methods": ["riccati", "listmann", "aek", "direct"],
    "timing": false
}"#;

fn main() -> syncgain::Result<()> {
    let cfg = ScenarioConfig::from_json(CONFIG)?;
    let rows = run_benchmark(&cfg)?;
    write_table(&rows, std::io::stdout().lock())?;
    let failed = rows.iter().filter(|r| r.failed()).count();
    eprintln!("{} rows, {failed} failed", rows.len());
    Ok(())
}
