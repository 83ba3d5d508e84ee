//! Writes a simulated ibex-like series and a 20-model run config.
//!
//! ```text
//! cargo run -p permsel-cli --example demo_data -- demo
//! cargo run -p permsel-cli -- select --config demo/ibex.toml
//! ```

use std::path::PathBuf;

use permsel_cli::config::{ModelEntry, RunConfig, SCHEMA_VERSION};
use permsel_cli::ingest::write_csv;
use permsel_core::{synthetic, StatisticKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    let dataset = synthetic::ibex_like(1)?;
    write_csv(&dataset, std::fs::File::create(dir.join("ibex.csv"))?)?;

    let config = RunConfig {
        schema_version: SCHEMA_VERSION,
        dataset: "ibex.csv".into(),
        statistics: vec![StatisticKind::Aicc, StatisticKind::CvMeanIgnorance],
        permutations: 999,
        seed: 1,
        output_dir: Some("results".into()),
        exclude_years: vec![],
        add_one: false,
        aicc_convention: Default::default(),
        ecdf: true,
        forecast: None,
        models: synthetic::ibex_candidates().iter().map(ModelEntry::from_candidate).collect(),
    };
    std::fs::write(dir.join("ibex.toml"), config.to_toml())?;
    println!("wrote {}/ibex.csv and {}/ibex.toml", dir.display(), dir.display());
    Ok(())
}
