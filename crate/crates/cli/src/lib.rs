//! Scenario parsing, dispatch and artifact writing for the `pit` command.

pub mod commands;
pub mod output;
pub mod scenario;

use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use output::Artifacts;
use scenario::Scenario;

/// `git describe` output at build time, or the crate version outside a checkout.
pub const BUILD_TAG: &str = env!("PIT_BUILD_TAG");

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub build: &'static str,
    pub wall_time_seconds: f64,
    pub scenario: Scenario,
    pub scenario_text: String,
    pub files: Vec<String>,
    pub results: Value,
}

/// Runs a scenario and writes its artifacts plus `summary.json` to `scenario.out`.
pub fn run(scenario: &Scenario) -> Result<Summary> {
    let start = Instant::now();
    let hash = scenario.hash();
    let mut out = Artifacts::new(&scenario.out, &hash)?;
    std::fs::write(scenario.out.join("scenario.txt"), scenario.to_text())?;
    let results = commands::dispatch(scenario, &mut out)?;
    let files = out
        .written
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    let summary = Summary {
        command: scenario.command.to_string(),
        scenario_hash: hash,
        seed: scenario.seed,
        build: BUILD_TAG,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        scenario: scenario.clone(),
        scenario_text: scenario.to_text(),
        files,
        results,
    };
    out.json("summary.json", &summary)?;
    Ok(summary)
}
