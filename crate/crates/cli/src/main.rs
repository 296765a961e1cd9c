use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pit_cli::scenario::{Command, Scenario};

#[derive(Parser)]
#[command(name = "pit", version = pit_cli::BUILD_TAG, about = "Simulate trajectory systems, Moran populations and their diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trajectory system driven by a Poisson mutation stream.
    PitRun(Flags),
    /// Trajectory system on a fixed immigration list.
    PitReplay(Flags),
    /// Moran population with Poisson mutations.
    MoranRun(Flags),
    /// Moran population on a fixed mutation list, compared with the matching trajectory system.
    Couple(Flags),
    /// Speed of adaptation from renewal cycles.
    Speed(Flags),
    /// Heuristic speed predictions next to a simulated speed.
    Heuristics(Flags),
    /// Binary branching process survival.
    Gw(Flags),
    /// Standardized fitness fluctuations on a time grid.
    Fclt(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// Scenario file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    replicates: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    horizon: Option<String>,
    /// Output directory; defaults to $PIT_OUT_DIR, then `pit-out`.
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    grid_step: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Increment law, e.g. `point_mass(1)`, `uniform(1,2)`, `exponential(1)`, `pareto(1,0.5)`.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Population size.
    #[arg(long, allow_hyphen_values = true)]
    n: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    cycles: Option<String>,
    /// Any other scenario key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let named = [
            ("seed", &self.seed),
            ("replicates", &self.replicates),
            ("horizon", &self.horizon),
            ("out", &self.out),
            ("grid_step", &self.grid_step),
            ("lambda", &self.lambda),
            ("gamma", &self.gamma),
            ("n", &self.n),
            ("cycles", &self.cycles),
        ];
        let mut pairs: Vec<(String, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("`--set {kv}` is not KEY=VALUE"))?;
            pairs.push((k.trim().to_string(), v.to_string()));
        }
        pairs.extend(
            named
                .into_iter()
                .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))),
        );
        Ok(pairs)
    }
}

fn scenario(command: Command, flags: &Flags) -> Result<Scenario> {
    let mut s = Scenario::new(command);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_text(&text, path.parent())
            .with_context(|| format!("in {}", path.display()))?;
        anyhow::ensure!(
            s.command == command,
            "invalid value for `command`: {} says {}, but {} was requested",
            path.display(),
            s.command,
            command
        );
    }
    for (k, v) in flags.overrides()? {
        s.set(&k, &v, None)?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Cmd::PitRun(f) => (Command::PitRun, f),
        Cmd::PitReplay(f) => (Command::PitReplay, f),
        Cmd::MoranRun(f) => (Command::MoranRun, f),
        Cmd::Couple(f) => (Command::Couple, f),
        Cmd::Speed(f) => (Command::Speed, f),
        Cmd::Heuristics(f) => (Command::Heuristics, f),
        Cmd::Gw(f) => (Command::Gw, f),
        Cmd::Fclt(f) => (Command::Fclt, f),
    };
    let result = scenario(command, flags).and_then(|s| pit_cli::run(&s).map(|summary| (s, summary)));
    match result {
        Ok((s, summary)) => {
            println!(
                "{} done in {:.3}s; scenario {}; outputs in {}",
                summary.command,
                summary.wall_time_seconds,
                &summary.scenario_hash[..12],
                s.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
