//! Scenario files: `key = value` lines, `#` comments, later keys win.
//!
//! Every key has a default, so the canonical text written by
//! [`Scenario::to_text`] lists all of them and parses back to the same value.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pit_core::input::IncrementDistribution;
use pit_core::pit::ImmigrationEntry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PIT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "pit-out";

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot read `{key}` file {path}: {reason}")]
    File {
        key: &'static str,
        path: PathBuf,
        reason: String,
    },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    PitRun,
    PitReplay,
    MoranRun,
    Couple,
    Speed,
    Heuristics,
    Gw,
    Fclt,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::PitRun,
        Command::PitReplay,
        Command::MoranRun,
        Command::Couple,
        Command::Speed,
        Command::Heuristics,
        Command::Gw,
        Command::Fclt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PitRun => "pit-run",
            Command::PitReplay => "pit-replay",
            Command::MoranRun => "moran-run",
            Command::Couple => "couple",
            Command::Speed => "speed",
            Command::Heuristics => "heuristics",
            Command::Gw => "gw",
            Command::Fclt => "fclt",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid("command", format!("`{s}` is not a command")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub command: Command,
    pub lambda: f64,
    pub gamma: IncrementDistribution,
    /// Population size of the Moran model.
    pub n: u64,
    pub horizon: f64,
    pub replicates: u64,
    pub seed: u64,
    pub grid_step: f64,
    pub cycles: u64,
    /// Immigration list for replays and coupled runs.
    pub input: Vec<ImmigrationEntry>,
    pub birth: f64,
    pub death: f64,
    pub initial: u64,
    /// Branching population above which a path counts as surviving.
    pub cap: u64,
    /// Time scale `n` of the standardized fitness `(F(n t) - v n t) / (sigma sqrt(n))`.
    pub scale: f64,
    pub times: Vec<f64>,
    /// Centering speed and variance; estimated from a renewal run when absent.
    pub speed: Option<f64>,
    pub sigma2: Option<f64>,
    pub out: PathBuf,
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

impl Scenario {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            lambda: 1.0,
            gamma: IncrementDistribution::PointMass { value: 1.0 },
            n: 10_000,
            horizon: 100.0,
            replicates: 1,
            seed: 0,
            grid_step: 0.01,
            cycles: 100_000,
            input: Vec::new(),
            birth: 2.0,
            death: 1.0,
            initial: 1,
            cap: 10_000,
            scale: 1000.0,
            times: vec![0.25, 0.5, 0.75, 1.0],
            speed: None,
            sigma2: None,
            out: default_out_dir(),
        }
    }

    /// Applies one `key = value` setting. Relative file paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ScenarioError> {
        let value = value.trim();
        match key {
            "command" => self.command = value.parse()?,
            "lambda" => self.lambda = positive("lambda", value)?,
            "gamma" => {
                self.gamma = value.parse().map_err(|e| invalid("gamma", format!("{e}")))?;
            }
            "n" => {
                self.n = integer("n", value)?;
                if self.n < 2 {
                    return Err(invalid("n", "population size must be at least 2"));
                }
            }
            "horizon" => self.horizon = positive("horizon", value)?,
            "replicates" => {
                self.replicates = integer("replicates", value)?;
                if self.replicates == 0 {
                    return Err(invalid("replicates", "must be at least 1"));
                }
            }
            "seed" => self.seed = integer("seed", value)?,
            "grid_step" => self.grid_step = positive("grid_step", value)?,
            "cycles" => self.cycles = integer("cycles", value)?,
            "input" => self.input = parse_input(value)?,
            "input_file" => {
                let path = resolve(base, value);
                let text = std::fs::read_to_string(&path).map_err(|e| ScenarioError::File {
                    key: "input_file",
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                self.input = parse_input_csv(&text)?;
            }
            "birth" => self.birth = positive("birth", value)?,
            "death" => self.death = nonnegative("death", value)?,
            "initial" => {
                self.initial = integer("initial", value)?;
                if self.initial == 0 {
                    return Err(invalid("initial", "must be at least 1"));
                }
            }
            "cap" => {
                self.cap = integer("cap", value)?;
                if self.cap == 0 {
                    return Err(invalid("cap", "must be at least 1"));
                }
            }
            "scale" => self.scale = positive("scale", value)?,
            "times" => self.times = parse_times(value)?,
            "speed" => self.speed = optional(value, |v| real("speed", v))?,
            "sigma2" => self.sigma2 = optional(value, |v| positive("sigma2", v))?,
            "out" => self.out = resolve(base, value),
            "config" => return Err(invalid("config", "only allowed on the command line")),
            other => return Err(ScenarioError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every setting of a scenario file.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<(), ScenarioError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line: k + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value, base)?;
        }
        Ok(())
    }

    /// Parses a complete scenario file; `command` must be present.
    pub fn from_text(text: &str, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let command = text
            .lines()
            .rev()
            .filter_map(|l| l.split('#').next()?.split_once('='))
            .find(|(k, _)| k.trim() == "command")
            .ok_or_else(|| invalid("command", "missing"))?
            .1
            .trim()
            .parse()?;
        let mut s = Scenario::new(command);
        s.apply_text(text, base)?;
        Ok(s)
    }

    /// Canonical text: every key except `input_file`, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = self.hashed_text();
        out.push_str(&format!("out = {}\n", self.out.display()));
        out
    }

    /// Canonical text without the output directory, which does not affect results.
    fn hashed_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let lines = [
            ("command", self.command.to_string()),
            ("lambda", self.lambda.to_string()),
            ("gamma", self.gamma.to_string()),
            ("n", self.n.to_string()),
            ("horizon", self.horizon.to_string()),
            ("replicates", self.replicates.to_string()),
            ("seed", self.seed.to_string()),
            ("grid_step", self.grid_step.to_string()),
            ("cycles", self.cycles.to_string()),
            ("input", format_input(&self.input)),
            ("birth", self.birth.to_string()),
            ("death", self.death.to_string()),
            ("initial", self.initial.to_string()),
            ("cap", self.cap.to_string()),
            ("scale", self.scale.to_string()),
            ("times", join(&self.times)),
            ("speed", opt(self.speed)),
            ("sigma2", opt(self.sigma2)),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical text, output directory excluded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.hashed_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Fixed list of `(time, increment)` pairs for a coupled population run.
    pub fn schedule(&self) -> Vec<(f64, f64)> {
        self.input.iter().map(|e| (e.time, e.increment)).collect()
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn real(key: &'static str, value: &str) -> Result<f64, ScenarioError> {
    let x: f64 = value
        .parse()
        .map_err(|_| invalid(key, format!("`{value}` is not a number")))?;
    if !x.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(x)
}

fn positive(key: &'static str, value: &str) -> Result<f64, ScenarioError> {
    let x = real(key, value)?;
    if x <= 0.0 {
        return Err(invalid(key, format!("must be positive, got {x}")));
    }
    Ok(x)
}

fn nonnegative(key: &'static str, value: &str) -> Result<f64, ScenarioError> {
    let x = real(key, value)?;
    if x < 0.0 {
        return Err(invalid(key, format!("must be nonnegative, got {x}")));
    }
    Ok(x)
}

fn integer(key: &'static str, value: &str) -> Result<u64, ScenarioError> {
    value
        .replace('_', "")
        .parse()
        .map_err(|_| invalid(key, format!("`{value}` is not a nonnegative integer")))
}

fn optional(value: &str, parse: impl Fn(&str) -> Result<f64, ScenarioError>) -> Result<Option<f64>, ScenarioError> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_times(value: &str) -> Result<Vec<f64>, ScenarioError> {
    let times = value
        .split(',')
        .map(|t| positive("times", t.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "must be strictly increasing"));
    }
    Ok(times)
}

/// `time:slope` or `time:slope:increment` entries separated by `;`.
fn parse_input(value: &str) -> Result<Vec<ImmigrationEntry>, ScenarioError> {
    let entries = value
        .split(';')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|e| {
            let parts: Vec<&str> = e.split(':').map(str::trim).collect();
            let num = |s: &str| real("input", s);
            match parts.as_slice() {
                [t, v] => Ok(ImmigrationEntry::new(num(t)?, num(v)?)),
                [t, v, a] => Ok(ImmigrationEntry {
                    time: num(t)?,
                    slope: num(v)?,
                    increment: num(a)?,
                }),
                _ => Err(invalid("input", format!("entry `{e}` is not time:slope[:increment]"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    validate_input(&entries)?;
    Ok(entries)
}

/// CSV with a header row and columns `time,slope[,increment]`.
fn parse_input_csv(text: &str) -> Result<Vec<ImmigrationEntry>, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| invalid("input_file", e.to_string()))?;
        let num = |k: usize| {
            record
                .get(k)
                .ok_or_else(|| invalid("input_file", format!("row {:?} is too short", record)))
                .and_then(|s| real("input_file", s))
        };
        let (time, slope) = (num(0)?, num(1)?);
        let increment = if record.len() > 2 { num(2)? } else { slope };
        entries.push(ImmigrationEntry { time, slope, increment });
    }
    validate_input(&entries).map_err(|e| match e {
        ScenarioError::Invalid { reason, .. } => invalid("input_file", reason),
        other => other,
    })?;
    Ok(entries)
}

fn validate_input(entries: &[ImmigrationEntry]) -> Result<(), ScenarioError> {
    for e in entries {
        if e.time < 0.0 || e.slope < 0.0 || e.increment < 0.0 {
            return Err(invalid("input", "times, slopes and increments must be nonnegative"));
        }
        if e.slope > 0.0 && e.slope != e.increment {
            return Err(invalid("input", "a contender's slope must equal its increment"));
        }
    }
    if entries.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(invalid("input", "times must be strictly increasing"));
    }
    Ok(())
}

fn format_input(entries: &[ImmigrationEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}:{}:{}", e.time, e.slope, e.increment))
        .collect::<Vec<_>>()
        .join(";")
}
