//! Empirical check of the functional central limit theorem for the resident
//! fitness: `(F(n t) - v n t) / (sigma sqrt(n))` should look like a standard
//! Brownian motion in `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::input::{IncrementDistribution, PoissonInput};
use crate::pit::{ImmigrationEntry, PitState};
use crate::rng::replicate_rng;

pub const MIN_RUNS: usize = 500;
/// Scales below this are reported as too small for the limit to be visible.
pub const LOW_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltConfig {
    pub lambda: f64,
    pub gamma: IncrementDistribution,
    pub scale: f64,
    pub times: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// Centering speed and variance used for the standardization.
    pub speed: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltReport {
    pub times: Vec<f64>,
    /// `samples[r][k]` is the standardized value of run `r` at `times[k]`.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Correlation between consecutive grid times.
    pub lag_correlation: Vec<f64>,
    pub low_scale: bool,
}

pub fn fclt_diagnostic(cfg: &FcltConfig) -> Result<FcltReport, AnalysisError> {
    if cfg.runs < MIN_RUNS {
        return Err(AnalysisError::Insufficient {
            what: "runs",
            needed: MIN_RUNS,
            got: cfg.runs,
        });
    }
    if !cfg.gamma.has_finite_second_moment() {
        return Err(AnalysisError::Unsupported(
            "standardization needs increments with finite second moment".into(),
        ));
    }
    if cfg.times.is_empty() || cfg.times.windows(2).any(|w| w[1] <= w[0]) || cfg.times[0] <= 0.0 {
        return Err(AnalysisError::Unsupported(
            "grid times must be positive and increasing".into(),
        ));
    }
    let norm = (cfg.sigma2 * cfg.scale).sqrt();
    let samples: Vec<Vec<f64>> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>, AnalysisError> {
            let input = PoissonInput::new(cfg.lambda, cfg.gamma.clone(), replicate_rng(cfg.seed, r))?
                .map(ImmigrationEntry::from);
            let mut state = PitState::homogeneous(input);
            let mut out = Vec::with_capacity(cfg.times.len());
            for &t in &cfg.times {
                let horizon = cfg.scale * t;
                state.advance(horizon)?;
                out.push((state.resident_fitness() - cfg.speed * horizon) / norm);
                state.forget_history();
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let n = samples.len() as f64;
    let k = cfg.times.len();
    let mean: Vec<f64> = (0..k).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let variance: Vec<f64> = (0..k)
        .map(|j| samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let lag_correlation = (1..k)
        .map(|j| {
            let cov = samples
                .iter()
                .map(|s| (s[j - 1] - mean[j - 1]) * (s[j] - mean[j]))
                .sum::<f64>()
                / (n - 1.0);
            cov / (variance[j - 1] * variance[j]).sqrt()
        })
        .collect();
    Ok(FcltReport {
        times: cfg.times.clone(),
        samples,
        mean,
        variance,
        lag_correlation,
        low_scale: cfg.scale < LOW_SCALE,
    })
}
