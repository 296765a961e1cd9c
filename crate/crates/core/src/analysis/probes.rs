//! Replicate experiments for the two extreme regimes: increments without a
//! finite mean, and very high mutation rates with bounded increments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::input::{IncrementDistribution, PoissonInput};
use crate::pit::{ImmigrationEntry, PitState};
use crate::rng::replicate_rng;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Resident fitness of one run at each of the increasing `times`.
fn fitness_at_times(
    lambda: f64,
    gamma: &IncrementDistribution,
    times: &[f64],
    seed: u64,
    replicate: u64,
) -> Result<Vec<f64>, AnalysisError> {
    let input = PoissonInput::new(lambda, gamma.clone(), replicate_rng(seed, replicate))?.map(ImmigrationEntry::from);
    let mut state = PitState::homogeneous(input);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        state.advance(t)?;
        out.push(state.resident_fitness());
    }
    state.check_identities()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteMeanProbe {
    pub horizons: Vec<f64>,
    /// Median of `F(t) / t` across replicates, per horizon.
    pub medians: Vec<f64>,
    pub replicates: usize,
    pub warning: Option<String>,
}

/// Medians of `F(t) / t` over replicates, which should keep growing when the increments have no finite mean.
pub fn infinite_mean_probe(
    lambda: f64,
    gamma: &IncrementDistribution,
    horizons: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<InfiniteMeanProbe, AnalysisError> {
    if replicates == 0 {
        return Err(AnalysisError::Insufficient {
            what: "replicates",
            needed: 1,
            got: 0,
        });
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= 0.0 {
        return Err(AnalysisError::Unsupported(
            "horizons must be positive and increasing".into(),
        ));
    }
    let warning = gamma
        .has_finite_mean()
        .then(|| format!("increment law {gamma} has a finite mean; F(t)/t converges"));
    let runs: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| fitness_at_times(lambda, gamma, horizons, seed, r))
        .collect::<Result<_, _>>()?;
    let medians = horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| median(&mut runs.iter().map(|f| f[k] / h).collect::<Vec<_>>()))
        .collect();
    Ok(InfiniteMeanProbe {
        horizons: horizons.to_vec(),
        medians,
        replicates,
        warning,
    })
}

/// The in-probability limit `b (ceil(b t) - 1)` of `F(t)` as the mutation rate grows.
pub fn high_mutation_limit(b_sup: f64, t: f64) -> f64 {
    b_sup * ((b_sup * t).ceil() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighMutationRow {
    pub lambda: f64,
    pub values: Vec<f64>,
    pub within_tolerance: f64,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighMutationProbe {
    pub time: f64,
    pub limit: f64,
    pub tolerance: f64,
    pub rows: Vec<HighMutationRow>,
}

/// Distribution of `F(t)` for each mutation rate in `lambdas`, against the high-rate limit.
pub fn high_mutation_probe(
    gamma: &IncrementDistribution,
    t: f64,
    lambdas: &[f64],
    replicates: usize,
    tolerance: f64,
    seed: u64,
) -> Result<HighMutationProbe, AnalysisError> {
    let b = gamma
        .support_sup()
        .ok_or_else(|| AnalysisError::Unsupported(format!("increment law {gamma} has unbounded support")))?;
    if replicates == 0 {
        return Err(AnalysisError::Insufficient {
            what: "replicates",
            needed: 1,
            got: 0,
        });
    }
    let limit = high_mutation_limit(b, t);
    let rows = lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| -> Result<HighMutationRow, AnalysisError> {
            let stream = seed.wrapping_add((k as u64) << 32);
            let values: Vec<f64> = (0..replicates as u64)
                .into_par_iter()
                .map(|r| fitness_at_times(lambda, gamma, &[t], stream, r).map(|v| v[0]))
                .collect::<Result<_, _>>()?;
            let mut errors: Vec<f64> = values.iter().map(|v| (v - limit).abs()).collect();
            let within = errors.iter().filter(|&&e| e <= tolerance).count() as f64 / replicates as f64;
            Ok(HighMutationRow {
                lambda,
                median_error: median(&mut errors),
                within_tolerance: within,
                values,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(HighMutationProbe {
        time: t,
        limit,
        tolerance,
        rows,
    })
}
