//! Regeneration structure of the trajectory system and the speed estimator.
//!
//! Solitary resident changes split a run into i.i.d. cycles. Each cycle
//! contributes its length and its fitness gain; the long-run speed is the
//! ratio of their means.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::pit::{Event, ImmigrationEntry, PitError, PitState};

/// Length and fitness gain of one regeneration cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalRecord {
    pub cycle_length: f64,
    pub cycle_reward: f64,
}

/// Regeneration times with the resident fitness at each, starting from the
/// run start, and the completed cycles between them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Renewals {
    pub times: Vec<f64>,
    pub fitness: Vec<f64>,
    pub records: Vec<RenewalRecord>,
}

impl Renewals {
    fn start(time: f64, fitness: f64) -> Self {
        Self {
            times: vec![time],
            fitness: vec![fitness],
            records: Vec::new(),
        }
    }

    fn push(&mut self, time: f64, fitness: f64) {
        let (t0, f0) = (*self.times.last().unwrap(), *self.fitness.last().unwrap());
        self.records.push(RenewalRecord {
            cycle_length: time - t0,
            cycle_reward: fitness - f0,
        });
        self.times.push(time);
        self.fitness.push(fitness);
    }

    /// Regeneration times after the start.
    pub fn regeneration_times(&self) -> &[f64] {
        &self.times[1..]
    }
}

/// Solitary resident changes of a logged run that started at time 0 with fitness `f0`.
///
/// The cycle after the last solitary change is incomplete and not recorded.
pub fn detect_renewals(events: &[Event], f0: f64) -> Renewals {
    let mut out = Renewals::start(0.0, f0);
    for e in events {
        if let Event::ResidentChange { time, fitness, .. } = e {
            if e.is_solitary_change() {
                out.push(*time, *fitness);
            }
        }
    }
    out
}

/// Runs `state` until `cycles` regeneration cycles are complete or the clock reaches `max_time`.
///
/// History is discarded along the way, so this suits long runs whose
/// trajectories are not needed afterwards.
pub fn simulate_renewals<I>(state: &mut PitState<I>, cycles: usize, max_time: f64) -> Result<Renewals, PitError>
where
    I: Iterator<Item = ImmigrationEntry>,
{
    const FORGET_EVERY: usize = 20_000;
    let mut out = Renewals::start(state.clock(), state.resident_fitness());
    let mut seen = state.events().len();
    while out.records.len() < cycles {
        if state.step(max_time)?.is_none() {
            break;
        }
        for e in &state.events()[seen..] {
            if let Event::ResidentChange { time, fitness, .. } = e {
                if e.is_solitary_change() {
                    out.push(*time, *fitness);
                }
            }
        }
        seen = state.events().len();
        if seen >= FORGET_EVERY {
            state.forget_history();
            seen = 0;
        }
    }
    Ok(out)
}

/// Speed of adaptation with its standard error from the renewal-reward CLT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub v_hat: f64,
    pub stderr: f64,
    pub n_cycles: usize,
    /// Plug-in estimate of `E[(reward - v length)^2] / E[length]`.
    pub sigma2_hat: f64,
}

impl SpeedEstimate {
    /// 95% normal confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.v_hat - 1.96 * self.stderr, self.v_hat + 1.96 * self.stderr)
    }
}

pub fn speed_estimate(records: &[RenewalRecord]) -> Result<SpeedEstimate, AnalysisError> {
    if records.len() < 2 {
        return Err(AnalysisError::Insufficient {
            what: "renewal cycles",
            needed: 2,
            got: records.len(),
        });
    }
    let n = records.len() as f64;
    let total_length: f64 = records.iter().map(|r| r.cycle_length).sum();
    let total_reward: f64 = records.iter().map(|r| r.cycle_reward).sum();
    let v_hat = total_reward / total_length;
    let mean_sq = records
        .iter()
        .map(|r| (r.cycle_reward - v_hat * r.cycle_length).powi(2))
        .sum::<f64>()
        / n;
    let sigma2_hat = mean_sq / (total_length / n);
    Ok(SpeedEstimate {
        v_hat,
        stderr: (sigma2_hat / total_length).sqrt(),
        n_cycles: records.len(),
        sigma2_hat,
    })
}

/// Exact speed `lambda c^2 / (1 + c + lambda)` for deterministic increments `c`.
pub fn point_mass_speed(lambda: f64, c: f64) -> f64 {
    lambda * c * c / (1.0 + c + lambda)
}
