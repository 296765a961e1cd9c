//! Continuous-time binary Galton-Watson processes: closed forms and an exact
//! path simulator, used as reference values for the Moran and trajectory
//! engines.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchingError {
    #[error("survival formula needs birth rate {b} > death rate {d} >= 0")]
    NotSupercritical { b: f64, d: f64 },
    #[error("invalid rates b = {b}, d = {d}")]
    InvalidRates { b: f64, d: f64 },
    #[error("need 0 < z < g, got z = {z}, g = {g}")]
    InvalidLevels { z: u64, g: u64 },
    #[error("initial population must be positive")]
    EmptyStart,
}

/// Individual birth rate `b`, death rate `d` and initial size `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwParams {
    pub birth: f64,
    pub death: f64,
    pub initial: u64,
}

impl GwParams {
    pub fn new(birth: f64, death: f64, initial: u64) -> Result<Self, BranchingError> {
        if !(birth >= 0.0 && death >= 0.0) || !birth.is_finite() || !death.is_finite() {
            return Err(BranchingError::InvalidRates { b: birth, d: death });
        }
        if initial == 0 {
            return Err(BranchingError::EmptyStart);
        }
        Ok(Self { birth, death, initial })
    }

    pub fn growth_rate(&self) -> f64 {
        self.birth - self.death
    }
}

/// Probability `1 - (d/b)^z` that the process never dies out.
pub fn gw_survival_formula(b: f64, d: f64, z: u64) -> Result<f64, BranchingError> {
    if !(b > d && d >= 0.0) {
        return Err(BranchingError::NotSupercritical { b, d });
    }
    Ok(1.0 - (d / b).powf(z as f64))
}

/// Gambler's-ruin quantity for the embedded walk.
///
/// For `b <= d` returns the upper bound `z / g` on reaching `g` before 0 from
/// `z`. For `b > d` returns `(d/b)^(g - z)`, the probability of ever falling
/// from `g` to `z`.
pub fn gamblers_ruin(z: u64, g: u64, b: f64, d: f64) -> Result<f64, BranchingError> {
    if !(0 < z && z < g) {
        return Err(BranchingError::InvalidLevels { z, g });
    }
    if !(b >= 0.0 && d >= 0.0) || (b == 0.0 && d == 0.0) {
        return Err(BranchingError::InvalidRates { b, d });
    }
    if b <= d {
        Ok(z as f64 / g as f64)
    } else {
        Ok((d / b).powf((g - z) as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GwOutcome {
    Extinct,
    /// Exceeded the population cap; counted as surviving.
    Escaped,
    /// Still alive and below the cap at the horizon.
    Alive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwPath {
    pub outcome: GwOutcome,
    pub extinction_time: Option<f64>,
    pub max_level: u64,
    /// Population when the run stopped.
    pub final_value: u64,
    pub final_time: f64,
    /// First time the population reached each requested level.
    pub level_hits: Vec<Option<f64>>,
    /// Population at each requested checkpoint time, if reached before stopping.
    pub checkpoint_values: Vec<Option<u64>>,
}

impl GwPath {
    pub fn survived(&self) -> bool {
        self.outcome != GwOutcome::Extinct
    }
}

/// What to record along a path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GwObservation {
    /// Levels `L`, increasing; records the first time `Z >= L`.
    pub levels: Vec<u64>,
    /// Times, increasing.
    pub checkpoints: Vec<f64>,
}

/// Exact path of the process up to `horizon`, stopping early at extinction or once `Z > cap`.
pub fn gw_run<R: Rng + ?Sized>(
    params: GwParams,
    horizon: f64,
    cap: u64,
    observe: &GwObservation,
    rng: &mut R,
) -> GwPath {
    let (b, d) = (params.birth, params.death);
    let mut z = params.initial;
    let mut t = 0.0;
    let mut max_level = z;
    let mut level_hits = vec![None; observe.levels.len()];
    let mut next_level = 0;
    let mut checkpoint_values = vec![None; observe.checkpoints.len()];
    let mut next_check = 0;
    let mark_levels = |z: u64, t: f64, next_level: &mut usize, hits: &mut Vec<Option<f64>>| {
        while *next_level < observe.levels.len() && z >= observe.levels[*next_level] {
            hits[*next_level] = Some(t);
            *next_level += 1;
        }
    };
    mark_levels(z, t, &mut next_level, &mut level_hits);

    let outcome = loop {
        if z == 0 {
            break GwOutcome::Extinct;
        }
        if z > cap {
            break GwOutcome::Escaped;
        }
        let rate = (b + d) * z as f64;
        let dt = if rate > 0.0 {
            <Exp1 as Distribution<f64>>::sample(&Exp1, rng) / rate
        } else {
            f64::INFINITY
        };
        let next = t + dt;
        while next_check < observe.checkpoints.len() && observe.checkpoints[next_check] < next {
            if observe.checkpoints[next_check] <= horizon {
                checkpoint_values[next_check] = Some(z);
            }
            next_check += 1;
        }
        if next > horizon {
            t = horizon;
            break GwOutcome::Alive;
        }
        t = next;
        if rng.random::<f64>() * (b + d) < b {
            z += 1;
            max_level = max_level.max(z);
            mark_levels(z, t, &mut next_level, &mut level_hits);
        } else {
            z -= 1;
        }
    };
    // after extinction the population stays at 0
    if outcome == GwOutcome::Extinct {
        for (k, &c) in observe.checkpoints.iter().enumerate().skip(next_check) {
            if c <= horizon {
                checkpoint_values[k] = Some(0);
            }
        }
    }
    GwPath {
        outcome,
        extinction_time: (outcome == GwOutcome::Extinct).then_some(t),
        max_level,
        final_value: z,
        final_time: t,
        level_hits,
        checkpoint_values,
    }
}
