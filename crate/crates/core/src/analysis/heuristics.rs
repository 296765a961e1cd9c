//! Gerrish-Lenski type predictions of the speed of adaptation.
//!
//! A contender with increment `a` is retained by the plain heuristic when no
//! fitter contender is born during its rise time `1/a`; the refined version
//! additionally asks that no earlier contender at least as fit is still
//! rising when it is born.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::input::{contender_params, ContenderLaw, IncrementDistribution, Region};
use crate::pit::ImmigrationEntry;

const REL_TOL: f64 = 1e-6;

/// Retention probability of the plain heuristic, `exp(-(rate / a) * P(A* > a))`.
pub fn pi_gl(law: &ContenderLaw, a: f64) -> Result<f64, AnalysisError> {
    let tail = law.tail_mass(a, REL_TOL * 1e-2)?;
    Ok((-(law.rate / a) * tail).exp())
}

/// Retention probability of the refined heuristic,
/// `pi_gl(a) * exp(-rate * E[1/A*; A* >= a])`.
pub fn pi_rgl(law: &ContenderLaw, a: f64) -> Result<f64, AnalysisError> {
    let past = law.integrate(
        &|b| 1.0 / b,
        Region::Above {
            from: a,
            inclusive: true,
        },
        REL_TOL * 1e-2,
    )?;
    Ok(pi_gl(law, a)? * (-law.rate * past).exp())
}

fn predicted_speed(law: &ContenderLaw, refined: bool) -> Result<f64, AnalysisError> {
    if let Some(c) = law.point_mass() {
        // the tail above c is empty and E[1/A*; A* >= c] = 1/c
        let factor = if refined { (-law.rate / c).exp() } else { 1.0 };
        return Ok(law.rate * c * factor);
    }
    // retention probabilities come from nested quadrature and can fail
    let failure = std::cell::RefCell::new(None);
    let integrand = |a: f64| {
        let p = if refined { pi_rgl(law, a) } else { pi_gl(law, a) };
        match p {
            Ok(p) => a * p,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let integral = law.integrate(&integrand, Region::All, REL_TOL)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(law.rate * integral)
}

/// Plain heuristic speed for a given contender law.
pub fn glh_speed_for(law: &ContenderLaw) -> Result<f64, AnalysisError> {
    predicted_speed(law, false)
}

/// Refined heuristic speed for a given contender law.
pub fn rglh_speed_for(law: &ContenderLaw) -> Result<f64, AnalysisError> {
    predicted_speed(law, true)
}

pub fn glh_speed(lambda: f64, gamma: &IncrementDistribution) -> Result<f64, AnalysisError> {
    glh_speed_for(&contender_params(lambda, gamma)?)
}

pub fn rglh_speed(lambda: f64, gamma: &IncrementDistribution) -> Result<f64, AnalysisError> {
    rglh_speed_for(&contender_params(lambda, gamma)?)
}

/// Which contenders of a realized input the refined heuristic retains.
///
/// `contenders` holds `(birth time, increment)` in order of birth. Contender
/// `i` is retained when no earlier `j` with increment at least as large is
/// still rising at its birth, and no later contender with a larger increment
/// is born during its own rise.
pub fn rglh_retention(contenders: &[(f64, f64)]) -> Vec<bool> {
    (0..contenders.len())
        .map(|i| {
            let (ti, ai) = contenders[i];
            let killed_by_past = contenders[..i]
                .iter()
                .any(|&(tj, aj)| tj < ti && ti < tj + 1.0 / aj && aj >= ai);
            let overtaken = contenders[i + 1..]
                .iter()
                .any(|&(tk, ak)| ti < tk && tk < ti + 1.0 / ai && ak > ai);
            !killed_by_past && !overtaken
        })
        .collect()
}

/// Three contenders where the realized final fitness is `a + c` but the
/// refined heuristic retains only the middle mutation `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MispredictionFixture {
    pub times: [f64; 3],
    pub increments: [f64; 3],
}

impl MispredictionFixture {
    pub fn input(&self) -> Vec<ImmigrationEntry> {
        self.times
            .iter()
            .zip(self.increments)
            .map(|(&t, a)| ImmigrationEntry::new(t, a))
            .collect()
    }

    pub fn contenders(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.increments).collect()
    }
}

/// Frozen instance found by searching a grid of birth times and increments
/// with the trajectory engine.
pub fn rglh_misprediction_fixture() -> MispredictionFixture {
    MispredictionFixture {
        times: [1.0, 1.8, 2.35],
        increments: [1.0, 1.5, 0.8],
    }
}
