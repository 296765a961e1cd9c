//! Distances between a finite population run and the trajectory system.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::moran::MoranRun;
use crate::pit::{ImmigrationEntry, PitState};

/// Heights of several trajectories on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightTrace {
    pub times: Vec<f64>,
    pub values: BTreeMap<i64, Vec<f64>>,
}

impl HeightTrace {
    /// Heights of every trajectory of `state` on `times`.
    pub fn from_pit<I: Iterator<Item = ImmigrationEntry>>(state: &PitState<I>, times: &[f64]) -> Self {
        let values = state
            .trajectories()
            .iter()
            .map(|tr| (tr.id, times.iter().map(|&t| tr.height_at(t)).collect()))
            .collect();
        Self {
            times: times.to_vec(),
            values,
        }
    }

    /// Log-frequencies of every type of `run` on its grid.
    pub fn from_moran(run: &MoranRun) -> Self {
        let types = run.state.counts().len();
        let times = run.trace.times();
        let values = (0..types)
            .map(|id| {
                let v = run.trace.grid.iter().map(|s| run.trace.log_frequency(s, id)).collect();
                (id as i64, v)
            })
            .collect();
        Self { times, values }
    }
}

/// Largest height difference over the grid and the ids present in both traces.
pub fn sup_distance(a: &HeightTrace, b: &HeightTrace) -> Result<f64, AnalysisError> {
    if a.times.len() != b.times.len() {
        return Err(AnalysisError::GridMismatch(format!(
            "{} against {} points",
            a.times.len(),
            b.times.len()
        )));
    }
    for (&s, &t) in a.times.iter().zip(&b.times) {
        if (s - t).abs() > 1e-9 * s.abs().max(1.0) {
            return Err(AnalysisError::GridMismatch(format!("time {s} against {t}")));
        }
    }
    let mut sup: f64 = 0.0;
    for (id, va) in &a.values {
        if let Some(vb) = b.values.get(id) {
            for (x, y) in va.iter().zip(vb) {
                sup = sup.max((x - y).abs());
            }
        }
    }
    Ok(sup)
}

/// Right-continuous step function on `[points[0].0, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub points: Vec<(f64, f64)>,
    pub end: f64,
}

impl StepFunction {
    pub fn new(points: Vec<(f64, f64)>, end: f64) -> Result<Self, AnalysisError> {
        if points.is_empty() {
            return Err(AnalysisError::Insufficient {
                what: "step points",
                needed: 1,
                got: 0,
            });
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) || end < points[points.len() - 1].0 {
            return Err(AnalysisError::GridMismatch(
                "step times must increase up to the end".into(),
            ));
        }
        Ok(Self { points, end })
    }

    /// Resident fitness of `state` on `[0, end]`.
    pub fn from_pit<I: Iterator<Item = ImmigrationEntry>>(
        state: &PitState<I>,
        end: f64,
    ) -> Result<Self, AnalysisError> {
        let points = state
            .resident_fitness_path()
            .into_iter()
            .filter(|p| p.0 <= end)
            .collect();
        Self::new(points, end)
    }

    /// Mean fitness of a population run, held constant between grid samples.
    pub fn from_moran(run: &MoranRun) -> Result<Self, AnalysisError> {
        let points: Vec<(f64, f64)> = run.trace.grid.iter().map(|s| (s.time, s.mean_fitness)).collect();
        let end = points.last().map_or(0.0, |p| p.0);
        Self::new(points, end)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= t);
        self.points[k.saturating_sub(1)].1
    }

    /// Vertices of the graph with its jumps filled in by vertical segments.
    fn completed_graph(&self) -> Vec<(f64, f64)> {
        let mut v = vec![self.points[0]];
        for w in self.points.windows(2) {
            v.push((w[1].0, w[0].1));
            v.push(w[1]);
        }
        let last = self.points[self.points.len() - 1];
        v.push((self.end, last.1));
        v
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - s * dx).hypot(p.1 - a.1 - s * dy)
}

fn directed_hausdorff(from: &[(f64, f64)], to: &[(f64, f64)], samples: usize) -> f64 {
    let total: f64 = from.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum();
    let step = if total > 0.0 { total / samples as f64 } else { 1.0 };
    let dist = |p: (f64, f64)| {
        to.windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
            .min(if to.len() == 1 {
                (p.0 - to[0].0).hypot(p.1 - to[0].1)
            } else {
                f64::INFINITY
            })
    };
    let mut worst = dist(from[0]);
    for w in from.windows(2) {
        let len = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        let pieces = (len / step).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            let s = k as f64 / pieces as f64;
            worst = worst.max(dist((w[0].0 + s * (w[1].0 - w[0].0), w[0].1 + s * (w[1].1 - w[0].1))));
        }
    }
    worst
}

/// Hausdorff distance between the completed graphs of two step functions.
///
/// Computed by sampling each graph at about 4000 points, so the result is
/// accurate to a small fraction of the graph length.
pub fn graph_distance(a: &StepFunction, b: &StepFunction) -> f64 {
    const SAMPLES: usize = 4000;
    let (ga, gb) = (a.completed_graph(), b.completed_graph());
    directed_hausdorff(&ga, &gb, SAMPLES).max(directed_hausdorff(&gb, &ga, SAMPLES))
}
