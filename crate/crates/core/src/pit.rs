//! Event-driven evolution of a system of interacting piecewise-linear
//! trajectories.
//!
//! Every trajectory lives in `[0, 1]` and moves with constant slope between
//! events. Three kinds of events exist: an immigration switches a new
//! trajectory on at height 0, a trajectory falling to 0 is absorbed there, and
//! a trajectory rising to 1 becomes the resident. At a resident change every
//! trajectory with positive height loses the pre-hit slope `v*` of the new
//! resident, and the resident fitness grows by `v*`.
//!
//! Started from a single resident and fed with the marked Poisson input of
//! [`crate::input`], the system is the Poissonian system of interacting
//! trajectories.

use std::collections::BTreeMap;
use std::iter::Peekable;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::input::InputEvent;

/// Relative tolerance under which two event times count as simultaneous.
pub const TIME_TOL: f64 = 1e-12;
/// Slopes at or below this count as nonpositive in the solitary test.
pub const SLOPE_TOL: f64 = 1e-12;
const HEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PitError {
    #[error("invalid start configuration: {0}")]
    Configuration(String),
    #[error("immigration at {time} does not follow the previous one at {previous}")]
    UnorderedImmigration { time: f64, previous: f64 },
    #[error("immigration at {time} has invalid slope {slope}")]
    InvalidImmigration { time: f64, slope: f64 },
    #[error("cannot advance to {until}, clock is already at {clock}")]
    TimeReversal { until: f64, clock: f64 },
    #[error("unknown trajectory id {0}")]
    UnknownId(i64),
    #[error("history before {0} was discarded")]
    HistoryDiscarded(f64),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// Height and slope of a trajectory present at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartEntry {
    pub height: f64,
    pub slope: f64,
}

impl StartEntry {
    pub const RESIDENT: StartEntry = StartEntry {
        height: 1.0,
        slope: 0.0,
    };

    pub fn new(height: f64, slope: f64) -> Self {
        Self { height, slope }
    }

    fn is_admissible(&self) -> bool {
        let (h, v) = (self.height, self.slope);
        h.is_finite() && v.is_finite() && ((h == 0.0 && v >= 0.0) || (h > 0.0 && h < 1.0) || (h == 1.0 && v <= 0.0))
    }
}

/// A trajectory switched on at `time` with `slope`.
///
/// `increment` is the fitness gain over the resident at immigration time. It
/// equals `slope` for contenders and is kept for mutations lost to drift,
/// which immigrate with slope 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationEntry {
    pub time: f64,
    pub slope: f64,
    pub increment: f64,
}

impl ImmigrationEntry {
    pub fn new(time: f64, slope: f64) -> Self {
        Self {
            time,
            slope,
            increment: slope,
        }
    }
}

impl From<InputEvent> for ImmigrationEntry {
    fn from(e: InputEvent) -> Self {
        Self {
            time: e.time,
            slope: if e.contender { e.increment } else { 0.0 },
            increment: e.increment,
        }
    }
}

/// Linear piece starting at `start_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_time: f64,
    pub start_height: f64,
    pub slope: f64,
}

impl Segment {
    fn height_at(&self, t: f64) -> f64 {
        (self.start_height + self.slope * (t - self.start_time)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Sits at height 0 with slope 0 and never moves.
    Latent,
    Active,
    Resident,
    Extinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: i64,
    pub birth_time: f64,
    pub parent: Option<i64>,
    pub initial_slope: f64,
    pub increment: f64,
    pub fitness: f64,
    pub segments: Vec<Segment>,
    pub status: Status,
    pub extinction_time: Option<f64>,
}

impl Trajectory {
    fn current(&self) -> &Segment {
        self.segments.last().expect("trajectory has a segment")
    }

    fn segment_at(&self, t: f64) -> Option<&Segment> {
        if t < self.birth_time {
            return None;
        }
        let k = self.segments.partition_point(|s| s.start_time <= t);
        Some(&self.segments[k.saturating_sub(1)])
    }

    /// Height at `t`; 0 before birth.
    pub fn height_at(&self, t: f64) -> f64 {
        self.segment_at(t).map_or(0.0, |s| s.height_at(t))
    }

    /// Right slope at `t`; 0 before birth.
    pub fn slope_at(&self, t: f64) -> f64 {
        self.segment_at(t).map_or(0.0, |s| s.slope)
    }

    pub fn is_contender(&self) -> bool {
        self.initial_slope > 0.0
    }

    fn push_segment(&mut self, seg: Segment) {
        match self.segments.last_mut() {
            Some(last) if last.start_time == seg.start_time => *last = seg,
            _ => self.segments.push(seg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Immigration {
        time: f64,
        id: i64,
        parent: i64,
        slope: f64,
        fitness: f64,
    },
    ResidentChange {
        time: f64,
        resident: i64,
        previous: i64,
        /// Pre-hit slope of the new resident.
        v_star: f64,
        /// Resident fitness after the change.
        fitness: f64,
        /// Largest slope among trajectories of positive height right after the kink.
        max_post_slope: f64,
    },
    Extinction {
        time: f64,
        id: i64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::Immigration { time, .. } | Event::ResidentChange { time, .. } | Event::Extinction { time, .. } => {
                *time
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Event::Immigration { .. } => "immigration",
            Event::ResidentChange { .. } => "resident_change",
            Event::Extinction { .. } => "extinction",
        }
    }

    /// A resident change after which no trajectory of positive height rises.
    pub fn is_solitary_change(&self) -> bool {
        matches!(self, Event::ResidentChange { max_post_slope, .. } if *max_post_slope <= SLOPE_TOL)
    }
}

/// The earliest thing that will happen next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upcoming {
    Immigration { time: f64 },
    Hit { time: f64, id: i64 },
    Extinction { time: f64, id: i64 },
    Stalled,
}

impl Upcoming {
    pub fn time(&self) -> Option<f64> {
        match self {
            Upcoming::Immigration { time } | Upcoming::Hit { time, .. } | Upcoming::Extinction { time, .. } => {
                Some(*time)
            }
            Upcoming::Stalled => None,
        }
    }
}

/// Parent links of the mutation tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenealogyTree {
    pub parents: BTreeMap<i64, i64>,
}

impl GenealogyTree {
    /// `id` followed by its ancestors up to a root.
    pub fn lineage(&self, id: i64) -> Vec<i64> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(&p) = self.parents.get(&cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn edges(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.parents.iter().map(|(&c, &p)| (p, c))
    }

    /// Every child has a strictly smaller parent, so the links form a tree.
    pub fn validate(&self) -> Result<(), PitError> {
        for (&child, &parent) in &self.parents {
            if parent >= child {
                return Err(PitError::Invariant(format!("parent {parent} of {child} is not older")));
            }
        }
        Ok(())
    }
}

fn tol_at(t: f64) -> f64 {
    TIME_TOL * t.abs().max(1.0)
}

/// State of a trajectory system driven by a stream of immigrations.
#[derive(Debug)]
pub struct PitState<I: Iterator<Item = ImmigrationEntry>> {
    trajectories: Vec<Trajectory>,
    offset: i64,
    start_count: usize,
    active: Vec<usize>,
    resident: usize,
    f0: f64,
    fitness: f64,
    clock: f64,
    log: Vec<Event>,
    /// `(time, fitness after)` of every resident change.
    changes: Vec<(f64, f64)>,
    pending: Peekable<I>,
    next_id: i64,
    last_immigration: f64,
    immigrant_slope_sum: f64,
    /// Time and resident fitness from which the recorded history starts.
    history_start: (f64, f64),
}

impl<I: Iterator<Item = ImmigrationEntry>> PitState<I> {
    /// Starting configuration `start`, immigrations `immigration` and initial resident fitness `f0`.
    ///
    /// The unique `(1, 0)` entry gets id 0; the other start entries get ids
    /// `-(k-1), ..., -1` in listed order. Immigrants are numbered from 1.
    pub fn new(start: &[StartEntry], immigration: I, f0: f64) -> Result<Self, PitError> {
        let resident_pos = start
            .iter()
            .position(|e| *e == StartEntry::RESIDENT)
            .ok_or_else(|| PitError::Configuration("no (1, 0) entry".into()))?;
        if start.iter().filter(|e| **e == StartEntry::RESIDENT).count() > 1 {
            return Err(PitError::Configuration("more than one (1, 0) entry".into()));
        }
        for (i, a) in start.iter().enumerate() {
            if !a.is_admissible() {
                return Err(PitError::Configuration(format!(
                    "entry ({}, {}) is not an admissible height/slope pair",
                    a.height, a.slope
                )));
            }
            if start[..i].contains(a) {
                return Err(PitError::Configuration(format!(
                    "duplicate entry ({}, {})",
                    a.height, a.slope
                )));
            }
        }
        if !f0.is_finite() {
            return Err(PitError::Configuration("f0 must be finite".into()));
        }

        let k = start.len();
        let mut ordered: Vec<&StartEntry> = start
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != resident_pos)
            .map(|(_, e)| e)
            .collect();
        ordered.push(&start[resident_pos]);
        let offset = k as i64 - 1;
        let mut trajectories = Vec::with_capacity(k);
        let mut active = Vec::new();
        for (idx, e) in ordered.into_iter().enumerate() {
            let id = idx as i64 - offset;
            let status = if id == 0 {
                Status::Resident
            } else if e.height == 0.0 && e.slope == 0.0 {
                Status::Latent
            } else {
                Status::Active
            };
            if matches!(status, Status::Active | Status::Resident) {
                active.push(idx);
            }
            trajectories.push(Trajectory {
                id,
                birth_time: 0.0,
                parent: None,
                initial_slope: e.slope,
                increment: e.slope,
                fitness: f0 + e.slope,
                segments: vec![Segment {
                    start_time: 0.0,
                    start_height: e.height,
                    slope: e.slope,
                }],
                status,
                extinction_time: None,
            });
        }
        Ok(Self {
            trajectories,
            offset,
            start_count: k,
            active,
            resident: offset as usize,
            f0,
            fitness: f0,
            clock: 0.0,
            log: Vec::new(),
            changes: Vec::new(),
            pending: immigration.peekable(),
            next_id: 1,
            last_immigration: 0.0,
            immigrant_slope_sum: 0.0,
            history_start: (0.0, f0),
        })
    }

    /// A single resident at height 1 with fitness 0.
    pub fn homogeneous(immigration: I) -> Self {
        Self::new(&[StartEntry::RESIDENT], immigration, 0.0).expect("valid homogeneous start")
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// Resident fitness at the current clock.
    pub fn resident_fitness(&self) -> f64 {
        self.fitness
    }

    pub fn resident_id(&self) -> i64 {
        self.trajectories[self.resident].id
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Number of trajectories present at time 0.
    pub fn start_count(&self) -> usize {
        self.start_count
    }

    pub fn trajectory(&self, id: i64) -> Result<&Trajectory, PitError> {
        let idx = id + self.offset;
        if idx < 0 {
            return Err(PitError::UnknownId(id));
        }
        self.trajectories.get(idx as usize).ok_or(PitError::UnknownId(id))
    }

    pub fn trajectory_path(&self, id: i64) -> Result<&[Segment], PitError> {
        Ok(&self.trajectory(id)?.segments)
    }

    /// Right-continuous resident fitness as `(time, value)` steps, starting at `(0, f0)`.
    pub fn resident_fitness_path(&self) -> Vec<(f64, f64)> {
        std::iter::once(self.history_start)
            .chain(self.changes.iter().copied())
            .collect()
    }

    /// Resident fitness at `t <= clock`.
    pub fn fitness_at(&self, t: f64) -> f64 {
        let k = self.changes.partition_point(|(r, _)| *r <= t);
        if k == 0 {
            self.history_start.1
        } else {
            self.changes[k - 1].1
        }
    }

    pub fn resident_change_count(&self) -> usize {
        self.changes.len()
    }

    pub fn genealogy(&self) -> GenealogyTree {
        GenealogyTree {
            parents: self
                .trajectories
                .iter()
                .filter_map(|t| t.parent.map(|p| (t.id, p)))
                .collect(),
        }
    }

    /// Ids of the trajectories still able to move.
    pub fn active_ids(&self) -> Vec<i64> {
        self.active.iter().map(|&i| self.trajectories[i].id).collect()
    }

    /// Earliest upcoming event, with hits ahead of immigrations at equal times.
    pub fn next_event(&mut self) -> Upcoming {
        let mut best = Upcoming::Stalled;
        let mut best_t = f64::INFINITY;
        for &idx in &self.active {
            let tr = &self.trajectories[idx];
            if let Some((t, hit)) = Self::own_event_time(tr, idx == self.resident) {
                if t < best_t || (t == best_t && hit && matches!(best, Upcoming::Extinction { .. })) {
                    best_t = t;
                    best = if hit {
                        Upcoming::Hit { time: t, id: tr.id }
                    } else {
                        Upcoming::Extinction { time: t, id: tr.id }
                    };
                }
            }
        }
        if let Some(e) = self.pending.peek() {
            if e.time < best_t - tol_at(e.time) {
                best = Upcoming::Immigration { time: e.time };
            }
        }
        best
    }

    /// Time at which a trajectory reaches 1 (`true`) or 0 (`false`) on its current piece.
    fn own_event_time(tr: &Trajectory, is_resident: bool) -> Option<(f64, bool)> {
        let seg = tr.current();
        if is_resident {
            return None;
        }
        if seg.slope > 0.0 && seg.start_height < 1.0 {
            Some((seg.start_time + (1.0 - seg.start_height) / seg.slope, true))
        } else if seg.slope < 0.0 && seg.start_height > 0.0 {
            Some((seg.start_time + seg.start_height / -seg.slope, false))
        } else {
            None
        }
    }

    /// Processes all events due at the next event time if it is at most `until`.
    ///
    /// Simultaneous events are handled as absorptions at 0 first, then one
    /// resident change for all trajectories reaching 1, then immigrations.
    /// Returns the number of events logged, or `None` if nothing is due.
    pub fn step(&mut self, until: f64) -> Result<Option<usize>, PitError> {
        let Some(t) = self.next_event().time() else {
            return Ok(None);
        };
        if t > until {
            return Ok(None);
        }
        let t = t.max(self.clock);
        let tol = tol_at(t);
        // a slightly earlier immigration in the group sets the group time, so the log stays ordered
        let t = match self.pending.peek() {
            Some(e) if e.time <= t + tol && e.time >= self.clock => t.min(e.time),
            _ => t,
        };
        let before = self.log.len();

        let mut extinct = Vec::new();
        let mut hitters = Vec::new();
        for &idx in &self.active {
            if let Some((te, hit)) = Self::own_event_time(&self.trajectories[idx], idx == self.resident) {
                if te <= t + tol {
                    if hit {
                        hitters.push(idx);
                    } else {
                        extinct.push(idx);
                    }
                }
            }
        }
        for &idx in &extinct {
            let tr = &mut self.trajectories[idx];
            tr.push_segment(Segment {
                start_time: t,
                start_height: 0.0,
                slope: 0.0,
            });
            tr.status = Status::Extinct;
            tr.extinction_time = Some(t);
            self.log.push(Event::Extinction { time: t, id: tr.id });
        }
        if !extinct.is_empty() {
            self.active.retain(|i| !extinct.contains(i));
        }
        if !hitters.is_empty() {
            self.apply_resident_change(t, &hitters)?;
        }
        while let Some(e) = self.pending.peek() {
            if e.time > t + tol {
                break;
            }
            let e = self.pending.next().expect("peeked");
            self.immigrate(e)?;
        }
        self.clock = t;
        self.check_single_resident()?;
        Ok(Some(self.log.len() - before))
    }

    /// Kinks every trajectory of positive height by the largest pre-hit slope
    /// among `hitters`; the steepest hitter becomes resident.
    pub fn apply_resident_change(&mut self, t: f64, hitters: &[usize]) -> Result<(), PitError> {
        let mut chosen: Option<usize> = None;
        for &idx in hitters {
            let tr = &self.trajectories[idx];
            let h = tr.current().start_height + tr.current().slope * (t - tr.current().start_time);
            // a steep slope turns the rounding of the hit time into a visible height error
            let slack = HEIGHT_TOL + 4.0 * tr.current().slope.abs() * tol_at(t);
            if (h - 1.0).abs() > slack {
                return Err(PitError::Invariant(format!(
                    "trajectory {} reported at height 1 but is at {h}",
                    tr.id
                )));
            }
            chosen = match chosen {
                None => Some(idx),
                Some(c) => {
                    let (vc, vi) = (self.trajectories[c].current().slope, tr.current().slope);
                    if vi > vc || (vi == vc && tr.id < self.trajectories[c].id) {
                        Some(idx)
                    } else {
                        Some(c)
                    }
                }
            };
        }
        let new = chosen.ok_or_else(|| PitError::Invariant("resident change without a hitter".into()))?;
        let v_star = self.trajectories[new].current().slope;
        let previous = self.resident;
        let mut max_post_slope = f64::NEG_INFINITY;
        for &idx in &self.active {
            let tr = &mut self.trajectories[idx];
            let seg = *tr.current();
            let h = if hitters.contains(&idx) { 1.0 } else { seg.height_at(t) };
            if h <= 0.0 {
                continue;
            }
            let slope = if idx == new { 0.0 } else { seg.slope - v_star };
            max_post_slope = max_post_slope.max(slope);
            tr.push_segment(Segment {
                start_time: t,
                start_height: h,
                slope,
            });
        }
        self.trajectories[previous].status = Status::Active;
        self.trajectories[new].status = Status::Resident;
        self.resident = new;
        self.fitness += v_star;
        self.changes.push((t, self.fitness));
        self.log.push(Event::ResidentChange {
            time: t,
            resident: self.trajectories[new].id,
            previous: self.trajectories[previous].id,
            v_star,
            fitness: self.fitness,
            max_post_slope,
        });
        Ok(())
    }

    fn immigrate(&mut self, e: ImmigrationEntry) -> Result<(), PitError> {
        if e.time <= self.last_immigration || !e.time.is_finite() {
            return Err(PitError::UnorderedImmigration {
                time: e.time,
                previous: self.last_immigration,
            });
        }
        if e.slope < 0.0 || !e.slope.is_finite() || !e.increment.is_finite() {
            return Err(PitError::InvalidImmigration {
                time: e.time,
                slope: e.slope,
            });
        }
        self.last_immigration = e.time;
        let id = self.next_id;
        self.next_id += 1;
        let parent = &self.trajectories[self.resident];
        let parent_id = parent.id;
        let fitness = parent.fitness + e.increment;
        let status = if e.slope > 0.0 { Status::Active } else { Status::Latent };
        self.trajectories.push(Trajectory {
            id,
            birth_time: e.time,
            parent: Some(parent_id),
            initial_slope: e.slope,
            increment: e.increment,
            fitness,
            segments: vec![Segment {
                start_time: e.time,
                start_height: 0.0,
                slope: e.slope,
            }],
            status,
            extinction_time: None,
        });
        if status == Status::Active {
            self.active.push(self.trajectories.len() - 1);
            self.immigrant_slope_sum += e.slope;
        }
        self.log.push(Event::Immigration {
            time: e.time,
            id,
            parent: parent_id,
            slope: e.slope,
            fitness,
        });
        Ok(())
    }

    fn check_single_resident(&self) -> Result<(), PitError> {
        let count = self
            .active
            .iter()
            .filter(|&&i| {
                let s = self.trajectories[i].current();
                s.start_height == 1.0 && s.slope == 0.0
            })
            .count();
        if count != 1 {
            return Err(PitError::Invariant(format!(
                "{count} trajectories at height 1 with slope 0 at time {}",
                self.clock
            )));
        }
        Ok(())
    }

    /// Processes every event up to `until` and moves the clock there.
    /// Returns the events logged during the call.
    pub fn advance(&mut self, until: f64) -> Result<&[Event], PitError> {
        if until < self.clock {
            return Err(PitError::TimeReversal {
                until,
                clock: self.clock,
            });
        }
        let before = self.log.len();
        while self.step(until)?.is_some() {}
        self.clock = until;
        Ok(&self.log[before..])
    }

    /// Runs until `count` solitary resident changes have occurred or `max_time` is reached.
    pub fn advance_until_solitary(&mut self, count: usize, max_time: f64) -> Result<usize, PitError> {
        let mut seen = self.log.iter().filter(|e| e.is_solitary_change()).count();
        while seen < count {
            let before = self.log.len();
            if self.step(max_time)?.is_none() {
                self.clock = self.clock.max(max_time.min(self.clock.max(max_time)));
                break;
            }
            seen += self.log[before..].iter().filter(|e| e.is_solitary_change()).count();
        }
        Ok(seen)
    }

    /// Checks the fitness identities on the recorded history.
    ///
    /// * the resident fitness equals `f0` plus the sum of all pre-hit slopes,
    ///   and equals the fitness of the trajectory that became resident;
    /// * between birth and absorption, a trajectory's slope drops by exactly
    ///   the resident fitness gained;
    /// * from a homogeneous start, the resident fitness never exceeds `f0` plus
    ///   the sum of immigrant slopes born so far.
    pub fn check_identities(&self) -> Result<(), PitError> {
        if self.history_start.0 > 0.0 {
            return Err(PitError::HistoryDiscarded(self.history_start.0));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);

        let mut sum = self.f0;
        for e in &self.log {
            if let Event::ResidentChange {
                v_star,
                fitness,
                resident,
                time,
                ..
            } = e
            {
                sum += v_star;
                if !close(sum, *fitness) {
                    return Err(PitError::Invariant(format!(
                        "fitness {fitness} at {time} differs from f0 + sum of kinks {sum}"
                    )));
                }
                let m = self.trajectory(*resident)?.fitness;
                if !close(m, *fitness) {
                    return Err(PitError::Invariant(format!(
                        "resident {resident} has fitness {m} but F = {fitness} at {time}"
                    )));
                }
            }
        }
        if !close(sum, self.fitness) {
            return Err(PitError::Invariant("final fitness differs from the kink sum".into()));
        }

        for tr in &self.trajectories {
            let Some(first) = tr.segments.first() else { continue };
            let f_birth = self.fitness_at(tr.birth_time);
            for seg in tr.segments.iter().skip(1) {
                if seg.start_height <= 0.0 {
                    continue;
                }
                let f_now = self.fitness_at(seg.start_time);
                let dv = seg.slope - first.slope;
                let df = f_birth - f_now;
                // both sides are differences, so the rounding scale is that of the operands
                let scale = [seg.slope, first.slope, f_birth, f_now, 1.0]
                    .iter()
                    .fold(0.0f64, |m, x| m.max(x.abs()));
                if (dv - df).abs() > 1e-9 * scale {
                    return Err(PitError::Invariant(format!(
                        "trajectory {} slope change {dv} at {} but fitness change {}",
                        tr.id, seg.start_time, -df
                    )));
                }
            }
        }

        if self.start_count == 1 {
            let mut births = self
                .trajectories
                .iter()
                .filter(|t| t.parent.is_some())
                .map(|t| (t.birth_time, t.initial_slope))
                .peekable();
            let mut bound = self.f0;
            for &(r, f) in &self.changes {
                while let Some(&(b, s)) = births.peek() {
                    if b > r {
                        break;
                    }
                    bound += s;
                    births.next();
                }
                if f > bound + 1e-9 * bound.abs().max(1.0) {
                    return Err(PitError::Invariant(format!(
                        "fitness {f} at {r} exceeds the sum of increments {bound}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Drops the event log, the resident-change record and every trajectory
    /// older than the oldest one still moving.
    ///
    /// Keeps memory bounded in long runs. Afterwards the fitness path starts at
    /// the current clock and [`Self::check_identities`] is unavailable.
    pub fn forget_history(&mut self) {
        let keep_from = self
            .active
            .iter()
            .copied()
            .min()
            .unwrap_or(self.resident)
            .min(self.resident);
        self.trajectories.drain(..keep_from);
        self.offset -= keep_from as i64;
        for a in &mut self.active {
            *a -= keep_from;
        }
        self.resident -= keep_from;
        self.log.clear();
        self.changes.clear();
        self.history_start = (self.clock, self.fitness);
    }

    /// Sum of the slopes of all contending immigrants so far.
    pub fn immigrant_slope_sum(&self) -> f64 {
        self.immigrant_slope_sum
    }
}

/// Runs a homogeneous system on a finite list of immigrations up to `horizon`.
pub fn replay(
    immigration: Vec<ImmigrationEntry>,
    horizon: f64,
) -> Result<PitState<std::vec::IntoIter<ImmigrationEntry>>, PitError> {
    let mut state = PitState::homogeneous(immigration.into_iter());
    state.advance(horizon)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn six_mutation_example_input() -> Vec<ImmigrationEntry> {
        let times = [1.2, 1.4, 1.6, 2.5, 2.9, 3.2];
        let contender = [true, false, true, true, false, true];
        // increments of the two mutations lost to drift are free choices
        let increments = [0.2, 0.5, 1.0, 2.0, 0.5, 1.6];
        times
            .iter()
            .zip(contender)
            .zip(increments)
            .enumerate()
            .map(|(i, ((&time, contender), increment))| {
                InputEvent {
                    index: i as u64 + 1,
                    time,
                    increment,
                    contender,
                }
                .into()
            })
            .collect()
    }

    #[test]
    fn empty_immigration_keeps_one_eternal_resident() {
        let mut s = PitState::homogeneous(std::iter::empty());
        assert_eq!(s.next_event(), Upcoming::Stalled);
        s.advance(100.0).unwrap();
        assert_eq!(s.resident_fitness(), 0.0);
        assert_eq!(s.resident_fitness_path(), vec![(0.0, 0.0)]);
        assert!(s.events().is_empty());
    }

    #[test]
    fn start_configuration_errors() {
        let two = [StartEntry::RESIDENT, StartEntry::RESIDENT];
        assert!(matches!(
            PitState::new(&two, std::iter::empty(), 0.0),
            Err(PitError::Configuration(_))
        ));
        let none = [StartEntry::new(0.5, 1.0)];
        assert!(PitState::new(&none, std::iter::empty(), 0.0).is_err());
        let dup = [
            StartEntry::new(0.5, 1.0),
            StartEntry::new(0.5, 1.0),
            StartEntry::RESIDENT,
        ];
        assert!(PitState::new(&dup, std::iter::empty(), 0.0).is_err());
        let outside = [StartEntry::new(1.0, 0.5), StartEntry::RESIDENT];
        assert!(PitState::new(&outside, std::iter::empty(), 0.0).is_err());
    }

    #[test]
    fn linear_hitting_time() {
        let start = [StartEntry::new(0.25, 0.5), StartEntry::RESIDENT];
        let mut s = PitState::new(&start, std::iter::empty(), 0.0).unwrap();
        assert_eq!(s.next_event(), Upcoming::Hit { time: 1.5, id: -1 });
    }

    #[test]
    fn six_mutation_example_next_hit_after_last_early_immigration() {
        let mut s = PitState::homogeneous(six_mutation_example_input().into_iter());
        s.advance(1.6).unwrap();
        match s.next_event() {
            // the next immigration at 2.5 comes first; the hit of trajectory 3 is at 2.6
            Upcoming::Immigration { time } => assert_eq!(time, 2.5),
            other => panic!("unexpected {other:?}"),
        }
        let mut s = PitState::homogeneous(six_mutation_example_input().into_iter().take(3));
        s.advance(1.6).unwrap();
        match s.next_event() {
            Upcoming::Hit { time, id } => {
                assert_eq!(id, 3);
                assert_abs_diff_eq!(time, 2.6, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn six_mutation_example_kinks_at_first_resident_change() {
        let s = replay(six_mutation_example_input(), 2.6 + 1e-9).unwrap();
        assert_eq!(s.resident_id(), 3);
        assert_abs_diff_eq!(s.resident_fitness(), 1.0, epsilon = 1e-12);
        let t = 2.6 + 1e-9;
        assert_abs_diff_eq!(s.trajectory(0).unwrap().slope_at(t), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.trajectory(1).unwrap().slope_at(t), -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.trajectory(4).unwrap().slope_at(t), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn six_mutation_example_full_replay() {
        let s = replay(six_mutation_example_input(), 5.0).unwrap();
        let path = s.resident_fitness_path();
        assert_eq!(path.len(), 4);
        let expected = [(0.0, 0.0), (2.6, 1.0), (3.4, 2.0), (3.4 + 0.68 / 0.6, 2.6)];
        for ((t, f), (et, ef)) in path.iter().zip(expected) {
            assert_abs_diff_eq!(*t, et, epsilon = 1e-9);
            assert_abs_diff_eq!(*f, ef, epsilon = 1e-9);
        }
        let parents: Vec<i64> = (1..=6).map(|i| s.trajectory(i).unwrap().parent.unwrap()).collect();
        assert_eq!(parents, vec![0, 0, 0, 0, 3, 3]);
        s.check_identities().unwrap();
        s.genealogy().validate().unwrap();
        // jumps telescope to the final fitness
        let jumps: f64 = path.windows(2).map(|w| w[1].1 - w[0].1).sum();
        assert_abs_diff_eq!(jumps, s.resident_fitness() - s.f0(), epsilon = 1e-12);
    }

    #[test]
    fn six_mutation_example_trajectory_paths() {
        let s = replay(six_mutation_example_input(), 5.0).unwrap();
        let six = s.trajectory(6).unwrap();
        assert_abs_diff_eq!(six.height_at(3.4), 0.32, epsilon = 1e-9);
        assert_abs_diff_eq!(six.slope_at(3.4), 0.6, epsilon = 1e-12);
        let zero = s.trajectory(0).unwrap();
        assert_eq!(zero.status, Status::Extinct);
        assert_abs_diff_eq!(zero.extinction_time.unwrap(), 3.5, epsilon = 1e-9);
        let two = s.trajectory(2).unwrap();
        assert_eq!(two.status, Status::Latent);
        for t in [0.0, 1.4, 2.0, 4.9] {
            assert_eq!(two.height_at(t), 0.0);
        }
        let one = s.trajectory(1).unwrap();
        assert_abs_diff_eq!(one.extinction_time.unwrap(), 2.95, epsilon = 1e-9);
        assert!(matches!(s.trajectory_path(17), Err(PitError::UnknownId(17))));
    }

    #[test]
    fn four_entry_start_start_configuration() {
        let start = [
            StartEntry::new(0.1, 1.5),
            StartEntry::new(0.3, 1.0),
            StartEntry::new(0.8, 0.8),
            StartEntry::RESIDENT,
        ];
        let mut s = PitState::new(&start, std::iter::empty(), 0.0).unwrap();
        assert_eq!(s.trajectories().len(), 4);
        s.advance(2.0).unwrap();
        let times: Vec<f64> = s.resident_fitness_path().iter().skip(1).map(|p| p.0).collect();
        assert_eq!(times.len(), 2);
        assert_abs_diff_eq!(times[0], 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(times[1], 1.0, epsilon = 1e-9);
        assert_eq!(s.resident_id(), -3);
        s.check_identities().unwrap();
    }

    #[test]
    fn solitary_sweep_of_a_lone_mutant() {
        let s = replay(vec![ImmigrationEntry::new(2.0, 0.5)], 10.0).unwrap();
        let changes: Vec<&Event> = s.events().iter().filter(|e| e.kind() == "resident_change").collect();
        assert_eq!(changes.len(), 1);
        assert_abs_diff_eq!(changes[0].time(), 4.0, epsilon = 1e-12);
        assert!(changes[0].is_solitary_change());
    }

    #[test]
    fn hit_rounded_past_an_immigration_keeps_the_log_ordered() {
        // 0.2 + 1/2.5 rounds to 0.6000000000000001, just after the immigration at 0.6
        let s = replay(
            vec![ImmigrationEntry::new(0.2, 2.5), ImmigrationEntry::new(0.6, 0.5)],
            10.0,
        )
        .unwrap();
        assert!(s.events().windows(2).all(|w| w[1].time() >= w[0].time()));
        assert_eq!(s.trajectory(2).unwrap().parent, Some(1));
        assert_eq!(s.fitness_at(0.6), 2.5);
        s.check_identities().unwrap();
    }

    #[test]
    fn simultaneous_hits_form_one_change() {
        // both reach 1 at t = 1; the steeper one wins and sets v*
        let start = [
            StartEntry::new(0.5, 0.5),
            StartEntry::new(0.0, 1.0),
            StartEntry::RESIDENT,
        ];
        let mut s = PitState::new(&start, std::iter::empty(), 0.0).unwrap();
        s.advance(1.5).unwrap();
        assert_eq!(s.resident_change_count(), 1);
        assert_eq!(s.resident_id(), -1);
        assert_abs_diff_eq!(s.resident_fitness(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.trajectory(-2).unwrap().slope_at(1.0), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn immigration_at_a_hit_time_descends_from_the_new_resident() {
        let input = vec![ImmigrationEntry::new(1.0, 1.0), ImmigrationEntry::new(2.0, 0.5)];
        let s = replay(input, 5.0).unwrap();
        assert_eq!(s.trajectory(2).unwrap().parent, Some(1));
        // and it is not kinked at its birth
        assert_eq!(s.trajectory(2).unwrap().slope_at(2.0), 0.5);
    }

    #[test]
    fn unordered_immigration_is_rejected() {
        let input = vec![ImmigrationEntry::new(2.0, 1.0), ImmigrationEntry::new(1.0, 1.0)];
        assert!(matches!(replay(input, 5.0), Err(PitError::UnorderedImmigration { .. })));
        let mut s = PitState::homogeneous(std::iter::empty());
        s.advance(2.0).unwrap();
        assert!(matches!(s.advance(1.0), Err(PitError::TimeReversal { .. })));
    }
}
