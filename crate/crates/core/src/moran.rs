//! Exact jump-process simulation of the Moran model with selection and
//! mutation.
//!
//! Time is measured in generations internally and reported on the rescaled
//! clock `generations / log N`. An ordered pair of individuals of types `j`
//! and `l` (`j != l`) resamples at rate `x_j x_l (1 + (m_j - m_l)^+) / N` per
//! generation: a type `j` offspring replaces a type `l` individual. Mutations
//! hit a uniformly chosen individual and create a new type whose fitness is
//! the parent's plus the mutation increment.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::input::IncrementDistribution;
use crate::pit::GenealogyTree;

pub const DEFAULT_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoranError {
    #[error("population size must be at least 2, got {0}")]
    PopulationTooSmall(u64),
    #[error("initial counts sum to {sum}, expected {n}")]
    CountMismatch { sum: u64, n: u64 },
    #[error("{counts} initial counts but {fitness} fitness values")]
    LengthMismatch { counts: usize, fitness: usize },
    #[error("at least one initial type is required")]
    NoTypes,
    #[error("invalid run parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Source of mutation times and increments, on the rescaled clock.
#[derive(Debug, Clone)]
pub enum MutationSchedule {
    None,
    /// Mutations at rate `lambda` per rescaled time unit with increments from `gamma`.
    Poisson {
        lambda: f64,
        gamma: IncrementDistribution,
    },
    /// Mutations at the given `(time, increment)` pairs, times increasing.
    Fixed {
        events: Vec<(f64, f64)>,
        next: usize,
    },
}

impl MutationSchedule {
    pub fn fixed(events: Vec<(f64, f64)>) -> Self {
        MutationSchedule::Fixed { events, next: 0 }
    }

    fn exhausted(&self) -> bool {
        match self {
            MutationSchedule::None => true,
            MutationSchedule::Poisson { .. } => false,
            MutationSchedule::Fixed { events, next } => *next >= events.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoranEvent {
    Resampling {
        time: f64,
        born: usize,
        died: usize,
    },
    Mutation {
        time: f64,
        id: usize,
        parent: usize,
        increment: f64,
        fitness: f64,
    },
    /// No event can ever happen again.
    Stalled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub resampling: u64,
    pub mutations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pending {
    Resampling { raw_time: f64 },
    Mutation { raw_time: f64, increment: f64 },
    Stalled,
}

impl Pending {
    fn raw_time(&self) -> f64 {
        match self {
            Pending::Resampling { raw_time } | Pending::Mutation { raw_time, .. } => *raw_time,
            Pending::Stalled => f64::INFINITY,
        }
    }
}

/// Per-type counts and fitnesses of a Moran population of fixed size.
#[derive(Debug, Clone)]
pub struct MoranState {
    n: u64,
    log_n: f64,
    counts: Vec<u64>,
    fitness: Vec<f64>,
    parent: Vec<Option<usize>>,
    birth: Vec<f64>,
    live: Vec<usize>,
    initial_types: usize,
    raw_clock: f64,
    event_counts: EventCounts,
    dominant: usize,
    weights: Vec<f64>,
}

/// Homogeneous or multi-type start; type ids are the positions in `counts`.
pub fn moran_init(n: u64, counts: &[u64], fitness: &[f64]) -> Result<MoranState, MoranError> {
    MoranState::new(n, counts, fitness)
}

impl MoranState {
    pub fn new(n: u64, counts: &[u64], fitness: &[f64]) -> Result<Self, MoranError> {
        if n < 2 {
            return Err(MoranError::PopulationTooSmall(n));
        }
        if counts.is_empty() {
            return Err(MoranError::NoTypes);
        }
        if counts.len() != fitness.len() {
            return Err(MoranError::LengthMismatch {
                counts: counts.len(),
                fitness: fitness.len(),
            });
        }
        let sum: u64 = counts.iter().sum();
        if sum != n {
            return Err(MoranError::CountMismatch { sum, n });
        }
        let live: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
        let dominant = (0..counts.len())
            .max_by_key(|&i| (counts[i], std::cmp::Reverse(i)))
            .unwrap_or(0);
        Ok(Self {
            n,
            log_n: (n as f64).ln(),
            counts: counts.to_vec(),
            fitness: fitness.to_vec(),
            parent: vec![None; counts.len()],
            birth: vec![0.0; counts.len()],
            live,
            initial_types: counts.len(),
            raw_clock: 0.0,
            event_counts: EventCounts::default(),
            dominant,
            weights: Vec::new(),
        })
    }

    /// `n` individuals of a single type with fitness 0.
    pub fn homogeneous(n: u64) -> Result<Self, MoranError> {
        Self::new(n, &[n], &[0.0])
    }

    pub fn population_size(&self) -> u64 {
        self.n
    }

    pub fn log_n(&self) -> f64 {
        self.log_n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn fitness(&self) -> &[f64] {
        &self.fitness
    }

    pub fn live_types(&self) -> &[usize] {
        &self.live
    }

    pub fn mutation_count(&self) -> usize {
        self.counts.len() - self.initial_types
    }

    pub fn raw_clock(&self) -> f64 {
        self.raw_clock
    }

    pub fn rescaled_clock(&self) -> f64 {
        self.raw_clock / self.log_n
    }

    pub fn event_counts(&self) -> EventCounts {
        self.event_counts
    }

    /// Most abundant type, ties kept by the earlier holder.
    pub fn dominant(&self) -> usize {
        self.dominant
    }

    /// `log(1 + X_id) / log N`.
    pub fn log_frequency(&self, id: usize) -> f64 {
        (self.count(id) as f64).ln_1p() / self.log_n
    }

    pub fn mean_fitness(&self) -> f64 {
        self.live
            .iter()
            .map(|&i| self.counts[i] as f64 * self.fitness[i])
            .sum::<f64>()
            / self.n as f64
    }

    pub fn genealogy(&self) -> GenealogyTree {
        GenealogyTree {
            parents: self
                .parent
                .iter()
                .enumerate()
                .filter_map(|(c, p)| p.map(|p| (c as i64, p as i64)))
                .collect(),
        }
    }

    /// Rescaled birth time of each type.
    pub fn birth_times(&self) -> &[f64] {
        &self.birth
    }

    pub fn parent_of(&self, id: usize) -> Option<usize> {
        self.parent.get(id).copied().flatten()
    }

    /// Total resampling rate per generation.
    pub fn resampling_rate(&mut self) -> f64 {
        self.fill_weights();
        self.weights.iter().sum()
    }

    fn fill_weights(&mut self) {
        let k = self.live.len();
        self.weights.clear();
        self.weights.reserve(k * k);
        let inv_n = 1.0 / self.n as f64;
        for &j in &self.live {
            for &l in &self.live {
                let w = if j == l {
                    0.0
                } else {
                    let adv = (self.fitness[j] - self.fitness[l]).max(0.0);
                    self.counts[j] as f64 * self.counts[l] as f64 * (1.0 + adv) * inv_n
                };
                self.weights.push(w);
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, schedule: &MutationSchedule, rng: &mut R) -> Pending {
        self.fill_weights();
        let total: f64 = self.weights.iter().sum();
        let mutation_rate = match schedule {
            MutationSchedule::Poisson { lambda, .. } => lambda / self.log_n,
            _ => 0.0,
        };
        let rate = total + mutation_rate;
        let fixed_next = match schedule {
            MutationSchedule::Fixed { events, next } => events.get(*next).map(|&(t, a)| (t * self.log_n, a)),
            _ => None,
        };
        let candidate = if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            self.raw_clock + e / rate
        } else {
            f64::INFINITY
        };
        if let Some((t, a)) = fixed_next {
            if t <= candidate {
                return Pending::Mutation {
                    raw_time: t.max(self.raw_clock),
                    increment: a,
                };
            }
        }
        if !candidate.is_finite() {
            return Pending::Stalled;
        }
        if mutation_rate > 0.0 && rng.random::<f64>() * rate < mutation_rate {
            let MutationSchedule::Poisson { gamma, .. } = schedule else {
                unreachable!()
            };
            return Pending::Mutation {
                raw_time: candidate,
                increment: gamma.sample(rng),
            };
        }
        Pending::Resampling { raw_time: candidate }
    }

    fn apply<R: Rng + ?Sized>(&mut self, pending: Pending, schedule: &mut MutationSchedule, rng: &mut R) -> MoranEvent {
        match pending {
            Pending::Stalled => MoranEvent::Stalled,
            Pending::Resampling { raw_time } => {
                self.raw_clock = raw_time;
                let total: f64 = self.weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let k = self.live.len();
                let mut pick = None;
                for (idx, &w) in self.weights.iter().enumerate() {
                    if w > 0.0 {
                        pick = Some(idx);
                        if u < w {
                            break;
                        }
                        u -= w;
                    }
                }
                let idx = pick.expect("positive resampling rate");
                let (born, died) = (self.live[idx / k], self.live[idx % k]);
                self.counts[born] += 1;
                self.counts[died] -= 1;
                if self.counts[died] == 0 {
                    self.live.retain(|&i| i != died);
                }
                if self.counts[born] > self.counts[self.dominant] {
                    self.dominant = born;
                }
                self.event_counts.resampling += 1;
                MoranEvent::Resampling {
                    time: self.rescaled_clock(),
                    born,
                    died,
                }
            }
            Pending::Mutation { raw_time, increment } => {
                self.raw_clock = raw_time;
                if let MutationSchedule::Fixed { next, .. } = schedule {
                    *next += 1;
                }
                let mut u = rng.random_range(0..self.n);
                let mut parent = self.live[0];
                for &i in &self.live {
                    if u < self.counts[i] {
                        parent = i;
                        break;
                    }
                    u -= self.counts[i];
                }
                let id = self.counts.len();
                let fitness = self.fitness[parent] + increment;
                self.counts[parent] -= 1;
                if self.counts[parent] == 0 {
                    self.live.retain(|&i| i != parent);
                }
                self.counts.push(1);
                self.fitness.push(fitness);
                self.parent.push(Some(parent));
                self.birth.push(self.rescaled_clock());
                self.live.push(id);
                if self.counts[self.dominant] < 1 {
                    self.dominant = id;
                }
                self.event_counts.mutations += 1;
                MoranEvent::Mutation {
                    time: self.rescaled_clock(),
                    id,
                    parent,
                    increment,
                    fitness,
                }
            }
        }
    }

    /// Samples and applies the next event.
    pub fn step<R: Rng + ?Sized>(&mut self, schedule: &mut MutationSchedule, rng: &mut R) -> MoranEvent {
        let pending = self.draw(schedule, rng);
        self.apply(pending, schedule, rng)
    }
}

/// Samples and applies the next event of `state`.
pub fn moran_step<R: Rng + ?Sized>(state: &mut MoranState, schedule: &mut MutationSchedule, rng: &mut R) -> MoranEvent {
    state.step(schedule, rng)
}

/// Counts of the live types and the mean fitness at one rescaled time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time: f64,
    pub counts: Vec<(usize, u64)>,
    pub mean_fitness: f64,
}

impl TraceSample {
    fn of(state: &MoranState, time: f64) -> Self {
        let mut counts: Vec<(usize, u64)> = state.live.iter().map(|&i| (i, state.counts[i])).collect();
        counts.sort_unstable();
        Self {
            time,
            counts,
            mean_fitness: state.mean_fitness(),
        }
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts
            .binary_search_by_key(&id, |c| c.0)
            .map_or(0, |k| self.counts[k].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Landmark {
    Mutation {
        id: usize,
    },
    /// `id` becomes the most abundant type.
    Takeover {
        id: usize,
    },
}

/// Log-frequency trace of a run: uniform grid samples plus landmark samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFrequencyTrace {
    pub log_n: f64,
    pub grid: Vec<TraceSample>,
    pub landmarks: Vec<(Landmark, TraceSample)>,
}

impl LogFrequencyTrace {
    pub fn log_frequency(&self, sample: &TraceSample, id: usize) -> f64 {
        (sample.count(id) as f64).ln_1p() / self.log_n
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.iter().map(|s| s.time).collect()
    }
}

/// Whether mutation `id` reached `log N` individuals within rescaled time `1 / sqrt(log N)` of its birth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContenderIndicator {
    pub id: usize,
    pub birth_time: f64,
    pub eval_time: f64,
    pub count: u64,
    pub contender: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    pub grid_step: f64,
    /// Stop once a single type remains and no mutation can follow.
    pub stop_when_absorbed: bool,
}

impl RunConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            grid_step: DEFAULT_GRID_STEP,
            stop_when_absorbed: true,
        }
    }

    fn validate(&self) -> Result<(), MoranError> {
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(MoranError::InvalidParameter {
                name: "horizon",
                value: self.horizon,
            });
        }
        if self.grid_step <= 0.0 || !self.grid_step.is_finite() {
            return Err(MoranError::InvalidParameter {
                name: "grid_step",
                value: self.grid_step,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MoranRun {
    pub trace: LogFrequencyTrace,
    pub contenders: Vec<ContenderIndicator>,
    pub genealogy: GenealogyTree,
    pub events: EventCounts,
    pub state: MoranState,
    /// Rescaled time at which the run ended.
    pub end_time: f64,
}

impl MoranRun {
    pub fn contender(&self, id: usize) -> Option<&ContenderIndicator> {
        self.contenders.iter().find(|c| c.id == id)
    }
}

/// Runs `state` up to the rescaled `config.horizon`.
///
/// With a fixed schedule, mutations happen exactly at the supplied rescaled
/// times with the supplied increments, each on a uniformly chosen individual.
pub fn moran_run<R: Rng + ?Sized>(
    mut state: MoranState,
    config: RunConfig,
    mut schedule: MutationSchedule,
    rng: &mut R,
) -> Result<MoranRun, MoranError> {
    config.validate()?;
    let log_n = state.log_n;
    let delay = 1.0 / log_n.sqrt();
    let grid_len = (config.horizon / config.grid_step + 1e-9).floor() as usize + 1;
    let mut grid = Vec::with_capacity(grid_len.min(1 << 16));
    let mut landmarks = Vec::new();
    let mut contenders = Vec::new();
    // (raw eval time, id) of contender checks still due, in increasing time
    let mut checks: std::collections::VecDeque<(f64, usize)> = Default::default();
    let raw_horizon = config.horizon * log_n;
    let mut next_grid = 0usize;

    let flush = |state: &MoranState,
                 upto: f64,
                 grid: &mut Vec<TraceSample>,
                 next_grid: &mut usize,
                 checks: &mut std::collections::VecDeque<(f64, usize)>,
                 contenders: &mut Vec<ContenderIndicator>| {
        while *next_grid < grid_len {
            let t = *next_grid as f64 * config.grid_step;
            if t * log_n >= upto {
                break;
            }
            grid.push(TraceSample::of(state, t));
            *next_grid += 1;
        }
        while let Some(&(raw, id)) = checks.front() {
            if raw >= upto {
                break;
            }
            let count = state.count(id);
            contenders.push(ContenderIndicator {
                id,
                birth_time: state.birth[id],
                eval_time: raw / log_n,
                count,
                contender: count as f64 >= log_n,
            });
            checks.pop_front();
        }
    };

    loop {
        if config.stop_when_absorbed && state.live.len() == 1 && schedule.exhausted() {
            break;
        }
        let pending = state.draw(&schedule, rng);
        let t = pending.raw_time();
        if t > raw_horizon {
            break;
        }
        flush(&state, t, &mut grid, &mut next_grid, &mut checks, &mut contenders);
        let previous_dominant = state.dominant;
        let event = state.apply(pending, &mut schedule, rng);
        match event {
            MoranEvent::Stalled => break,
            MoranEvent::Mutation { id, time, .. } => {
                checks.push_back(((time + delay) * log_n, id));
                landmarks.push((Landmark::Mutation { id }, TraceSample::of(&state, time)));
            }
            MoranEvent::Resampling { .. } => {}
        }
        if state.dominant != previous_dominant {
            landmarks.push((
                Landmark::Takeover { id: state.dominant },
                TraceSample::of(&state, state.rescaled_clock()),
            ));
        }
    }
    // nothing changes after the last event, so the remaining samples and checks see the final state
    let end_raw = raw_horizon.next_up();
    flush(&state, end_raw, &mut grid, &mut next_grid, &mut checks, &mut contenders);
    let end_time = if config.stop_when_absorbed && state.live.len() == 1 && schedule.exhausted() {
        state.rescaled_clock()
    } else {
        config.horizon
    };
    Ok(MoranRun {
        trace: LogFrequencyTrace { log_n, grid, landmarks },
        contenders,
        genealogy: state.genealogy(),
        events: state.event_counts,
        state,
        end_time,
    })
}
