//! Fitness-increment laws, Poissonian mutation input and the contender
//! (thinned and size-biased) law derived from them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadratureError};

/// Relative tolerance for the contender rate when it has no closed form.
pub const RATE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("mixture weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("mixture needs at least one component with matching weight")]
    EmptyMixture,
    #[error("cannot parse increment law `{0}`")]
    Parse(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

fn positive(name: &'static str, value: f64) -> Result<(), InputError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(InputError::InvalidParameter {
            name,
            value,
            reason: "must be finite and positive",
        })
    }
}

/// Law of the fitness increments, supported on `(0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementDistribution {
    PointMass {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Density `alpha * scale^alpha / a^(alpha + 1)` on `[scale, inf)`.
    Pareto {
        scale: f64,
        alpha: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<IncrementDistribution>,
    },
}

/// Part of the half line an integral runs over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    /// `[from, inf)` when `inclusive`, `(from, inf)` otherwise.
    Above {
        from: f64,
        inclusive: bool,
    },
}

impl Region {
    fn contains(self, x: f64) -> bool {
        match self {
            Region::All => true,
            Region::Above { from, inclusive } => x > from || (inclusive && x == from),
        }
    }

    fn lower(self) -> f64 {
        match self {
            Region::All => 0.0,
            Region::Above { from, .. } => from.max(0.0),
        }
    }
}

impl IncrementDistribution {
    pub fn point_mass(value: f64) -> Result<Self, InputError> {
        let d = Self::PointMass { value };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, InputError> {
        let d = Self::Uniform { low, high };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(mean: f64) -> Result<Self, InputError> {
        let d = Self::Exponential { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn pareto(scale: f64, alpha: f64) -> Result<Self, InputError> {
        let d = Self::Pareto { scale, alpha };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<IncrementDistribution>) -> Result<Self, InputError> {
        let d = Self::Mixture { weights, components };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), InputError> {
        match self {
            Self::PointMass { value } => positive("value", *value),
            Self::Uniform { low, high } => {
                positive("low", *low)?;
                positive("high", *high)?;
                if high <= low {
                    return Err(InputError::InvalidParameter {
                        name: "high",
                        value: *high,
                        reason: "must exceed low",
                    });
                }
                Ok(())
            }
            Self::Exponential { mean } => positive("mean", *mean),
            Self::Pareto { scale, alpha } => {
                positive("scale", *scale)?;
                positive("alpha", *alpha)
            }
            Self::Mixture { weights, components } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(InputError::EmptyMixture);
                }
                for w in weights {
                    positive("weight", *w)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(InputError::WeightSum(total));
                }
                components.iter().try_for_each(|c| c.validate())
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::PointMass { value } => *value,
            Self::Uniform { low, high } => rng.random_range(*low..=*high),
            Self::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            Self::Pareto { scale, alpha } => Pareto::new(*scale, *alpha)
                .expect("validated Pareto parameters")
                .sample(rng),
            Self::Mixture { weights, components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                components.last().expect("non-empty mixture").sample(rng)
            }
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            Self::PointMass { value } => Some(*value),
            Self::Uniform { low, high } => Some(0.5 * (low + high)),
            Self::Exponential { mean } => Some(*mean),
            Self::Pareto { scale, alpha } => (*alpha > 1.0).then(|| alpha * scale / (alpha - 1.0)),
            Self::Mixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| c.mean().map(|m| w * m))
                .sum(),
        }
    }

    pub fn has_finite_mean(&self) -> bool {
        self.mean().is_some()
    }

    pub fn has_finite_second_moment(&self) -> bool {
        match self {
            Self::Pareto { alpha, .. } => *alpha > 2.0,
            Self::Mixture { components, .. } => components.iter().all(|c| c.has_finite_second_moment()),
            _ => true,
        }
    }

    /// Supremum of the support, when bounded.
    pub fn support_sup(&self) -> Option<f64> {
        match self {
            Self::PointMass { value } => Some(*value),
            Self::Uniform { high, .. } => Some(*high),
            Self::Exponential { .. } | Self::Pareto { .. } => None,
            Self::Mixture { components, .. } => components
                .iter()
                .map(|c| c.support_sup())
                .try_fold(0.0_f64, |acc, s| s.map(|s| acc.max(s))),
        }
    }

    /// `int_region f(a) gamma(da)`.
    ///
    /// Unbounded supports are mapped to the unit interval by `u = a / (1 + a)`.
    pub fn integrate<F>(&self, f: &F, region: Region, rel_tol: f64) -> Result<f64, QuadratureError>
    where
        F: Fn(f64) -> f64,
    {
        match self {
            Self::PointMass { value } => Ok(if region.contains(*value) { f(*value) } else { 0.0 }),
            Self::Uniform { low, high } => {
                let start = low.max(region.lower());
                if start >= *high {
                    return Ok(0.0);
                }
                let width = high - low;
                quad::integrate(|a| f(a) / width, start, *high, rel_tol)
            }
            Self::Exponential { mean } => {
                let m = *mean;
                half_line(f, region.lower(), rel_tol, |a| (-a / m).exp() / m)
            }
            Self::Pareto { scale, alpha } => {
                let (s, al) = (*scale, *alpha);
                let norm = al * s.powf(al);
                half_line(f, s.max(region.lower()), rel_tol, |a| norm * a.powf(-al - 1.0))
            }
            Self::Mixture { weights, components } => {
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    total += w * c.integrate(f, region, rel_tol)?;
                }
                Ok(total)
            }
        }
    }

    /// `int a / (1 + a) gamma(da)`: the probability that a mutation becomes a contender.
    pub fn contender_fraction(&self) -> Result<f64, QuadratureError> {
        match self {
            Self::PointMass { value } => Ok(survival_prob(*value).expect("validated")),
            Self::Uniform { low, high } => Ok(1.0 - ((1.0 + high) / (1.0 + low)).ln() / (high - low)),
            Self::Exponential { mean } => {
                // E[1/(1+A)] = (1/m) e^{1/m} E1(1/m)
                let x = 1.0 / mean;
                Ok(1.0 - x * quad::scaled_exp_integral_e1(x))
            }
            Self::Pareto { .. } => self.integrate(&|a| a / (1.0 + a), Region::All, RATE_TOLERANCE),
            Self::Mixture { weights, components } => {
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    total += w * c.contender_fraction()?;
                }
                Ok(total)
            }
        }
    }
}

fn half_line<F, D>(f: &F, start: f64, rel_tol: f64, density: D) -> Result<f64, QuadratureError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let u0 = start / (1.0 + start);
    quad::integrate(
        |u| {
            let w = 1.0 - u;
            let a = u / w;
            f(a) * density(a) / (w * w)
        },
        u0,
        1.0,
        rel_tol,
    )
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for IncrementDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PointMass { value } => write!(f, "point_mass({})", fmt_num(*value)),
            Self::Uniform { low, high } => write!(f, "uniform({},{})", fmt_num(*low), fmt_num(*high)),
            Self::Exponential { mean } => write!(f, "exponential({})", fmt_num(*mean)),
            Self::Pareto { scale, alpha } => write!(f, "pareto({},{})", fmt_num(*scale), fmt_num(*alpha)),
            Self::Mixture { weights, components } => {
                write!(f, "mixture(")?;
                for (k, (w, c)) in weights.iter().zip(components).enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{}*{}", fmt_num(*w), c)?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parses descriptors such as `point_mass(1)`, `uniform(1,2)`,
/// `exponential(2)`, `pareto(1,0.5)` and `mixture(0.5*point_mass(1),0.5*point_mass(2))`.
impl FromStr for IncrementDistribution {
    type Err = InputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || InputError::Parse(s.to_string());
        let open = text.find('(').ok_or_else(bad)?;
        if !text.ends_with(')') {
            return Err(bad());
        }
        let name = &text[..open];
        let body = &text[open + 1..text.len() - 1];
        let args = split_top_level(body);
        let nums =
            || -> Result<Vec<f64>, InputError> { args.iter().map(|a| a.parse::<f64>().map_err(|_| bad())).collect() };
        match name {
            "point_mass" | "delta" => match nums()?.as_slice() {
                [v] => Self::point_mass(*v),
                _ => Err(bad()),
            },
            "uniform" => match nums()?.as_slice() {
                [lo, hi] => Self::uniform(*lo, *hi),
                _ => Err(bad()),
            },
            "exponential" => match nums()?.as_slice() {
                [m] => Self::exponential(*m),
                _ => Err(bad()),
            },
            "pareto" => match nums()?.as_slice() {
                [s, a] => Self::pareto(*s, *a),
                _ => Err(bad()),
            },
            "mixture" => {
                let mut weights = Vec::new();
                let mut components = Vec::new();
                for arg in args {
                    let star = arg.find('*').ok_or_else(bad)?;
                    weights.push(arg[..star].parse::<f64>().map_err(|_| bad())?);
                    components.push(arg[star + 1..].parse::<IncrementDistribution>()?);
                }
                Self::mixture(weights, components)
            }
            _ => Err(bad()),
        }
    }
}

fn split_top_level(body: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !body.is_empty() {
        parts.push(&body[start..]);
    }
    parts
}

/// Survival probability `a / (1 + a)` of a binary branching process with
/// birth rate `1 + a` and death rate `1`.
pub fn survival_prob(a: f64) -> Result<f64, InputError> {
    positive("a", a)?;
    Ok(a / (1.0 + a))
}

/// Increment law of the contenders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContenderIncrements {
    /// The law is given directly.
    Direct { law: IncrementDistribution },
    /// `(a / (1 + a)) base(da) / normalizer`.
    SizeBiased {
        base: IncrementDistribution,
        normalizer: f64,
    },
}

/// Rate and increment law of the contending mutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContenderLaw {
    pub rate: f64,
    pub increments: ContenderIncrements,
}

impl ContenderLaw {
    /// A contender stream specified directly by its rate and increment law.
    pub fn direct(rate: f64, law: IncrementDistribution) -> Result<Self, InputError> {
        positive("rate", rate)?;
        law.validate()?;
        Ok(Self {
            rate,
            increments: ContenderIncrements::Direct { law },
        })
    }

    /// Samples by rejection against the base law when size-biased.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.increments {
            ContenderIncrements::Direct { law } => law.sample(rng),
            ContenderIncrements::SizeBiased { base, .. } => loop {
                let a = base.sample(rng);
                if rng.random_bool(a / (1.0 + a)) {
                    return a;
                }
            },
        }
    }

    pub fn integrate<F>(&self, f: &F, region: Region, rel_tol: f64) -> Result<f64, QuadratureError>
    where
        F: Fn(f64) -> f64,
    {
        match &self.increments {
            ContenderIncrements::Direct { law } => law.integrate(f, region, rel_tol),
            ContenderIncrements::SizeBiased { base, normalizer } => {
                let biased = |a: f64| f(a) * a / (1.0 + a);
                Ok(base.integrate(&biased, region, rel_tol)? / normalizer)
            }
        }
    }

    /// Mass of `(a, inf)`.
    pub fn tail_mass(&self, a: f64, rel_tol: f64) -> Result<f64, QuadratureError> {
        self.integrate(
            &|_| 1.0,
            Region::Above {
                from: a,
                inclusive: false,
            },
            rel_tol,
        )
    }

    pub fn mean(&self) -> Result<f64, QuadratureError> {
        self.integrate(&|a| a, Region::All, 1e-10)
    }

    /// The point mass when the contender increments are deterministic.
    pub fn point_mass(&self) -> Option<f64> {
        match &self.increments {
            ContenderIncrements::Direct {
                law: IncrementDistribution::PointMass { value },
            }
            | ContenderIncrements::SizeBiased {
                base: IncrementDistribution::PointMass { value },
                ..
            } => Some(*value),
            _ => None,
        }
    }

    pub fn support_sup(&self) -> Option<f64> {
        match &self.increments {
            ContenderIncrements::Direct { law } => law.support_sup(),
            ContenderIncrements::SizeBiased { base, .. } => base.support_sup(),
        }
    }
}

/// Rate and law of the mutations that survive drift, given the raw mutation rate and increment law.
pub fn contender_params(lambda: f64, gamma: &IncrementDistribution) -> Result<ContenderLaw, InputError> {
    positive("lambda", lambda)?;
    gamma.validate()?;
    let fraction = gamma.contender_fraction()?;
    let increments = match gamma {
        IncrementDistribution::PointMass { .. } => ContenderIncrements::Direct { law: gamma.clone() },
        _ => ContenderIncrements::SizeBiased {
            base: gamma.clone(),
            normalizer: fraction,
        },
    };
    Ok(ContenderLaw {
        rate: lambda * fraction,
        increments,
    })
}

/// One point of the marked Poisson input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    pub index: u64,
    pub time: f64,
    pub increment: f64,
    pub contender: bool,
}

/// Infinite Poisson stream of mutations with drift-survival flags.
#[derive(Debug, Clone)]
pub struct PoissonInput<R> {
    lambda: f64,
    gamma: IncrementDistribution,
    rng: R,
    time: f64,
    index: u64,
}

impl<R: RngCore> PoissonInput<R> {
    pub fn new(lambda: f64, gamma: IncrementDistribution, rng: R) -> Result<Self, InputError> {
        positive("lambda", lambda)?;
        gamma.validate()?;
        Ok(Self {
            lambda,
            gamma,
            rng,
            time: 0.0,
            index: 0,
        })
    }
}

impl<R: RngCore> Iterator for PoissonInput<R> {
    type Item = InputEvent;

    fn next(&mut self) -> Option<InputEvent> {
        let gap: f64 = Exp1.sample(&mut self.rng);
        let next = self.time + gap / self.lambda;
        // keep times strictly increasing even for astronomically small gaps
        self.time = if next > self.time { next } else { self.time.next_up() };
        self.index += 1;
        let increment = self.gamma.sample(&mut self.rng);
        let contender = self.rng.random_bool(increment / (1.0 + increment));
        Some(InputEvent {
            index: self.index,
            time: self.time,
            increment,
            contender,
        })
    }
}

/// Infinite stream of contenders only, at rate `law.rate` with increments from `law`.
#[derive(Debug, Clone)]
pub struct ContenderInput<R> {
    law: ContenderLaw,
    rng: R,
    time: f64,
    index: u64,
}

impl<R: RngCore> ContenderInput<R> {
    pub fn new(law: ContenderLaw, rng: R) -> Self {
        Self {
            law,
            rng,
            time: 0.0,
            index: 0,
        }
    }
}

impl<R: RngCore> Iterator for ContenderInput<R> {
    type Item = InputEvent;

    fn next(&mut self) -> Option<InputEvent> {
        let gap: f64 = Exp1.sample(&mut self.rng);
        let next = self.time + gap / self.law.rate;
        self.time = if next > self.time { next } else { self.time.next_up() };
        self.index += 1;
        Some(InputEvent {
            index: self.index,
            time: self.time,
            increment: self.law.sample(&mut self.rng),
            contender: true,
        })
    }
}

/// All input events with time at most `horizon`.
pub fn sample_input_stream<R: RngCore>(
    lambda: f64,
    gamma: &IncrementDistribution,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<InputEvent>, InputError> {
    if horizon.is_nan() || horizon < 0.0 {
        return Err(InputError::InvalidParameter {
            name: "horizon",
            value: horizon,
            reason: "must be nonnegative",
        });
    }
    let stream = PoissonInput::new(lambda, gamma.clone(), rng)?;
    Ok(stream.take_while(|e| e.time <= horizon).collect())
}

pub fn sample_increment<R: RngCore + ?Sized>(dist: &IncrementDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}
