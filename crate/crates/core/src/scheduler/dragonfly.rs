//! Dragonfly swarm update over a mixed continuous/binary search space.
//!
//! Continuous dimensions move by the step vector and are clamped to the box.
//! Binary dimensions flip with probability given by a V-shaped transfer
//! function of their step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SchedulerError;

/// Step clamp for binary dimensions.
const BINARY_STEP_LIMIT: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub binary: Vec<bool>,
}

impl SearchSpace {
    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        let d = self.lower.len();
        if self.upper.len() != d || self.binary.len() != d {
            return Err(SchedulerError::Dimension("search space bound lengths differ".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(SchedulerError::Config("search space bounds must be finite with lower <= upper".into()));
        }
        Ok(())
    }

    fn max_step(&self, d: usize) -> f64 {
        if self.binary[d] {
            BINARY_STEP_LIMIT
        } else {
            (self.upper[d] - self.lower[d]) / 10.0
        }
    }

    fn normalized(&self, d: usize, x: f64) -> f64 {
        let w = self.upper[d] - self.lower[d];
        if w > 0.0 {
            (x - self.lower[d]) / w
        } else {
            0.0
        }
    }

    pub fn random_position(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.dims())
            .map(|d| {
                if self.binary[d] {
                    f64::from(u8::from(rng.gen_bool(0.5)))
                } else {
                    rng.gen_range(self.lower[d]..=self.upper[d])
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swarm {
    pub positions: Vec<Vec<f64>>,
    pub steps: Vec<Vec<f64>>,
}

impl Swarm {
    pub fn new(positions: Vec<Vec<f64>>) -> Self {
        let steps = positions.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { positions, steps }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Attraction and distraction points.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaders {
    pub food: Vec<f64>,
    pub enemy: Vec<f64>,
}

impl Leaders {
    /// Best (food) and worst (enemy) of a population under minimisation.
    /// Ties resolve to the lowest index.
    pub fn from_fitness(positions: &[Vec<f64>], fitness: &[f64]) -> Result<Self, SchedulerError> {
        if positions.is_empty() || positions.len() != fitness.len() {
            return Err(SchedulerError::Dimension("fitness length must match a non-empty population".into()));
        }
        let mut best = 0;
        let mut worst = 0;
        for (k, &f) in fitness.iter().enumerate() {
            if f < fitness[best] {
                best = k;
            }
            if f > fitness[worst] {
                worst = k;
            }
        }
        Ok(Self { food: positions[best].clone(), enemy: positions[worst].clone() })
    }
}

/// Behaviour weights for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWeights {
    pub separation: f64,
    pub alignment: f64,
    pub cohesion: f64,
    pub food: f64,
    pub enemy: f64,
    pub inertia: f64,
    /// Neighbourhood radius in normalised coordinates, as a fraction of the
    /// space diagonal.
    pub radius: f64,
}

impl StepWeights {
    pub const ZERO: StepWeights =
        StepWeights { separation: 0.0, alignment: 0.0, cohesion: 0.0, food: 0.0, enemy: 0.0, inertia: 0.0, radius: 0.0 };
}

fn neighbours(swarm: &Swarm, space: &SearchSpace, k: usize, radius: f64) -> Vec<usize> {
    let dims = space.dims().max(1) as f64;
    let me = &swarm.positions[k];
    (0..swarm.len())
        .filter(|&j| j != k)
        .filter(|&j| {
            let d2: f64 = (0..space.dims())
                .map(|d| {
                    let diff = space.normalized(d, swarm.positions[j][d]) - space.normalized(d, me[d]);
                    diff * diff
                })
                .sum();
            (d2 / dims).sqrt() <= radius
        })
        .collect()
}

/// One synchronous update of the whole swarm.
pub fn dragonfly_step(
    swarm: &Swarm,
    leaders: &Leaders,
    space: &SearchSpace,
    weights: &StepWeights,
    rng: &mut impl Rng,
) -> Result<Swarm, SchedulerError> {
    space.validate()?;
    if swarm.is_empty() {
        return Err(SchedulerError::Dimension("empty population".into()));
    }
    let dims = space.dims();
    let shape_ok = swarm.steps.len() == swarm.len()
        && swarm.positions.iter().chain(&swarm.steps).all(|v| v.len() == dims)
        && leaders.food.len() == dims
        && leaders.enemy.len() == dims;
    if !shape_ok {
        return Err(SchedulerError::Dimension(format!("swarm vectors must have {dims} dimensions")));
    }

    let mut next = swarm.clone();
    for k in 0..swarm.len() {
        let x = &swarm.positions[k];
        let nb = neighbours(swarm, space, k, weights.radius);
        let count = nb.len() as f64;
        for d in 0..dims {
            let food = leaders.food[d] - x[d];
            let enemy = leaders.enemy[d] + x[d];
            let mut step = weights.food * food + weights.enemy * enemy + weights.inertia * swarm.steps[k][d];
            if !nb.is_empty() {
                let sep: f64 = -nb.iter().map(|&j| x[d] - swarm.positions[j][d]).sum::<f64>();
                let align = nb.iter().map(|&j| swarm.steps[j][d]).sum::<f64>() / count;
                let coh = nb.iter().map(|&j| swarm.positions[j][d]).sum::<f64>() / count - x[d];
                step += weights.separation * sep + weights.alignment * align + weights.cohesion * coh;
            }
            let lim = space.max_step(d);
            let step = step.clamp(-lim, lim);
            next.steps[k][d] = step;
            if space.binary[d] {
                let transfer = (step / (1.0 + step * step).sqrt()).abs();
                let bit = x[d] >= 0.5;
                let flip = rng.gen::<f64>() < transfer;
                next.positions[k][d] = f64::from(u8::from(bit ^ flip));
            } else {
                next.positions[k][d] = (x[d] + step).clamp(space.lower[d], space.upper[d]);
            }
        }
    }
    Ok(next)
}
