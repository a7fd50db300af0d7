use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Network, Scenario};

use super::decode::Problem;
use super::dragonfly::{dragonfly_step, Leaders, StepWeights, Swarm};
use super::{operating_cost, ConstraintClass, Schedule, SchedulerError, ViolationReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub dc_balance: f64,
    pub capacity: f64,
    pub reserve: f64,
    pub feeder: f64,
    /// per pu
    pub voltage: f64,
    pub ramp: f64,
    pub ac_balance: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self { dc_balance: 1e4, capacity: 1e4, reserve: 1e4, feeder: 1e4, voltage: 1e6, ramp: 1e4, ac_balance: 1e4 }
    }
}

impl PenaltyWeights {
    pub fn weight(&self, class: ConstraintClass) -> f64 {
        match class {
            ConstraintClass::DcBalance => self.dc_balance,
            ConstraintClass::Capacity => self.capacity,
            ConstraintClass::Reserve => self.reserve,
            ConstraintClass::Feeder => self.feeder,
            ConstraintClass::Voltage => self.voltage,
            ConstraintClass::Ramp => self.ramp,
            ConstraintClass::AcBalance => self.ac_balance,
        }
    }

    pub fn penalty(&self, report: &ViolationReport) -> f64 {
        report.violations.iter().map(|v| self.weight(v.constraint) * v.magnitude).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub iterations: usize,
    pub seed: u64,
    pub separation: f64,
    pub alignment: f64,
    pub cohesion: f64,
    pub food: f64,
    pub enemy: f64,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub radius_start: f64,
    pub radius_end: f64,
    /// Shift output from the grid-forming unit to cheaper committed units.
    pub economic_polish: bool,
    pub penalties: PenaltyWeights,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 30,
            iterations: 300,
            seed: 42,
            separation: 1.0,
            alignment: 1.0,
            cohesion: 1.0,
            food: 1.0,
            enemy: 1.0,
            inertia_start: 0.9,
            inertia_end: 0.4,
            radius_start: 0.1,
            radius_end: 1.0,
            economic_polish: true,
            penalties: PenaltyWeights::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.population < 2 {
            return Err(SchedulerError::Config("population must be at least 2".into()));
        }
        let coeffs = [
            self.separation,
            self.alignment,
            self.cohesion,
            self.food,
            self.enemy,
            self.inertia_start,
            self.inertia_end,
            self.radius_start,
            self.radius_end,
        ];
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(SchedulerError::Config("coefficients must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Weights for iteration `iter` of `iterations`: inertia falls linearly,
    /// the swarming coefficient decays to zero by mid-run and the radius
    /// grows.
    fn weights(&self, iter: usize, rng: &mut impl Rng) -> StepWeights {
        let frac = if self.iterations > 1 { iter as f64 / (self.iterations - 1) as f64 } else { 1.0 };
        let swarming = (0.1 - 0.2 * frac).max(0.0);
        StepWeights {
            separation: self.separation * 2.0 * rng.gen::<f64>() * swarming,
            alignment: self.alignment * 2.0 * rng.gen::<f64>() * swarming,
            cohesion: self.cohesion * 2.0 * rng.gen::<f64>() * swarming,
            food: self.food * 2.0 * rng.gen::<f64>(),
            enemy: self.enemy * swarming,
            inertia: self.inertia_start + (self.inertia_end - self.inertia_start) * frac,
            radius: self.radius_start + (self.radius_end - self.radius_start) * frac,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub schedule: Schedule,
    pub cost: f64,
    /// cost plus penalties
    pub fitness: f64,
    pub report: ViolationReport,
    /// best-so-far fitness after each iteration
    pub history: Vec<f64>,
}

struct Scored {
    position: Vec<f64>,
    schedule: Schedule,
    cost: f64,
    fitness: f64,
}

fn score(problem: &Problem, config: &OptimizerConfig, mut x: Vec<f64>) -> Result<Scored, SchedulerError> {
    let schedule = problem.decode(&mut x)?;
    let cost = operating_cost(&schedule, &problem.network.dg_units, &problem.initial)?;
    let report = problem.evaluate(&schedule)?;
    let fitness = cost + config.penalties.penalty(&report);
    Ok(Scored { position: x, schedule, cost, fitness })
}

/// Dragonfly search over commitment and dispatch. Individuals are decoded
/// and repaired before scoring; the best-so-far is kept and drives the
/// food term. Results depend only on the seed.
pub fn optimize(scenario: &Scenario, network: &Network, config: &OptimizerConfig) -> Result<OptimizeResult, SchedulerError> {
    config.validate()?;
    let problem = Problem::new(network, scenario, config.economic_polish)?;
    let space = problem.search_space();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut positions: Vec<Vec<f64>> = vec![problem.all_on_position()];
    while positions.len() < config.population {
        positions.push(space.random_position(&mut rng));
    }
    let mut swarm = Swarm::new(positions);
    let mut best: Option<Scored> = None;
    let mut worst: Option<(f64, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(config.iterations + 1);

    for iter in 0..=config.iterations {
        let scored: Vec<Scored> = swarm
            .positions
            .par_iter()
            .map(|x| score(&problem, config, x.clone()))
            .collect::<Result<_, _>>()?;
        for (k, s) in scored.into_iter().enumerate() {
            swarm.positions[k].clone_from(&s.position);
            if worst.as_ref().is_none_or(|(f, _)| s.fitness > *f) {
                worst = Some((s.fitness, s.position.clone()));
            }
            if best.as_ref().is_none_or(|b| s.fitness < b.fitness) {
                best = Some(s);
            }
        }
        let b = best.as_ref().expect("population is non-empty");
        history.push(b.fitness);
        if iter == config.iterations {
            break;
        }
        let leaders = Leaders { food: b.position.clone(), enemy: worst.as_ref().expect("scored").1.clone() };
        let weights = config.weights(iter, &mut rng);
        swarm = dragonfly_step(&swarm, &leaders, &space, &weights, &mut rng)?;
    }

    let b = best.expect("population is non-empty");
    let report = problem.evaluate(&b.schedule)?;
    Ok(OptimizeResult { schedule: b.schedule, cost: b.cost, fitness: b.fitness, report, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::hourly_flow;

    #[test]
    fn all_on_position_decodes_feasibly() {
        let net = Network::ieee33_hybrid();
        let sc = Scenario::reference();
        let problem = Problem::new(&net, &sc, true).unwrap();
        let mut x = problem.all_on_position();
        let sch = problem.decode(&mut x).unwrap();
        assert!(problem.evaluate(&sch).unwrap().is_feasible());
    }

    #[test]
    fn small_run_is_feasible_monotone_and_reproducible() {
        let net = Network::ieee33_hybrid();
        let sc = Scenario::reference();
        let cfg = OptimizerConfig { population: 8, iterations: 6, seed: 7, ..Default::default() };
        let t0 = std::time::Instant::now();
        let a = optimize(&sc, &net, &cfg).unwrap();
        eprintln!("elapsed {:?} cost {} fitness {}", t0.elapsed(), a.cost, a.fitness);
        assert!(a.report.is_feasible(), "{:?}", a.report.violations.first());
        assert!((a.fitness - a.cost).abs() < 1e-9);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        for t in 0..24 {
            assert!(hourly_flow(&a.schedule, &sc, &net, t).unwrap().max_voltage_deviation() <= 0.1);
        }
        let b = optimize(&sc, &net, &cfg).unwrap();
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.history, b.history);
    }

    fn single_unit_instance(hours: usize) -> (Network, Scenario) {
        let json = r#"{
  "name": "one-unit", "slack_bus": 1,
  "buses": [
    {"id": 1, "subgrid": "ac", "v_min": 0.9, "v_max": 1.1, "peak_active_load": 0.0, "peak_reactive_load": 0.0},
    {"id": 2, "subgrid": "ac", "v_min": 0.9, "v_max": 1.1, "peak_active_load": 100.0, "peak_reactive_load": 0.0}
  ],
  "lines": [{"from_bus": 1, "to_bus": 2, "resistance": 0.0, "reactance": 0.0, "capacity": 1e9}],
  "dg_units": [{"id": 1, "name": "G", "bus": 2, "kind": "MT", "dispatchable": true, "p_min": 0.0, "p_max": 500.0,
    "energy_cost": 1.0, "startup_cost": 5.0, "shutdown_cost": 5.0, "ramp_up": 500.0, "ramp_down": 500.0, "capacity": 500.0}],
  "converter": null
}"#;
        let net = Network::from_json(json).unwrap();
        let sc = Scenario::new(vec![1.0; hours], vec![0.0; hours], vec![0.0; hours], vec![0.0; hours]).unwrap();
        (net, sc)
    }

    #[test]
    fn single_unit_matches_exhaustive_search() {
        let hours = 4;
        let (net, sc) = single_unit_instance(hours);
        let weights = PenaltyWeights::default();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << hours) {
            let mut s = Schedule::zeros(hours, 1);
            for t in 0..hours {
                if mask >> t & 1 == 1 {
                    s.u[t][0] = true;
                    s.p_g[t][0] = 100.0;
                }
            }
            let cost = operating_cost(&s, &net.dg_units, &[true]).unwrap();
            let rep = crate::scheduler::evaluate_constraints(&s, &sc, &net).unwrap();
            best = best.min(cost + weights.penalty(&rep));
        }
        let r = optimize(&sc, &net, &OptimizerConfig { population: 6, iterations: 10, ..Default::default() }).unwrap();
        assert!(r.report.is_feasible());
        assert!((r.fitness - best).abs() < 1e-6, "{} vs {best}", r.fitness);
        assert!(r.schedule.p_g.iter().all(|row| (row[0] - 100.0).abs() < 1e-6));
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let net = Network::ieee33_hybrid();
        let sc = Scenario::reference();
        let cfg = OptimizerConfig { population: 6, iterations: 4, seed: 3, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| optimize(&sc, &net, &cfg).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn rejects_tiny_population() {
        let net = Network::ieee33_hybrid();
        let cfg = OptimizerConfig { population: 1, ..Default::default() };
        assert!(matches!(optimize(&Scenario::reference(), &net, &cfg), Err(SchedulerError::Config(_))));
    }
}
