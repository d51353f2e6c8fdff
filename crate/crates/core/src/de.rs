//! DE/rand/1 with binomial crossover, optionally preceded in every generation
//! by one symmetry-breaking draw per individual.
//!
//! All random numbers of a generation are drawn serially from one seeded
//! stream before any trial is evaluated, so results do not depend on whether
//! trials are evaluated sequentially or on a thread pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ann::{CostModel, CostValue, ParamVector};
use crate::error::{Error, Result};
use crate::symmetry::SymmetryLayout;

/// Default evaluation budget.
pub const DEFAULT_MAX_EVALS: u64 = 200_000_000;

/// Settings of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    pub population: usize,
    /// Differential weight `F`.
    pub weight: f64,
    /// Crossover rate `Cr`: probability of taking a coordinate from the mutant.
    pub crossover: f64,
    pub symmetry_breaking: bool,
    pub max_evals: u64,
    /// Error threshold; a run succeeds once the best total cost is at or
    /// below it.
    pub threshold: f64,
    pub seed: u64,
    /// Re-evaluate every position after the symmetry step and record the
    /// largest relative cost change. Costs no budget.
    pub verify_symmetry: bool,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: 40,
            weight: 0.5,
            crossover: 0.9,
            symmetry_breaking: false,
            max_evals: DEFAULT_MAX_EVALS,
            threshold: 5e-5,
            seed: 0,
            verify_symmetry: false,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.population < 4 {
            return bad(format!("population size {} is below 4", self.population));
        }
        if self.weight.is_nan() || self.weight <= 0.0 || self.weight.is_infinite() {
            return bad(format!(
                "differential weight {} must be positive",
                self.weight
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad(format!(
                "crossover probability {} outside [0, 1]",
                self.crossover
            ));
        }
        if self.max_evals < self.population as u64 {
            return bad(format!(
                "budget {} cannot cover the initial population of {}",
                self.max_evals, self.population
            ));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return bad(format!(
                "error threshold {} must be positive",
                self.threshold
            ));
        }
        Ok(())
    }
}

/// A cost function over flat parameter vectors.
pub trait Problem: Sync {
    fn dim(&self) -> usize;

    fn cost(&self, theta: &[f64]) -> CostValue;

    /// Symmetry layout of the search space, required for symmetry breaking.
    fn symmetry(&self) -> Option<&SymmetryLayout> {
        None
    }
}

/// Network training problem: penalized cost over the training samples.
#[derive(Debug, Clone)]
pub struct NetworkProblem {
    model: CostModel,
    layout: SymmetryLayout,
}

impl NetworkProblem {
    pub fn new(model: CostModel) -> Self {
        let layout = SymmetryLayout::new(model.topology());
        NetworkProblem { model, layout }
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }
}

impl Problem for NetworkProblem {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn cost(&self, theta: &[f64]) -> CostValue {
        self.model.cost_unchecked(theta)
    }

    fn symmetry(&self) -> Option<&SymmetryLayout> {
        Some(&self.layout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub position: ParamVector,
    pub cost: CostValue,
}

/// Best cost after a given number of evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub evals: u64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub success: bool,
    /// Evaluations up to and including the one that crossed the threshold,
    /// or the evaluations spent when the budget ran out.
    pub evals_used: u64,
    pub best: Individual,
    /// Checkpoints at every improvement of the best cost.
    pub trace: Vec<Checkpoint>,
    pub generations: u64,
    /// Trials rejected because their cost was NaN or infinite.
    pub non_finite_trials: u64,
    /// Largest relative cost change caused by symmetry steps, when verified.
    pub symmetry_drift: Option<f64>,
}

/// Evaluation strategy and progress reporting of a run.
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Evaluate trials on the current rayon pool.
    pub parallel: bool,
    pub sink: Option<&'a mut dyn FnMut(&Checkpoint)>,
}

fn evaluate<P: Problem>(problem: &P, positions: &[ParamVector], parallel: bool) -> Vec<CostValue> {
    if parallel {
        positions.par_iter().map(|p| problem.cost(p)).collect()
    } else {
        positions.iter().map(|p| problem.cost(p)).collect()
    }
}

/// Uniform random positions on `[-1, 1]^dim`.
pub fn random_positions<R: Rng + ?Sized>(
    count: usize,
    dim: usize,
    rng: &mut R,
) -> Vec<ParamVector> {
    (0..count)
        .map(|_| ParamVector::new((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()))
        .collect()
}

/// Random initial population with evaluated costs (`population` evaluations).
pub fn init_population<P: Problem, R: Rng + ?Sized>(
    config: &DeConfig,
    problem: &P,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    if config.population < 4 {
        return Err(Error::Config(format!(
            "population size {} is below 4",
            config.population
        )));
    }
    if problem.dim() == 0 {
        return Err(Error::Config("search space has dimension 0".into()));
    }
    let positions = random_positions(config.population, problem.dim(), rng);
    let costs = evaluate(problem, &positions, false);
    Ok(positions
        .into_iter()
        .zip(costs)
        .map(|(position, cost)| Individual { position, cost })
        .collect())
}

/// `base + weight * (a - b)`.
pub fn mutant(base: &[f64], a: &[f64], b: &[f64], weight: f64) -> Vec<f64> {
    base.iter()
        .zip(a.iter().zip(b))
        .map(|(x, (p, q))| x + weight * (p - q))
        .collect()
}

/// Binomial crossover: coordinate `forced` always comes from `donor`, every
/// other one comes from `donor` with probability `rate` and from `current`
/// otherwise.
pub fn crossover<R: Rng + ?Sized>(
    current: &[f64],
    donor: &[f64],
    rate: f64,
    forced: usize,
    rng: &mut R,
) -> Vec<f64> {
    current
        .iter()
        .zip(donor)
        .enumerate()
        .map(|(j, (&c, &v))| {
            // Short-circuit: the forced coordinate consumes no draw.
            if j == forced || rng.random::<f64>() < rate {
                v
            } else {
                c
            }
        })
        .collect()
}

/// Three mutually distinct indices, all different from `i`.
fn pick_partners<R: Rng + ?Sized>(i: usize, n: usize, rng: &mut R) -> [usize; 3] {
    let mut picked = [usize::MAX; 3];
    for slot in 0..3 {
        picked[slot] = loop {
            let r = rng.random_range(0..n);
            if r != i && !picked[..slot].contains(&r) {
                break r;
            }
        };
    }
    picked
}

/// Trial vector for individual `i`.
pub fn de_trial<R: Rng + ?Sized>(
    i: usize,
    positions: &[ParamVector],
    weight: f64,
    rate: f64,
    rng: &mut R,
) -> ParamVector {
    assert!(
        positions.len() >= 4,
        "DE/rand/1 needs at least 4 individuals"
    );
    let [r1, r2, r3] = pick_partners(i, positions.len(), rng);
    let donor = mutant(&positions[r1], &positions[r2], &positions[r3], weight);
    let forced = rng.random_range(0..donor.len());
    ParamVector::new(crossover(&positions[i], &donor, rate, forced, rng))
}

/// Whether a trial cost replaces the target cost. Strict; NaN never does.
pub fn improves(trial: &CostValue, target: &CostValue) -> bool {
    trial.total() < target.total()
}

/// Evaluates `trial` and keeps whichever of target and trial is better.
pub fn de_select(
    target: Individual,
    trial: ParamVector,
    cost: impl FnOnce(&ParamVector) -> CostValue,
) -> Individual {
    let trial_cost = cost(&trial);
    if improves(&trial_cost, &target.cost) {
        Individual {
            position: trial,
            cost: trial_cost,
        }
    } else {
        if !trial_cost.total().is_finite() {
            log::warn!("non-finite trial cost {} rejected", trial_cost.total());
        }
        target
    }
}

fn best_index(population: &[Individual]) -> usize {
    let key = |ind: &Individual| {
        let t = ind.cost.total();
        if t.is_nan() {
            f64::INFINITY
        } else {
            t
        }
    };
    let mut best = 0;
    for (i, ind) in population.iter().enumerate() {
        if key(ind) < key(&population[best]) {
            best = i;
        }
    }
    best
}

fn relative_change(before: f64, after: f64) -> f64 {
    let scale = before.abs().max(after.abs());
    if scale == 0.0 {
        0.0
    } else {
        (before - after).abs() / scale
    }
}

/// Runs the optimizer sequentially.
pub fn run_de<P: Problem>(config: &DeConfig, problem: &P) -> Result<RunResult> {
    run_de_with(config, problem, RunOptions::default())
}

pub fn run_de_with<P: Problem>(
    config: &DeConfig,
    problem: &P,
    mut options: RunOptions<'_>,
) -> Result<RunResult> {
    config.validate()?;
    let layout = if config.symmetry_breaking {
        let layout = problem
            .symmetry()
            .ok_or_else(|| Error::Config("symmetry breaking needs a network problem".into()))?;
        if layout.topology().param_dim() != problem.dim() {
            return Err(Error::Config(
                "symmetry layout does not match the problem".into(),
            ));
        }
        Some(layout)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let np = config.population;
    let positions = random_positions(np, problem.dim(), &mut rng);
    let costs = evaluate(problem, &positions, options.parallel);
    let mut population: Vec<Individual> = positions
        .into_iter()
        .zip(costs)
        .map(|(position, cost)| Individual { position, cost })
        .collect();
    let mut evals = np as u64;
    let mut best = best_index(&population);
    let mut trace = Vec::new();
    let mut record = |cp: Checkpoint, trace: &mut Vec<Checkpoint>| {
        if let Some(sink) = options.sink.as_mut() {
            sink(&cp);
        }
        trace.push(cp);
    };
    record(
        Checkpoint {
            evals,
            best_cost: population[best].cost.total(),
        },
        &mut trace,
    );

    let mut non_finite = population
        .iter()
        .filter(|i| !i.cost.total().is_finite())
        .count() as u64;
    let mut drift: Option<f64> = config.verify_symmetry.then_some(0.0);
    let mut generations = 0;
    let mut success = population[best].cost.total() <= config.threshold;

    while !success && evals < config.max_evals {
        generations += 1;

        if let Some(layout) = layout {
            let reference = population[best].position.clone();
            for ind in population.iter_mut() {
                layout.mgod_in_place(&mut ind.position, &reference, &mut rng);
            }
            if let Some(max) = drift.as_mut() {
                for ind in &population {
                    let again = problem.cost(&ind.position).total();
                    *max = max.max(relative_change(ind.cost.total(), again));
                }
            }
        }

        let count = np.min((config.max_evals - evals) as usize);
        let positions: Vec<ParamVector> =
            population.iter().map(|ind| ind.position.clone()).collect();
        let trials: Vec<ParamVector> = (0..count)
            .map(|i| de_trial(i, &positions, config.weight, config.crossover, &mut rng))
            .collect();
        let costs = evaluate(problem, &trials, options.parallel);

        for (i, (trial, cost)) in trials.into_iter().zip(costs).enumerate() {
            evals += 1;
            if !cost.total().is_finite() {
                non_finite += 1;
            }
            if !improves(&cost, &population[i].cost) {
                continue;
            }
            let total = cost.total();
            population[i] = Individual {
                position: trial,
                cost,
            };
            if total < population[best].cost.total() {
                best = i;
                record(
                    Checkpoint {
                        evals,
                        best_cost: total,
                    },
                    &mut trace,
                );
            }
            if total <= config.threshold {
                success = true;
                break;
            }
        }
    }

    if non_finite > 0 {
        log::warn!("{non_finite} non-finite costs were treated as non-improving");
    }
    Ok(RunResult {
        success,
        evals_used: evals,
        best: population[best].clone(),
        trace,
        generations,
        non_finite_trials: non_finite,
        symmetry_drift: drift,
    })
}
