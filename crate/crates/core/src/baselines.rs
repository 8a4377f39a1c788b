//! Random search and genetic algorithm baselines.
//!
//! Both drivers are single threaded and deterministic for a given seed;
//! evaluation of a population is handed to the bounded worker pool in
//! [`crate::evaluator::evaluate_pool`].

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design_space::{CostRange, DesignSpace, ParametersSet, MAX_CONCURRENCY};
use crate::dsdb::{best_under_cost, ratio_to, DesignPoint, EvalResult};
use crate::evaluator::{evaluate_pool, EvaluatorBackend};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid GA config: {0}")]
    Config(String),
    #[error("no ground-truth design point has cost in {0}")]
    EmptyRange(CostRange),
}

/// Fitness with a hard cost constraint: perf inside the range, 0 outside.
pub fn fitness(result: &EvalResult, range: CostRange) -> f64 {
    if range.contains(result.cost) {
        result.perf
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub set: ParametersSet,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchTrace {
    /// Every simulated configuration, in evaluation order.
    pub evaluations: Vec<Evaluation>,
    /// Highest-perf in-range evaluation (first one on ties).
    pub best: Option<Evaluation>,
    pub nsims: usize,
    /// GA only: best fitness after each generation.
    pub generation_best: Vec<f64>,
}

impl SearchTrace {
    fn record(&mut self, set: ParametersSet, result: EvalResult, range: CostRange) {
        let better = range.contains(result.cost)
            && self
                .best
                .as_ref()
                .is_none_or(|b| result.perf > b.result.perf);
        let eval = Evaluation { set, result };
        if better {
            self.best = Some(eval.clone());
        }
        self.evaluations.push(eval);
        self.nsims = self.evaluations.len();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsConfig {
    pub target_ratio: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for RsConfig {
    fn default() -> Self {
        RsConfig {
            target_ratio: crate::dsdb::REALISTIC_RATIO,
            max_evals: 10_000,
            seed: 0,
        }
    }
}

/// Uniform sampling with replacement until an in-range evaluation beats
/// `target_ratio` of the ground-truth optimum, or `max_evals` draws.
pub fn random_search(
    space: &DesignSpace,
    backend: &dyn EvaluatorBackend,
    range: CostRange,
    truth: &[DesignPoint],
    config: &RsConfig,
) -> Result<SearchTrace, BaselineError> {
    let target = best_under_cost(truth, range)
        .first()
        .map(DesignPoint::perf)
        .ok_or(BaselineError::EmptyRange(range))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = SearchTrace::default();
    for _ in 0..config.max_evals {
        let set = space.sample_with(&mut rng);
        let Ok(result) = backend.evaluate(&set) else {
            continue;
        };
        let hit = range.contains(result.cost) && ratio_to(result.perf, target) > config.target_ratio;
        trace.record(set, result, range);
        if hit {
            break;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            generations: 20,
            crossover_rate: 0.8,
            mutation_rate: 0.2,
            tournament_size: 3,
            elite_count: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let err = |m: &str| Err(BaselineError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return err("rates must lie in [0, 1]");
        }
        if self.population == 0 {
            return err("population must be positive");
        }
        if self.elite_count >= self.population {
            return err("elite_count must be smaller than population");
        }
        if self.tournament_size < 2 {
            return err("tournament_size must be at least 2");
        }
        if self.generations == 0 {
            return err("generations must be positive");
        }
        Ok(())
    }
}

struct Memo {
    scores: HashMap<String, Option<EvalResult>>,
}

impl Memo {
    /// Evaluates the not-yet-seen members of `pop` and returns every
    /// member's fitness.
    fn score(
        &mut self,
        pop: &[ParametersSet],
        backend: &dyn EvaluatorBackend,
        range: CostRange,
        trace: &mut SearchTrace,
    ) -> Vec<f64> {
        let mut fresh: Vec<ParametersSet> = Vec::new();
        for set in pop {
            let key = set.canonical_key();
            if !self.scores.contains_key(&key) && !fresh.iter().any(|s| s.canonical_key() == key) {
                fresh.push(set.clone());
            }
        }
        let results = evaluate_pool(backend, &fresh, MAX_CONCURRENCY);
        for (set, result) in fresh.into_iter().zip(results) {
            let key = set.canonical_key();
            match result {
                Ok(r) => {
                    trace.record(set, r.clone(), range);
                    self.scores.insert(key, Some(r));
                }
                Err(_) => {
                    self.scores.insert(key, None);
                }
            }
        }
        pop.iter()
            .map(|s| match &self.scores[&s.canonical_key()] {
                Some(r) => fitness(r, range),
                None => 0.0,
            })
            .collect()
    }
}

fn tournament<'a>(
    rng: &mut ChaCha8Rng,
    pop: &'a [ParametersSet],
    fit: &[f64],
    size: usize,
) -> &'a ParametersSet {
    let mut winner = rng.random_range(0..pop.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..pop.len());
        if fit[challenger] > fit[winner] {
            winner = challenger;
        }
    }
    &pop[winner]
}

fn breed(
    space: &DesignSpace,
    rng: &mut ChaCha8Rng,
    a: &ParametersSet,
    b: &ParametersSet,
    config: &GaConfig,
) -> ParametersSet {
    let crossover = rng.random::<f64>() < config.crossover_rate;
    let mut child = ParametersSet::new();
    for p in space.params() {
        let from_b = crossover && rng.random::<bool>();
        let parent = if from_b { b } else { a };
        let mut value = parent
            .get(p.name())
            .cloned()
            .unwrap_or_else(|| p.values()[0].clone());
        if rng.random::<f64>() < config.mutation_rate {
            value = p.values()[rng.random_range(0..p.values().len())].clone();
        }
        child.insert(p.name(), value);
    }
    child
}

/// Generational GA with tournament selection, uniform crossover, per-gene
/// resampling mutation and elitism. The initial population counts as the
/// first of `generations` generations. Evaluations are memoized by
/// canonical key, so `nsims` counts unique configurations.
pub fn genetic_search(
    space: &DesignSpace,
    backend: &dyn EvaluatorBackend,
    range: CostRange,
    config: &GaConfig,
) -> Result<SearchTrace, BaselineError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = SearchTrace::default();
    let mut memo = Memo {
        scores: HashMap::new(),
    };

    let mut pop: Vec<ParametersSet> = (0..config.population)
        .map(|_| space.sample_with(&mut rng))
        .collect();
    let mut fit = memo.score(&pop, backend, range, &mut trace);
    trace.generation_best.push(fit.iter().copied().fold(0.0, f64::max));

    for _ in 1..config.generations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&i, &j| fit[j].total_cmp(&fit[i]).then(i.cmp(&j)));

        let mut next: Vec<ParametersSet> = ranked[..config.elite_count]
            .iter()
            .map(|&i| pop[i].clone())
            .collect();
        while next.len() < config.population {
            let a = tournament(&mut rng, &pop, &fit, config.tournament_size);
            let b = tournament(&mut rng, &pop, &fit, config.tournament_size);
            next.push(breed(space, &mut rng, a, b, config));
        }
        pop = next;
        fit = memo.score(&pop, backend, range, &mut trace);
        trace.generation_best.push(fit.iter().copied().fold(0.0, f64::max));
    }
    Ok(trace)
}
