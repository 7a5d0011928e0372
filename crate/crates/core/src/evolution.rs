//! NSGA-II with mutation-only variation.
//!
//! Each generation breeds as many offspring as there are parents by binary
//! tournament on (rank, crowding) followed by Gaussian mutation of every
//! gene, then keeps the best half of parents plus offspring. The run stops
//! once exactly `evaluation_budget` genotypes have been evaluated.

use std::cmp::Ordering;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gait_params::{Complexity, Genotype, ParamTable, PARAM_COUNT};
use crate::metrics::{self, ParetoArchive, ReferenceBox};
use crate::simulator::{Objectives, Simulator};

pub const MUTATION_SIGMA: f64 = 1.0 / 6.0;

/// Linear population size between 8 and 64, rounded to the nearest power of
/// two; exact midpoints round up.
pub fn population_size_for(c: Complexity) -> usize {
    let linear = 8.0 + c.value() * 56.0;
    let mut best = 8usize;
    for candidate in [8usize, 16, 32, 64] {
        let d = (linear - candidate as f64).abs();
        let best_d = (linear - best as f64).abs();
        if d <= best_d {
            best = candidate;
        }
    }
    best
}

/// Both objectives are maximized.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.speed >= b.speed
        && a.stability >= b.stability
        && (a.speed > b.speed || a.stability > b.stability)
}

/// Fast non-dominated sort. Returns fronts of indices into `objs`, best
/// front first; indices inside a front are ascending.
pub fn non_dominated_sort(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objs[i], &objs[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order as `front`).
pub fn crowding_distance(objs: &[Objectives], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let getters: [fn(&Objectives) -> f64; 2] = [|o| o.speed, |o| o.stability];
    for get in getters {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| get(&objs[front[a]]).total_cmp(&get(&objs[front[b]])));
        let lo = get(&objs[front[order[0]]]);
        let hi = get(&objs[front[order[n - 1]]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = get(&objs[front[order[k + 1]]]) - get(&objs[front[order[k - 1]]]);
            dist[order[k]] += gap / range;
        }
    }
    dist
}

/// Adds an independent N(0, sigma) draw to every gene and clamps to [0, 1].
pub fn mutate<R: Rng + ?Sized>(g: &Genotype, sigma: f64, rng: &mut R) -> Genotype {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let genes = g
        .genes()
        .iter()
        .map(|&x| (x + normal.sample(rng)).clamp(0.0, 1.0))
        .collect();
    Genotype::new(genes).expect("clamped genes are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genotype: Genotype,
    pub objectives: Option<Objectives>,
    pub rank: usize,
    pub crowding: f64,
    /// Position in the run's evaluation log.
    pub evaluation: usize,
}

impl Individual {
    fn objectives(&self) -> Objectives {
        self.objectives.expect("evaluated individual")
    }

    /// Tournament order: lower rank wins, then larger crowding distance.
    pub fn beats(&self, other: &Individual) -> bool {
        match self.rank.cmp(&other.rank) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.crowding > other.crowding,
        }
    }
}

/// Sets rank and crowding on every individual.
pub fn assign_rank_and_crowding(pop: &mut [Individual]) {
    let objs: Vec<Objectives> = pop.iter().map(Individual::objectives).collect();
    for (rank, front) in non_dominated_sort(&objs).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(&objs, front)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
}

/// Keeps `mu` individuals: whole fronts first, the last front cut by
/// descending crowding distance. Ties keep the earlier individual.
pub fn environmental_selection(mut pool: Vec<Individual>, mu: usize) -> Vec<Individual> {
    assign_rank_and_crowding(&mut pool);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[a]
            .rank
            .cmp(&pool[b].rank)
            .then(pool[b].crowding.total_cmp(&pool[a].crowding))
            .then(a.cmp(&b))
    });
    order.truncate(mu);
    order.sort_unstable();
    let mut keep: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    let mut survivors: Vec<Individual> = order.iter().map(|&i| keep[i].take().unwrap()).collect();
    assign_rank_and_crowding(&mut survivors);
    survivors
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    pub complexity: Complexity,
    pub population_size: usize,
    pub evaluation_budget: usize,
    pub mutation_sigma: f64,
    pub mutation_probability: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigInvalid {
    #[error("population size must be positive")]
    EmptyPopulation,
    #[error("budget {budget} is smaller than the population size {population}")]
    BudgetTooSmall { budget: usize, population: usize },
    #[error("mutation sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("mutation probability must be in [0, 1], got {0}")]
    Probability(f64),
}

impl EvoConfig {
    /// Settings used throughout: population from [`population_size_for`],
    /// sigma 1/6, every gene mutated.
    pub fn new(complexity: Complexity, evaluation_budget: usize, rng_seed: u64) -> Self {
        EvoConfig {
            complexity,
            population_size: population_size_for(complexity),
            evaluation_budget,
            mutation_sigma: MUTATION_SIGMA,
            mutation_probability: 1.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if self.population_size == 0 {
            return Err(ConfigInvalid::EmptyPopulation);
        }
        if self.evaluation_budget < self.population_size {
            return Err(ConfigInvalid::BudgetTooSmall {
                budget: self.evaluation_budget,
                population: self.population_size,
            });
        }
        if self.mutation_sigma.is_nan() || self.mutation_sigma <= 0.0 {
            return Err(ConfigInvalid::Sigma(self.mutation_sigma));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(ConfigInvalid::Probability(self.mutation_probability));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("evaluation failed: {0}")]
pub struct EvalError(pub String);

/// Maps a genotype to objectives. `seed` is unique per evaluation so noisy
/// evaluators stay reproducible under parallel execution.
pub trait Evaluator: Sync {
    fn evaluate(&self, genotype: &Genotype, seed: u64) -> Result<Objectives, EvalError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Genotype, u64) -> Result<Objectives, EvalError> + Sync,
{
    fn evaluate(&self, genotype: &Genotype, seed: u64) -> Result<Objectives, EvalError> {
        self(genotype, seed)
    }
}

/// Decodes genotypes at a fixed complexity and rolls them out.
#[derive(Debug, Clone)]
pub struct GaitEvaluator {
    pub table: ParamTable,
    pub complexity: Complexity,
    pub simulator: Simulator,
}

impl Evaluator for GaitEvaluator {
    fn evaluate(&self, genotype: &Genotype, seed: u64) -> Result<Objectives, EvalError> {
        let p = self
            .table
            .decode(genotype, self.complexity)
            .map_err(|e| EvalError(e.to_string()))?;
        Ok(self.simulator.evaluate(&p, seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub generation: usize,
    pub genotype: Genotype,
    pub objectives: Objectives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub generation: usize,
    /// Evaluations completed by the end of this generation.
    pub evaluations: usize,
    /// Evaluation indices of the surviving population.
    pub population: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: EvoConfig,
    pub evaluations: Vec<Evaluation>,
    pub generations: Vec<GenerationSnapshot>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    /// The evaluator failed; `partial` holds everything completed before.
    #[error("run aborted at evaluation {index}: {source}")]
    Aborted {
        index: usize,
        source: EvalError,
        partial: Box<RunRecord>,
    },
}

/// Per-evaluation seed derived from the run seed (SplitMix64 finalizer).
pub fn evaluation_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn evaluate_batch(
    record: &mut RunRecord,
    genotypes: Vec<Genotype>,
    generation: usize,
    evaluator: &dyn Evaluator,
) -> Result<Vec<Individual>, RunError> {
    let start = record.evaluations.len();
    let seed = record.config.rng_seed;
    let results: Vec<Result<Objectives, EvalError>> = genotypes
        .par_iter()
        .enumerate()
        .map(|(k, g)| {
            let o = evaluator.evaluate(g, evaluation_seed(seed, start + k))?;
            if o.speed.is_finite() && o.stability.is_finite() {
                Ok(o)
            } else {
                Err(EvalError(format!("non-finite objectives {o:?}")))
            }
        })
        .collect();
    let mut out = Vec::with_capacity(genotypes.len());
    for (k, (genotype, result)) in genotypes.into_iter().zip(results).enumerate() {
        let index = start + k;
        match result {
            Ok(objectives) => {
                record.evaluations.push(Evaluation {
                    index,
                    generation,
                    genotype: genotype.clone(),
                    objectives,
                });
                out.push(Individual {
                    genotype,
                    objectives: Some(objectives),
                    rank: 0,
                    crowding: 0.0,
                    evaluation: index,
                });
            }
            Err(source) => {
                return Err(RunError::Aborted {
                    index,
                    source,
                    partial: Box::new(record.clone()),
                })
            }
        }
    }
    Ok(out)
}

fn tournament<'a, R: Rng>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.beats(a) {
        b
    } else {
        a
    }
}

fn mutate_with_probability<R: Rng>(g: &Genotype, config: &EvoConfig, rng: &mut R) -> Genotype {
    if config.mutation_probability >= 1.0 {
        return mutate(g, config.mutation_sigma, rng);
    }
    let normal = Normal::new(0.0, config.mutation_sigma).expect("positive sigma");
    let genes = g
        .genes()
        .iter()
        .map(|&x| {
            if rng.random::<f64>() < config.mutation_probability {
                (x + normal.sample(rng)).clamp(0.0, 1.0)
            } else {
                x
            }
        })
        .collect();
    Genotype::new(genes).expect("clamped genes are valid")
}

/// Runs NSGA-II until the budget is spent. Evaluations within a generation
/// may run in parallel on the ambient rayon pool; results do not depend on
/// the number of threads.
pub fn run(config: &EvoConfig, evaluator: &dyn Evaluator) -> Result<RunRecord, RunError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut record = RunRecord {
        config: *config,
        evaluations: Vec::with_capacity(config.evaluation_budget),
        generations: Vec::new(),
    };
    let mu = config.population_size;

    let initial: Vec<Genotype> = (0..mu)
        .map(|_| {
            let genes = (0..PARAM_COUNT).map(|_| rng.random::<f64>()).collect();
            Genotype::new(genes).expect("unit interval")
        })
        .collect();
    let mut population = evaluate_batch(&mut record, initial, 0, evaluator)?;
    assign_rank_and_crowding(&mut population);
    record.generations.push(snapshot(0, &record, &population));

    let mut generation = 0;
    while record.evaluations.len() < config.evaluation_budget {
        generation += 1;
        let lambda = mu.min(config.evaluation_budget - record.evaluations.len());
        let offspring: Vec<Genotype> = (0..lambda)
            .map(|_| {
                let parent = tournament(&population, &mut rng);
                mutate_with_probability(&parent.genotype, config, &mut rng)
            })
            .collect();
        let children = evaluate_batch(&mut record, offspring, generation, evaluator)?;
        let mut pool = population;
        pool.extend(children);
        population = environmental_selection(pool, mu);
        record.generations.push(snapshot(generation, &record, &population));
    }
    Ok(record)
}

fn snapshot(generation: usize, record: &RunRecord, population: &[Individual]) -> GenerationSnapshot {
    GenerationSnapshot {
        generation,
        evaluations: record.evaluations.len(),
        population: population.iter().map(|i| i.evaluation).collect(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Run(EvoConfig),
    Evaluation(Evaluation),
    Generation(GenerationSnapshot),
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("log is missing its run header")]
    MissingHeader,
    #[error("line {0}: unexpected entry")]
    Unexpected(usize),
}

impl RunRecord {
    /// Line-delimited JSON: a run header, then every evaluation in order,
    /// each generation's population following its evaluations.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let line = |out: &mut W, entry: &LogLine| -> io::Result<()> {
            serde_json::to_writer(&mut *out, entry)?;
            out.write_all(b"\n")
        };
        line(&mut out, &LogLine::Run(self.config))?;
        let mut next = 0;
        for g in &self.generations {
            while next < g.evaluations.min(self.evaluations.len()) {
                line(&mut out, &LogLine::Evaluation(self.evaluations[next].clone()))?;
                next += 1;
            }
            line(&mut out, &LogLine::Generation(g.clone()))?;
        }
        for e in &self.evaluations[next..] {
            line(&mut out, &LogLine::Evaluation(e.clone()))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut record: Option<RunRecord> = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogLine =
                serde_json::from_str(&line).map_err(|source| LogError::Parse { line: n + 1, source })?;
            match (entry, record.as_mut()) {
                (LogLine::Run(config), None) => {
                    record = Some(RunRecord {
                        config,
                        evaluations: Vec::new(),
                        generations: Vec::new(),
                    })
                }
                (LogLine::Evaluation(e), Some(r)) => r.evaluations.push(e),
                (LogLine::Generation(g), Some(r)) => r.generations.push(g),
                _ => return Err(LogError::Unexpected(n + 1)),
            }
        }
        record.ok_or(LogError::MissingHeader)
    }

    pub fn objectives(&self) -> impl Iterator<Item = Objectives> + '_ {
        self.evaluations.iter().map(|e| e.objectives)
    }

    /// Objectives of the population surviving `generation`.
    pub fn population_objectives(&self, generation: usize) -> Vec<Objectives> {
        self.generations[generation]
            .population
            .iter()
            .map(|&i| self.evaluations[i].objectives)
            .collect()
    }

    /// `generation,evaluations,population_size,front_size,population_hypervolume,archive_hypervolume`
    pub fn write_generation_csv<W: Write>(&self, r: &ReferenceBox, mut out: W) -> io::Result<()> {
        writeln!(out, "{GENERATION_HEADER}")?;
        let mut archive = ParetoArchive::new();
        let mut next = 0;
        for g in &self.generations {
            while next < g.evaluations {
                archive.insert(self.evaluations[next].objectives);
                next += 1;
            }
            let pop = self.population_objectives(g.generation);
            let front_size = non_dominated_sort(&pop).first().map_or(0, Vec::len);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                g.generation,
                g.evaluations,
                pop.len(),
                front_size,
                metrics::hypervolume2d(&pop, r),
                archive.hypervolume(r)
            )?;
        }
        Ok(())
    }
}

pub const GENERATION_HEADER: &str =
    "generation,evaluations,population_size,front_size,population_hypervolume,archive_hypervolume";
