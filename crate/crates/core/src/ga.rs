//! Genetic search over kernel banks.
//!
//! A genome is the flat concatenation of `n` row-major `w x w` kernels. Its
//! fitness is the pooled cross-validated error score of an SVM trained on the
//! features convolved with that bank, using one fold partition for the whole
//! run. Lower is better.
//!
//! Each generation keeps the `elites` best genomes unchanged and fills the
//! rest with children of size-`tournament` tournaments: two-point crossover
//! with probability `crossover_rate` (otherwise clones), then per-gene
//! additive Gaussian mutation with probability `mutation_rate`, clamped to
//! `[-2, 2]`. Generation `g` draws its randomness from ChaCha stream `g + 1`
//! of the run seed (stream 0 builds the initial population), so a run can be
//! resumed from any saved population.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{cross_validate_folds, stratified_folds, EvalReport, FitnessWeights};
use crate::filter::{convolve_planes, gaussian_bank, Border, Dataset, KernelBank, WEIGHT_LIMIT};
use crate::svm::SvmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Optional wall-clock limit in seconds, enforced by the caller's [`Observer`].
    pub wall_clock_budget: Option<f64>,
    pub crossover_rate: f64,
    pub crossover_points: usize,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub elites: usize,
    pub seed: u64,
    pub tournament: usize,
    /// Number of cross-validation folds used for every fitness evaluation.
    pub folds: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 500,
            generations: 100,
            wall_clock_budget: None,
            crossover_rate: 0.9,
            crossover_points: 2,
            mutation_rate: 0.1,
            mutation_sigma: 0.2,
            elites: 20,
            seed: 42,
            tournament: 3,
            folds: 6,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(invalid!("population must be >= 2, got {}", self.population));
        }
        if self.elites >= self.population {
            return Err(invalid!("elites ({}) must be fewer than the population ({})", self.elites, self.population));
        }
        for (name, r) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(invalid!("{name} rate must be in [0, 1], got {r}"));
            }
        }
        if self.crossover_points != 2 {
            return Err(invalid!("only two-point crossover is supported, got {}", self.crossover_points));
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(invalid!("mutation sigma must be >= 0"));
        }
        if self.tournament == 0 || self.generations == 0 {
            return Err(invalid!("tournament size and generation cap must be positive"));
        }
        Ok(())
    }
}

/// Flat kernel-bank encoding with its cached fitness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: Vec<f64>,
    pub fitness: Option<f64>,
}

impl Genome {
    pub fn new(genes: Vec<f64>) -> Self {
        Self { genes, fitness: None }
    }

    /// Cached fitness, with unevaluated or NaN genomes ranked last.
    pub fn score(&self) -> f64 {
        match self.fitness {
            Some(f) if !f.is_nan() => f,
            _ => f64::INFINITY,
        }
    }
}

/// Kernel `i` reads genes `[i·w², (i+1)·w²)` row-major.
pub fn genome_to_bank(genes: &[f64], n: usize, w: usize) -> Result<KernelBank> {
    if genes.len() != n * w * w {
        return Err(invalid!("genome has {} genes, n = {n} kernels of width {w} need {}", genes.len(), n * w * w));
    }
    KernelBank::new(w, genes.chunks_exact(w * w).map(<[f64]>::to_vec).collect())
}

pub fn bank_to_genome(bank: &KernelBank) -> Genome {
    Genome::new(bank.kernels().concat())
}

/// Gaussian seed, then `population/2` blends of the seed with uniform random
/// genomes, then uniform random genomes for the remainder.
pub fn initial_population(n: usize, w: usize, config: &GaConfig) -> Result<Vec<Genome>> {
    config.validate()?;
    let seed = bank_to_genome(&gaussian_bank(n, w)?);
    let len = seed.genes.len();
    let mut rng = stream(config.seed, 0);
    let blended = config.population / 2;
    let mut pop = Vec::with_capacity(config.population);
    pop.push(seed.clone());
    for _ in 0..blended {
        let genes = seed.genes.iter().map(|g| 0.5 * (g + uniform_gene(&mut rng))).collect();
        pop.push(Genome::new(genes));
    }
    while pop.len() < config.population {
        pop.push(Genome::new((0..len).map(|_| uniform_gene(&mut rng)).collect()));
    }
    Ok(pop)
}

fn uniform_gene(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-WEIGHT_LIMIT..=WEIGHT_LIMIT)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Cross-validated score of kernel banks on one dataset with fixed folds.
#[derive(Debug, Clone)]
pub struct KernelFitness<'a> {
    dataset: &'a Dataset,
    w: usize,
    folds: Vec<Vec<usize>>,
    svm: SvmConfig,
    weights: FitnessWeights,
    planar: Vec<f64>,
}

impl<'a> KernelFitness<'a> {
    pub fn new(
        dataset: &'a Dataset,
        w: usize,
        svm: SvmConfig,
        weights: FitnessWeights,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        if w.is_multiple_of(2) {
            return Err(invalid!("kernel width must be odd, got {w}"));
        }
        weights.validate()?;
        let folds = stratified_folds(dataset, folds, seed)?;
        let mut planar = vec![0.0; dataset.dims().voxel_count() * dataset.n()];
        dataset.scatter(&mut planar);
        Ok(Self { dataset, w, folds, svm, weights, planar })
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Dataset whose features are convolved with `bank` on the original grid.
    pub fn convolved(&self, bank: &KernelBank) -> Result<Dataset> {
        let mut out = vec![0.0; self.planar.len()];
        convolve_planes(&self.planar, self.dataset.dims(), bank, Border::Zero, &mut out);
        let mut rows = Vec::with_capacity(self.dataset.len() * self.n());
        self.dataset.gather(&out, &mut rows);
        self.dataset.with_features(self.n(), rows)
    }

    pub fn evaluate_bank(&self, bank: &KernelBank) -> Result<EvalReport> {
        if bank.n() != self.n() {
            return Err(invalid!("bank has {} kernels, dataset has {} features", bank.n(), self.n()));
        }
        cross_validate_folds(&self.convolved(bank)?, &self.folds, &self.svm, self.weights)
    }

    /// Fitness of a genome; any failure scores `+∞`.
    pub fn fitness(&self, genes: &[f64]) -> f64 {
        genome_to_bank(genes, self.n(), self.w)
            .and_then(|bank| self.evaluate_bank(&bank))
            .map(|r| r.fitness)
            .unwrap_or(f64::INFINITY)
    }
}

/// Scores a batch of genomes. Implementations may run in parallel but must
/// return results in input order.
pub trait Evaluator {
    fn evaluate(&self, problem: &KernelFitness<'_>, genomes: &[&[f64]]) -> Vec<f64>;
}

/// Evaluates genomes one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Evaluator for Sequential {
    fn evaluate(&self, problem: &KernelFitness<'_>, genomes: &[&[f64]]) -> Vec<f64> {
        genomes.iter().map(|g| problem.fitness(g)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    /// Mean over finite fitness values.
    pub mean_fitness: f64,
    /// Fitness evaluations performed for this generation (cache misses).
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called once per evaluated generation, with the population sorted best first.
pub trait Observer {
    fn generation(&mut self, stats: &GenerationStats, population: &[Genome]) -> Control;
}

impl Observer for () {
    fn generation(&mut self, _: &GenerationStats, _: &[Genome]) -> Control {
        Control::Continue
    }
}

impl<F: FnMut(&GenerationStats, &[Genome]) -> Control> Observer for F {
    fn generation(&mut self, stats: &GenerationStats, population: &[Genome]) -> Control {
        self(stats, population)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Genome,
    pub history: Vec<GenerationStats>,
    /// Final population, sorted best first.
    pub population: Vec<Genome>,
}

impl GaOutcome {
    pub fn best_fitness(&self) -> f64 {
        self.best.score()
    }
}

/// Runs the search from the seeded initial population.
pub fn evolve(
    problem: &KernelFitness<'_>,
    config: &GaConfig,
    evaluator: &dyn Evaluator,
    observer: &mut dyn Observer,
) -> Result<GaOutcome> {
    let pop = initial_population(problem.n(), problem.w(), config)?;
    evolve_from(problem, config, 0, pop, evaluator, observer)
}

/// Continues a run whose generation `generation` population is `population`.
pub fn evolve_from(
    problem: &KernelFitness<'_>,
    config: &GaConfig,
    generation: usize,
    mut population: Vec<Genome>,
    evaluator: &dyn Evaluator,
    observer: &mut dyn Observer,
) -> Result<GaOutcome> {
    config.validate()?;
    let len = problem.n() * problem.w() * problem.w();
    if population.len() != config.population {
        return Err(invalid!("population has {} genomes, config expects {}", population.len(), config.population));
    }
    if let Some(g) = population.iter().find(|g| g.genes.len() != len) {
        return Err(invalid!("genome of length {} in a run needing {len}", g.genes.len()));
    }
    let mut history = Vec::new();
    let mut gen = generation;
    loop {
        let pending: Vec<usize> = (0..population.len()).filter(|&i| population[i].fitness.is_none()).collect();
        let batch: Vec<&[f64]> = pending.iter().map(|&i| population[i].genes.as_slice()).collect();
        let scores = evaluator.evaluate(problem, &batch);
        for (&i, s) in pending.iter().zip(scores) {
            population[i].fitness = Some(s);
        }
        // Stable sort: equal scores keep their population order.
        population.sort_by(|a, b| a.score().total_cmp(&b.score()));

        let finite: Vec<f64> = population.iter().map(Genome::score).filter(|f| f.is_finite()).collect();
        let stats = GenerationStats {
            generation: gen,
            best_fitness: population[0].score(),
            mean_fitness: if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            evaluations: pending.len(),
        };
        history.push(stats);
        let control = observer.generation(&stats, &population);
        gen += 1;
        if control == Control::Stop || gen >= config.generations {
            break;
        }
        population = breed(&population, config, &mut stream(config.seed, gen as u64));
    }
    Ok(GaOutcome { best: population[0].clone(), history, population })
}

/// Next generation from a population sorted best first.
fn breed(sorted: &[Genome], config: &GaConfig, rng: &mut ChaCha8Rng) -> Vec<Genome> {
    let size = sorted.len();
    let mut next: Vec<Genome> = sorted[..config.elites].to_vec();
    let normal = Normal::new(0.0, config.mutation_sigma).expect("sigma validated");
    let pick = |rng: &mut ChaCha8Rng| -> &Genome {
        // Ranks are fitness-sorted, so the smallest drawn rank wins.
        let best = (0..config.tournament).map(|_| rng.random_range(0..size)).min().unwrap_or(0);
        &sorted[best]
    };
    while next.len() < size {
        let (a, b) = (pick(rng), pick(rng));
        let (mut c1, mut c2) = (a.clone(), b.clone());
        if rng.random::<f64>() < config.crossover_rate {
            let len = a.genes.len();
            let mut p = rng.random_range(0..=len);
            let mut q = rng.random_range(0..=len);
            if p > q {
                core::mem::swap(&mut p, &mut q);
            }
            c1.genes[p..q].copy_from_slice(&b.genes[p..q]);
            c2.genes[p..q].copy_from_slice(&a.genes[p..q]);
            c1.fitness = if c1.genes == a.genes { a.fitness } else { None };
            c2.fitness = if c2.genes == b.genes { b.fitness } else { None };
        }
        for child in [&mut c1, &mut c2] {
            let mut changed = false;
            for g in child.genes.iter_mut() {
                if rng.random::<f64>() < config.mutation_rate {
                    *g = (*g + normal.sample(rng)).clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT);
                    changed = true;
                }
            }
            if changed {
                child.fitness = None;
            }
        }
        next.push(c1);
        if next.len() < size {
            next.push(c2);
        }
    }
    next
}
