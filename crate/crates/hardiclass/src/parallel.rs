use hardiclass_core::ga::{Evaluator, KernelFitness};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Scores genomes on a dedicated rayon pool. Results come back in input
/// order, so the search trace does not depend on the thread count.
pub struct RayonEvaluator {
    pool: ThreadPool,
}

impl RayonEvaluator {
    /// `threads == 0` uses rayon's default (one worker per logical CPU).
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(Self { pool: ThreadPoolBuilder::new().num_threads(threads).build()? })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Evaluator for RayonEvaluator {
    fn evaluate(&self, problem: &KernelFitness<'_>, genomes: &[&[f64]]) -> Vec<f64> {
        self.pool.install(|| genomes.par_iter().map(|g| problem.fitness(g)).collect())
    }
}
