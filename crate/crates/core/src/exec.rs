//! Bounded parallel evaluation with a result cache.
//!
//! Evaluations are pure functions of `(genotype, seed)`, so results are
//! collected in job order and cached; the worker count only changes
//! wall-clock time.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::{Evaluation, Evaluator};
use crate::genotype::Genotype;

pub type Job = (Genotype, u64);

pub struct Executor {
    pool: rayon::ThreadPool,
    cache: Mutex<HashMap<Job, Evaluation>>,
}

impl Executor {
    pub fn new(workers: usize) -> Result<Executor> {
        if workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Executor {
            pool,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn cached(&self, job: &Job, full: bool) -> Option<Evaluation> {
        let cache = self.cache.lock().expect("cache lock");
        cache
            .get(job)
            .filter(|e| !full || e.is_penalty() || e.full_accuracy.is_some())
            .cloned()
    }

    fn one(&self, evaluator: &dyn Evaluator, job: &Job, full: bool) -> Evaluation {
        if let Some(hit) = self.cached(job, full) {
            return hit;
        }
        let (genotype, seed) = job;
        let result = if full {
            evaluator.full(genotype, *seed)
        } else {
            evaluator.partial(genotype, *seed)
        };
        let mut cache = self.cache.lock().expect("cache lock");
        let slot = cache.entry(job.clone()).or_insert_with(|| result.clone());
        if full && slot.full_accuracy.is_none() {
            *slot = result.clone();
        }
        result
    }

    fn run(&self, evaluator: &dyn Evaluator, jobs: &[Job], full: bool) -> Vec<Evaluation> {
        self.pool
            .install(|| jobs.par_iter().map(|job| self.one(evaluator, job, full)).collect())
    }

    /// Results are in job order.
    pub fn partial(&self, evaluator: &dyn Evaluator, jobs: &[Job]) -> Vec<Evaluation> {
        self.run(evaluator, jobs, false)
    }

    pub fn full(&self, evaluator: &dyn Evaluator, jobs: &[Job]) -> Vec<Evaluation> {
        self.run(evaluator, jobs, true)
    }
}
