//! The four experimental regimes: random search, full-evaluation EA,
//! surrogate EA and surrogate EA with pre-selection.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_idx, split_dataset, AugmentConfig, Splits, SplitFractions, SyntheticSpec,
};
use crate::decoder::NetworkConfig;
use crate::error::{Error, Result};
use crate::evaluator::{Evaluation, Evaluator, RealEvaluator};
use crate::exec::{Executor, Job};
use crate::genotype::{crossover, mutate, random_genotype, Genotype, GenotypeConfig, MutationRates};
use crate::kpls::KplsConfig;
use crate::management::{
    full_count, generation_step, preselect_pool, Budget, Candidate, EvaluatedIndividual, FitnessKind,
    ManagementConfig, ManagementState, PairSource, PoolRecord, QualityPair,
};
use crate::nn::{TrainHyper, TrainedNetwork};
use crate::proxy::{ProxyConfig, ProxyEvaluator};
use crate::rng::{derive_seed, derive_stream, tag, Rng};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    #[default]
    Expensive,
    Surrogate,
    SurrogatePs,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Expensive, Mode::Surrogate, Mode::SurrogatePs];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Expensive => "expensive",
            Mode::Surrogate => "surrogate",
            Mode::SurrogatePs => "surrogate_ps",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        spec: SyntheticSpec,
        #[serde(default)]
        fractions: SplitFractions,
    },
    /// A directory holding `{train,validation,eval,report}-{images,labels}.idx`.
    Idx { dir: PathBuf },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            spec: SyntheticSpec::default(),
            fractions: SplitFractions::default(),
        }
    }
}

pub const SPLIT_NAMES: [&str; 4] = ["train", "validation", "eval", "report"];

pub fn idx_paths(dir: &std::path::Path, split: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}-images.idx")),
        dir.join(format!("{split}-labels.idx")),
    )
}

impl DatasetConfig {
    pub fn load(&self, seed: u64) -> Result<Splits> {
        match self {
            DatasetConfig::Synthetic { spec, fractions } => {
                let data = generate_synthetic(spec, derive_seed(seed, &[tag::DATA]))?;
                split_dataset(&data, *fractions, derive_seed(seed, &[tag::SPLIT]))
            }
            DatasetConfig::Idx { dir } => {
                let load = |name: &str| {
                    let (images, labels) = idx_paths(dir, name);
                    load_idx(&images, &labels)
                };
                Ok(Splits {
                    train: load("train")?,
                    validation: load("validation")?,
                    eval: load("eval")?,
                    report: load("report")?,
                })
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DatasetConfig::Synthetic { spec, .. } => format!(
                "synthetic-{}x{}x{}-c{}-n{}-d{}",
                spec.height, spec.width, spec.channels, spec.classes, spec.n, spec.difficulty
            ),
            DatasetConfig::Idx { dir } => format!("idx:{}", dir.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealConfig {
    pub dataset: DatasetConfig,
    pub batch_size: usize,
    pub lr: f64,
    pub augment: AugmentConfig,
    /// `num_classes` is taken from the dataset.
    pub network: NetworkConfig,
}

impl Default for RealConfig {
    fn default() -> Self {
        let hyper = TrainHyper::default();
        RealConfig {
            dataset: DatasetConfig::default(),
            batch_size: hyper.batch_size,
            lr: hyper.lr,
            augment: AugmentConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    Real(RealConfig),
    Proxy(ProxyConfig),
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig::Real(RealConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub pop_size: usize,
    pub generations: usize,
    pub e_full: usize,
    pub e_partial: usize,
    pub ratio_full: f64,
    pub elite_fraction: f64,
    pub tournament_size: usize,
    pub p_crossover: f64,
    pub mutation: MutationRates,
    pub pool_factor: usize,
    /// Fraction of each partial set trained in full purely for metrics.
    pub audit_fraction: f64,
    pub genotype: GenotypeConfig,
    pub kpls: KplsConfig,
    pub evaluator: EvaluatorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            mode: Mode::default(),
            seed: 0,
            pop_size: 10,
            generations: 3,
            e_full: 30,
            e_partial: 10,
            ratio_full: 0.4,
            elite_fraction: 0.2,
            tournament_size: 3,
            p_crossover: 0.8,
            mutation: MutationRates::default(),
            pool_factor: 3,
            audit_fraction: 0.2,
            genotype: GenotypeConfig::default(),
            kpls: KplsConfig::default(),
            evaluator: EvaluatorConfig::default(),
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.pop_size == 0 || self.generations == 0 {
            return Err(Error::Config("pop_size and generations must be positive".into()));
        }
        if self.e_partial == 0 || self.e_partial > self.e_full {
            return Err(Error::Config(format!(
                "need 1 <= e_partial <= e_full, got {} and {}",
                self.e_partial, self.e_full
            )));
        }
        if !(self.ratio_full > 0.0 && self.ratio_full <= 1.0) {
            return Err(Error::Config(format!("ratio_full {} outside (0, 1]", self.ratio_full)));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::Config(format!(
                "elite_fraction {} outside (0, 1)",
                self.elite_fraction
            )));
        }
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament_size must be positive".into()));
        }
        if self.pool_factor == 0 {
            return Err(Error::Config("pool_factor must be at least 1".into()));
        }
        probability("p_crossover", self.p_crossover)?;
        probability("mutation.p_micro", self.mutation.p_micro)?;
        probability("mutation.p_macro", self.mutation.p_macro)?;
        probability("audit_fraction", self.audit_fraction)?;
        self.genotype.validate()?;
        self.kpls.validate()?;
        match &self.evaluator {
            EvaluatorConfig::Proxy(p) => p.validate(),
            EvaluatorConfig::Real(r) => {
                if r.batch_size == 0 || !(r.lr > 0.0 && r.lr.is_finite()) {
                    return Err(Error::Config("batch_size and lr must be positive".into()));
                }
                if let DatasetConfig::Synthetic { fractions, .. } = &r.dataset {
                    fractions.validate()?;
                }
                Ok(())
            }
        }
    }

    pub fn hyper(&self) -> TrainHyper {
        let (batch_size, lr) = match &self.evaluator {
            EvaluatorConfig::Real(r) => (r.batch_size, r.lr),
            EvaluatorConfig::Proxy(_) => (TrainHyper::default().batch_size, TrainHyper::default().lr),
        };
        TrainHyper {
            epochs_total: self.e_full,
            semantics_epoch: self.e_partial,
            batch_size,
            lr,
        }
    }

    pub fn dataset_name(&self) -> String {
        match &self.evaluator {
            EvaluatorConfig::Real(r) => r.dataset.describe(),
            EvaluatorConfig::Proxy(p) => format!("proxy-d{}-s{}", p.dimension, p.seed),
        }
    }

    /// Builds the evaluator, loading and splitting the dataset if needed.
    pub fn build_evaluator(&self) -> Result<Box<dyn Evaluator>> {
        match &self.evaluator {
            EvaluatorConfig::Proxy(p) => Ok(Box::new(ProxyEvaluator::new(p.clone())?)),
            EvaluatorConfig::Real(r) => {
                let splits = r.dataset.load(self.seed)?;
                let network = NetworkConfig {
                    num_classes: splits.train.num_classes(),
                    ..r.network.clone()
                };
                Ok(Box::new(RealEvaluator::new(
                    &splits,
                    network,
                    self.hyper(),
                    r.augment,
                    derive_seed(self.seed, &[tag::AUGMENT]),
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub individuals: Vec<EvaluatedIndividual>,
    /// Best current fitness, estimates included.
    pub best_fitness: f64,
    pub best_true_fitness: Option<f64>,
    pub archive_size: usize,
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Champion {
    pub generation: usize,
    pub index: usize,
    pub genotype: Genotype,
    pub seed: u64,
    pub fitness: f64,
    pub fitness_kind: FitnessKind,
    /// Eval-split accuracy of the fresh full training.
    pub eval_accuracy: f64,
    pub report_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub pool_seconds: f64,
    pub generation_seconds: Vec<f64>,
    pub champion_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub dataset: String,
    pub generations: Vec<GenerationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pool: Vec<PoolRecord>,
    pub champion: Option<Champion>,
    pub budget: Budget,
    pub quality_pairs: Vec<QualityPair>,
    pub archive_size: usize,
    pub fit_failures: usize,
    /// Wall-clock figures; kept out of `summary.json`.
    #[serde(default)]
    pub timing: Timing,
}

impl RunResult {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn best_per_generation(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.best_fitness).collect()
    }

    pub fn best_true_per_generation(&self) -> Vec<Option<f64>> {
        self.generations.iter().map(|g| g.best_true_fitness).collect()
    }
}

pub struct RunOutput {
    pub result: RunResult,
    pub checkpoint: Option<TrainedNetwork>,
}

/// Positions sorted by fitness (descending), then index.
pub fn rank(population: &[EvaluatedIndividual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| {
        population[b]
            .fitness
            .total_cmp(&population[a].fitness)
            .then(population[a].index.cmp(&population[b].index))
    });
    order
}

fn tournament(population: &[EvaluatedIndividual], size: usize, rng: &mut Rng) -> usize {
    let k = size.clamp(1, population.len());
    index::sample(rng, population.len(), k)
        .into_iter()
        .min_by(|&a, &b| {
            population[b]
                .fitness
                .total_cmp(&population[a].fitness)
                .then(population[a].index.cmp(&population[b].index))
        })
        .expect("non-empty tournament")
}

/// Two independent tournaments without replacement; the winner is the
/// fittest entrant, ties to the lower index.
pub fn select_parents(
    population: &[EvaluatedIndividual],
    tournament_size: usize,
    rng: &mut Rng,
) -> Result<(usize, usize)> {
    if population.is_empty() {
        return Err(Error::Empty("population"));
    }
    Ok((
        tournament(population, tournament_size, rng),
        tournament(population, tournament_size, rng),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub genotype: Genotype,
    /// Position in the parent population when copied as an elite.
    pub elite_of: Option<usize>,
}

/// Elites first (best first), then varied children of tournament winners.
pub fn next_generation(
    population: &[EvaluatedIndividual],
    config: &RunConfig,
    rng: &mut Rng,
) -> Result<Vec<Offspring>> {
    if population.is_empty() {
        return Err(Error::Empty("population"));
    }
    let p = config.pop_size;
    let elites = full_count(config.elite_fraction, p).min(population.len());
    let mut out: Vec<Offspring> = rank(population)[..elites]
        .iter()
        .map(|&i| Offspring {
            genotype: population[i].genotype.clone(),
            elite_of: Some(i),
        })
        .collect();
    while out.len() < p {
        let (a, b) = select_parents(population, config.tournament_size, rng)?;
        let (ga, gb) = (&population[a].genotype, &population[b].genotype);
        let (c1, c2) = if rng.random_bool(config.p_crossover) {
            crossover(ga, gb, &config.genotype, rng)
        } else {
            (ga.clone(), gb.clone())
        };
        for child in [c1, c2] {
            if out.len() < p {
                out.push(Offspring {
                    genotype: mutate(&child, config.mutation, &config.genotype, rng),
                    elite_of: None,
                });
            }
        }
    }
    Ok(out)
}

fn candidates(
    offspring: Vec<Offspring>,
    previous: &[EvaluatedIndividual],
    master: u64,
    generation: usize,
) -> Vec<Candidate> {
    offspring
        .into_iter()
        .enumerate()
        .map(|(i, o)| match o.elite_of {
            Some(e) => {
                let prev = &previous[e];
                Candidate {
                    genotype: o.genotype,
                    seed: prev.seed,
                    elite: true,
                    known_full: (prev.fitness_kind == FitnessKind::TrueFull).then_some(prev.fitness),
                    warm: None,
                }
            }
            None => Candidate {
                genotype: o.genotype,
                seed: derive_seed(master, &[tag::TRAIN, generation as u64, i as u64]),
                elite: false,
                known_full: None,
                warm: None,
            },
        })
        .collect()
}

fn random_candidates(config: &RunConfig, rng: &mut Rng, generation: usize) -> Result<Vec<Candidate>> {
    (0..config.pop_size)
        .map(|i| {
            Ok(Candidate {
                genotype: random_genotype(&config.genotype, rng)?,
                seed: derive_seed(config.seed, &[tag::TRAIN, generation as u64, i as u64]),
                elite: false,
                known_full: None,
                warm: None,
            })
        })
        .collect()
}

/// Every offspring trained to the full budget.
fn evaluate_all_full(
    generation: usize,
    cands: &[Candidate],
    config: &RunConfig,
    evaluator: &dyn Evaluator,
    exec: &Executor,
) -> (Vec<EvaluatedIndividual>, Budget) {
    let jobs: Vec<Job> = cands.iter().map(|c| (c.genotype.clone(), c.seed)).collect();
    let evals: Vec<Evaluation> = exec.full(evaluator, &jobs);
    let individuals = cands
        .iter()
        .zip(evals)
        .enumerate()
        .map(|(i, (c, e))| {
            let (fitness, kind) = match (e.is_penalty(), e.full_accuracy) {
                (false, Some(acc)) => (acc, FitnessKind::TrueFull),
                _ => (0.0, FitnessKind::Penalty),
            };
            EvaluatedIndividual {
                generation,
                index: i,
                genotype: c.genotype.clone(),
                seed: c.seed,
                elite: c.elite,
                stats: e.stats,
                semantics_partial: e.semantics,
                partial_accuracy: e.partial_accuracy,
                fitness,
                fitness_kind: kind,
                predicted: None,
                ei: None,
                epochs_charged: config.e_full,
            }
        })
        .collect();
    let budget = Budget {
        full: cands.len() * config.e_full,
        ..Default::default()
    };
    (individuals, budget)
}

fn record(generation: usize, individuals: Vec<EvaluatedIndividual>, archive_size: usize, budget: Budget) -> GenerationRecord {
    let best_fitness = individuals.iter().map(|i| i.fitness).fold(0.0, f64::max);
    let best_true_fitness = individuals
        .iter()
        .filter(|i| i.fitness_kind == FitnessKind::TrueFull)
        .map(|i| i.fitness)
        .reduce(f64::max);
    GenerationRecord {
        generation,
        individuals,
        best_fitness,
        best_true_fitness,
        archive_size,
        budget,
    }
}

/// Elites whose estimate was later replaced by full training.
fn promotion_pairs(current: &[EvaluatedIndividual], previous: &[EvaluatedIndividual]) -> Vec<QualityPair> {
    current
        .iter()
        .filter(|c| c.elite && c.fitness_kind == FitnessKind::TrueFull)
        .filter_map(|c| {
            let prev = previous.iter().find(|p| {
                p.fitness_kind == FitnessKind::SurrogateEstimate && p.seed == c.seed && p.genotype == c.genotype
            })?;
            Some(QualityPair {
                generation: c.generation,
                index: c.index,
                source: PairSource::PromotedElite,
                predicted: prev.fitness,
                actual: c.fitness,
            })
        })
        .collect()
}

/// Final-generation best (all generations for random search); full
/// training results win ties against estimates, then the lower index.
fn pick_champion(generations: &[GenerationRecord], mode: Mode) -> Option<&EvaluatedIndividual> {
    let pool: Vec<&EvaluatedIndividual> = match mode {
        Mode::Baseline => generations.iter().flat_map(|g| &g.individuals).collect(),
        _ => generations.last()?.individuals.iter().collect(),
    };
    pool.into_iter()
        .filter(|i| i.fitness_kind != FitnessKind::Penalty)
        .min_by(|a, b| {
            b.fitness
                .total_cmp(&a.fitness)
                .then((b.fitness_kind == FitnessKind::TrueFull).cmp(&(a.fitness_kind == FitnessKind::TrueFull)))
                .then(a.generation.cmp(&b.generation))
                .then(a.index.cmp(&b.index))
        })
}

/// Runs one experiment. Results depend only on the configuration, never on
/// the worker count.
pub fn run_experiment(config: &RunConfig, evaluator: &dyn Evaluator, workers: usize) -> Result<RunOutput> {
    config.validate()?;
    let exec = Executor::new(workers)?;
    let started = Instant::now();
    let seed = config.seed;
    let management = ManagementConfig {
        ratio_full: config.ratio_full,
        audit_fraction: config.audit_fraction,
        e_full: config.e_full,
        e_partial: config.e_partial,
        kpls: config.kpls,
    };
    let mut timing = Timing {
        workers: exec.workers(),
        ..Default::default()
    };
    let mut budget = Budget::default();
    let mut generations: Vec<GenerationRecord> = Vec::with_capacity(config.generations);
    let mut pairs: Vec<QualityPair> = Vec::new();
    let mut pool_records = Vec::new();
    let mut state = ManagementState::default();

    match config.mode {
        Mode::Baseline => {
            for g in 1..=config.generations {
                let t = Instant::now();
                let mut rng = derive_stream(seed, &[tag::BASELINE, g as u64]);
                let cands = random_candidates(config, &mut rng, g)?;
                let (inds, b) = evaluate_all_full(g, &cands, config, evaluator, &exec);
                budget.add(b);
                generations.push(record(g, inds, 0, b));
                timing.generation_seconds.push(t.elapsed().as_secs_f64());
            }
        }
        Mode::Expensive | Mode::Surrogate | Mode::SurrogatePs => {
            let managed = config.mode != Mode::Expensive;
            let mut cands = if config.mode == Mode::SurrogatePs {
                let t = Instant::now();
                let pool = preselect_pool(
                    config.pool_factor,
                    config.pop_size,
                    &config.genotype,
                    seed,
                    config.e_partial,
                    evaluator,
                    &exec,
                )?;
                budget.add(pool.budget);
                pool_records = pool.records;
                timing.pool_seconds = t.elapsed().as_secs_f64();
                pool.selected
            } else {
                random_candidates(config, &mut derive_stream(seed, &[tag::INIT]), 1)?
            };
            for g in 1..=config.generations {
                let t = Instant::now();
                let (inds, b, audits) = if managed {
                    let all_full = g == 1 && config.mode == Mode::Surrogate;
                    let mut audit_rng = derive_stream(seed, &[tag::AUDIT, g as u64]);
                    let out = generation_step(
                        &mut state,
                        g,
                        &cands,
                        all_full,
                        &management,
                        evaluator,
                        &exec,
                        &mut audit_rng,
                    )?;
                    (out.individuals, out.budget, out.audits)
                } else {
                    let (inds, b) = evaluate_all_full(g, &cands, config, evaluator, &exec);
                    (inds, b, Vec::new())
                };
                if let Some(prev) = generations.last() {
                    pairs.extend(promotion_pairs(&inds, &prev.individuals));
                }
                pairs.extend(audits);
                budget.add(b);
                if g < config.generations {
                    let mut rng = derive_stream(seed, &[tag::VARIATION, g as u64]);
                    let offspring = next_generation(&inds, config, &mut rng)?;
                    cands = candidates(offspring, &inds, seed, g + 1);
                }
                generations.push(record(g, inds, state.archive.len(), b));
                timing.generation_seconds.push(t.elapsed().as_secs_f64());
            }
        }
    }

    let t = Instant::now();
    let mut checkpoint = None;
    let champion = match pick_champion(&generations, config.mode) {
        Some(best) => {
            let report = evaluator.report(&best.genotype, best.seed)?;
            budget.champion += config.e_full;
            if best.fitness_kind == FitnessKind::SurrogateEstimate {
                pairs.push(QualityPair {
                    generation: best.generation,
                    index: best.index,
                    source: PairSource::Champion,
                    predicted: best.fitness,
                    actual: report.eval_accuracy,
                });
            }
            checkpoint = report.checkpoint;
            Some(Champion {
                generation: best.generation,
                index: best.index,
                genotype: best.genotype.clone(),
                seed: best.seed,
                fitness: best.fitness,
                fitness_kind: best.fitness_kind,
                eval_accuracy: report.eval_accuracy,
                report_accuracy: report.report_accuracy,
            })
        }
        None => {
            log::warn!("every individual was penalised; no champion");
            None
        }
    };
    timing.champion_seconds = t.elapsed().as_secs_f64();
    timing.total_seconds = started.elapsed().as_secs_f64();

    Ok(RunOutput {
        result: RunResult {
            config: config.clone(),
            dataset: config.dataset_name(),
            generations,
            pool: pool_records,
            champion,
            budget,
            quality_pairs: dedup_pairs(pairs),
            archive_size: state.archive.len(),
            fit_failures: state.fit_failures,
            timing,
        },
        checkpoint,
    })
}

/// One pair per (generation, index); earlier sources win.
fn dedup_pairs(pairs: Vec<QualityPair>) -> Vec<QualityPair> {
    let mut out: Vec<QualityPair> = Vec::with_capacity(pairs.len());
    for p in pairs {
        if !out.iter().any(|q| q.generation == p.generation && q.index == p.index) {
            out.push(p);
        }
    }
    out
}

/// Evolution budget predicted from the configuration alone.
pub fn expected_evolution_budget(config: &RunConfig) -> usize {
    let (p, g) = (config.pop_size, config.generations);
    let n_full = full_count(config.ratio_full, p);
    let managed_gen = n_full * config.e_full + (p - n_full) * config.e_partial;
    match config.mode {
        Mode::Baseline | Mode::Expensive => p * g * config.e_full,
        Mode::Surrogate => p * config.e_full + (g - 1) * managed_gen,
        Mode::SurrogatePs => config.pool_factor * p * config.e_partial + g * managed_gen,
    }
}
