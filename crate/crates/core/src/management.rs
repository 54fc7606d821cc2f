//! Surrogate model management: which offspring are trained to the full
//! budget, which get a kriging estimate, and what the model learns from.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::decoder::GraphStats;
use crate::error::{Error, Result};
use crate::evaluator::{Evaluation, Evaluator};
use crate::exec::{Executor, Job};
use crate::genotype::{random_genotype, Genotype, GenotypeConfig};
use crate::kpls::{KplsConfig, KplsModel, Prediction};
use crate::rng::{derive_seed, derive_stream, tag, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitnessKind {
    TrueFull,
    SurrogateEstimate,
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedIndividual {
    pub generation: usize,
    pub index: usize,
    pub genotype: Genotype,
    /// Training seed; elites keep theirs across generations.
    pub seed: u64,
    pub elite: bool,
    pub stats: Option<GraphStats>,
    pub semantics_partial: Vec<f64>,
    pub partial_accuracy: f64,
    pub fitness: f64,
    pub fitness_kind: FitnessKind,
    pub predicted: Option<Prediction>,
    pub ei: Option<f64>,
    pub epochs_charged: usize,
}

/// One line of the per-generation audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLine {
    pub index: usize,
    pub fitness_kind: FitnessKind,
    pub fitness: f64,
    pub ei: Option<f64>,
    pub epochs_charged: usize,
}

impl From<&EvaluatedIndividual> for AuditLine {
    fn from(ind: &EvaluatedIndividual) -> Self {
        AuditLine {
            index: ind.index,
            fitness_kind: ind.fitness_kind,
            fitness: ind.fitness,
            ei: ind.ei,
            epochs_charged: ind.epochs_charged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRow {
    pub generation: usize,
    pub index: usize,
    pub semantics: Vec<f64>,
    pub fitness: f64,
}

/// Surrogate training data, accumulated over the whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateArchive {
    rows: Vec<ArchiveRow>,
}

impl SurrogateArchive {
    pub fn rows(&self) -> &[ArchiveRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Only fully trained individuals are accepted, once per
    /// (generation, index).
    pub fn push(&mut self, ind: &EvaluatedIndividual) -> Result<()> {
        if ind.fitness_kind != FitnessKind::TrueFull {
            return Err(Error::Config(format!(
                "only fully trained individuals enter the archive, got {:?}",
                ind.fitness_kind
            )));
        }
        if self
            .rows
            .iter()
            .any(|r| r.generation == ind.generation && r.index == ind.index)
        {
            return Err(Error::Config(format!(
                "archive already holds generation {} index {}",
                ind.generation, ind.index
            )));
        }
        self.rows.push(ArchiveRow {
            generation: ind.generation,
            index: ind.index,
            semantics: ind.semantics_partial.clone(),
            fitness: ind.fitness,
        });
        Ok(())
    }

    pub fn fit(&self, config: &KplsConfig) -> Result<KplsModel> {
        let x: Vec<Vec<f64>> = self.rows.iter().map(|r| r.semantics.clone()).collect();
        let y: Vec<f64> = self.rows.iter().map(|r| r.fitness).collect();
        KplsModel::fit(&x, &y, config)
    }
}

/// What the split needs to know about one offspring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInput<'a> {
    pub semantics: Option<&'a [f64]>,
    pub partial_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Positions, best first.
    pub full: Vec<usize>,
    pub partial: Vec<usize>,
    /// EI under the model used for ranking, when there was one.
    pub ei: Vec<Option<f64>>,
}

/// ⌈ratio·n⌉, robust to ratios like 0.4 that are inexact in binary.
pub fn full_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Ranks offspring by EI (with a model) or partial accuracy (without);
/// ties go to higher partial accuracy, then lower position. Offspring with
/// no semantics (penalties) rank last.
pub fn split_population(
    offspring: &[SplitInput<'_>],
    model: Option<&KplsModel>,
    f_best: f64,
    ratio_full: f64,
) -> Result<Split> {
    if offspring.is_empty() {
        return Err(Error::Empty("offspring"));
    }
    if !(ratio_full > 0.0 && ratio_full <= 1.0) {
        return Err(Error::Config(format!("ratio_full {ratio_full} outside (0, 1]")));
    }
    let ei: Vec<Option<f64>> = offspring
        .iter()
        .map(|o| {
            let (m, s) = (model?, o.semantics?);
            m.expected_improvement(s, f_best).ok().filter(|v| v.is_finite())
        })
        .collect();
    let score = |i: usize| -> f64 {
        if offspring[i].semantics.is_none() {
            return f64::NEG_INFINITY;
        }
        match model {
            Some(_) => ei[i].unwrap_or(f64::NEG_INFINITY),
            None => offspring[i].partial_accuracy,
        }
    };
    let mut order: Vec<usize> = (0..offspring.len()).collect();
    order.sort_by(|&a, &b| {
        score(b)
            .total_cmp(&score(a))
            .then(offspring[b].partial_accuracy.total_cmp(&offspring[a].partial_accuracy))
            .then(a.cmp(&b))
    });
    let partial = order.split_off(full_count(ratio_full, offspring.len()));
    Ok(Split {
        full: order,
        partial,
        ei,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagementConfig {
    pub ratio_full: f64,
    pub audit_fraction: f64,
    pub e_full: usize,
    pub e_partial: usize,
    pub kpls: KplsConfig,
}

/// Epoch-equivalents, one line per purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub pool: usize,
    pub partial: usize,
    pub full: usize,
    /// Post-hoc audit trainings; never influence the search.
    pub audit: usize,
    pub champion: usize,
}

impl Budget {
    /// What the search itself consumed (pool, partial and full trainings).
    pub fn evolution(&self) -> usize {
        self.pool + self.partial + self.full
    }

    pub fn total(&self) -> usize {
        self.evolution() + self.audit + self.champion
    }

    pub fn add(&mut self, other: Budget) {
        self.pool += other.pool;
        self.partial += other.partial;
        self.full += other.full;
        self.audit += other.audit;
        self.champion += other.champion;
    }
}

/// A surrogate estimate that was later checked against full training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityPair {
    pub generation: usize,
    pub index: usize,
    pub source: PairSource,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Audit,
    PromotedElite,
    Champion,
}

#[derive(Debug, Clone, Default)]
pub struct ManagementState {
    pub archive: SurrogateArchive,
    pub model: Option<KplsModel>,
    /// Best fully trained fitness seen so far.
    pub f_best: Option<f64>,
    pub fit_failures: usize,
}

/// An offspring waiting for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genotype: Genotype,
    pub seed: u64,
    pub elite: bool,
    /// Fully trained fitness already known from an earlier generation.
    pub known_full: Option<f64>,
    /// Partial evaluation already done (pre-selection pool).
    pub warm: Option<Evaluation>,
}

impl Candidate {
    fn job(&self) -> Job {
        (self.genotype.clone(), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub individuals: Vec<EvaluatedIndividual>,
    pub audits: Vec<QualityPair>,
    pub budget: Budget,
}

fn individual(
    generation: usize,
    index: usize,
    cand: &Candidate,
    eval: &Evaluation,
    epochs_charged: usize,
) -> EvaluatedIndividual {
    EvaluatedIndividual {
        generation,
        index,
        genotype: cand.genotype.clone(),
        seed: cand.seed,
        elite: cand.elite,
        stats: eval.stats,
        semantics_partial: eval.semantics.clone(),
        partial_accuracy: eval.partial_accuracy,
        fitness: 0.0,
        fitness_kind: FitnessKind::Penalty,
        predicted: None,
        ei: None,
        epochs_charged,
    }
}

fn set_true(ind: &mut EvaluatedIndividual, eval: &Evaluation) {
    match (eval.is_penalty(), eval.full_accuracy) {
        (false, Some(acc)) => {
            ind.fitness = acc;
            ind.fitness_kind = FitnessKind::TrueFull;
        }
        _ => {
            ind.fitness = 0.0;
            ind.fitness_kind = FitnessKind::Penalty;
        }
    }
}

/// One managed generation.
///
/// With `all_full` every offspring is trained to the full budget (the
/// randomly initialised first generation of plain surrogate mode).
/// Otherwise: partial training for all, split, full training for the full
/// set, archive update, refit, estimates for the partial set, EI for all.
/// Charges follow checkpoint resumption: `e_full` per fully trained
/// offspring and `e_partial` per partially trained one.
#[allow(clippy::too_many_arguments)]
pub fn generation_step(
    state: &mut ManagementState,
    generation: usize,
    offspring: &[Candidate],
    all_full: bool,
    config: &ManagementConfig,
    evaluator: &dyn Evaluator,
    exec: &Executor,
    audit_rng: &mut Rng,
) -> Result<StepOutcome> {
    if offspring.is_empty() {
        return Err(Error::Empty("offspring"));
    }
    let n = offspring.len();
    let (full_pos, partial_pos, partial_evals) = if all_full {
        ((0..n).collect::<Vec<_>>(), Vec::new(), None)
    } else {
        let cold: Vec<Job> = offspring
            .iter()
            .filter(|c| c.warm.is_none())
            .map(Candidate::job)
            .collect();
        let mut fresh = exec.partial(evaluator, &cold).into_iter();
        let evals: Vec<Evaluation> = offspring
            .iter()
            .map(|c| match &c.warm {
                Some(w) => w.clone(),
                None => fresh.next().expect("one result per cold job"),
            })
            .collect();
        let inputs: Vec<SplitInput> = evals
            .iter()
            .map(|e| SplitInput {
                semantics: (!e.is_penalty()).then_some(e.semantics.as_slice()),
                partial_accuracy: e.partial_accuracy,
            })
            .collect();
        let split = split_population(
            &inputs,
            state.model.as_ref(),
            state.f_best.unwrap_or(0.0),
            config.ratio_full,
        )?;
        (split.full, split.partial, Some(evals))
    };

    // (ii) full training for the full set.
    let full_jobs: Vec<Job> = full_pos.iter().map(|&i| offspring[i].job()).collect();
    let full_evals = exec.full(evaluator, &full_jobs);
    let mut slots: Vec<Option<EvaluatedIndividual>> = vec![None; n];
    for (&i, eval) in full_pos.iter().zip(&full_evals) {
        let mut ind = individual(generation, i, &offspring[i], eval, config.e_full);
        set_true(&mut ind, eval);
        slots[i] = Some(ind);
    }

    // (iii) archive and (iv) refit.
    for &i in &full_pos {
        let ind = slots[i].as_ref().expect("full set filled");
        if ind.fitness_kind == FitnessKind::TrueFull {
            state.archive.push(ind)?;
            state.f_best = Some(state.f_best.map_or(ind.fitness, |b| b.max(ind.fitness)));
        }
    }
    state.model = if state.archive.is_empty() {
        None
    } else {
        match state.archive.fit(&config.kpls) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("generation {generation}: surrogate fit failed ({e}); using partial accuracy");
                state.fit_failures += 1;
                None
            }
        }
    };

    // (v) estimates for the partial set.
    if let Some(evals) = &partial_evals {
        for &i in &partial_pos {
            let eval = &evals[i];
            let cand = &offspring[i];
            let mut ind = individual(generation, i, cand, eval, config.e_partial);
            if !eval.is_penalty() {
                if let Some(known) = cand.known_full {
                    ind.fitness = known;
                    ind.fitness_kind = FitnessKind::TrueFull;
                } else {
                    let estimate = state.model.as_ref().and_then(|m| m.predict(&eval.semantics).ok());
                    ind.predicted = estimate;
                    ind.fitness = estimate.map_or(eval.partial_accuracy, |p| p.mean).clamp(0.0, 1.0);
                    ind.fitness_kind = FitnessKind::SurrogateEstimate;
                }
            }
            slots[i] = Some(ind);
        }
    }
    let mut individuals: Vec<EvaluatedIndividual> =
        slots.into_iter().map(|s| s.expect("every slot filled")).collect();
    if let Some(model) = &state.model {
        let f_best = state.f_best.unwrap_or(0.0);
        for ind in individuals.iter_mut().filter(|i| i.fitness_kind != FitnessKind::Penalty) {
            ind.ei = model.expected_improvement(&ind.semantics_partial, f_best).ok();
        }
    }

    // Post-hoc audit of surrogate estimates.
    let estimated: Vec<usize> = partial_pos
        .iter()
        .copied()
        .filter(|&i| individuals[i].fitness_kind == FitnessKind::SurrogateEstimate)
        .collect();
    let wanted = if config.audit_fraction > 0.0 {
        full_count(config.audit_fraction, partial_pos.len()).min(estimated.len())
    } else {
        0
    };
    let mut picked: Vec<usize> = index::sample(audit_rng, estimated.len(), wanted)
        .into_iter()
        .map(|k| estimated[k])
        .collect();
    picked.sort_unstable();
    let audit_jobs: Vec<Job> = picked.iter().map(|&i| offspring[i].job()).collect();
    let audits = picked
        .iter()
        .zip(exec.full(evaluator, &audit_jobs))
        .filter_map(|(&i, eval)| {
            let actual = eval.full_accuracy.filter(|_| !eval.is_penalty())?;
            Some(QualityPair {
                generation,
                index: i,
                source: PairSource::Audit,
                predicted: individuals[i].fitness,
                actual,
            })
        })
        .collect();

    let budget = Budget {
        partial: partial_pos.len() * config.e_partial,
        full: full_pos.len() * config.e_full,
        audit: picked.len() * config.e_full,
        ..Default::default()
    };
    Ok(StepOutcome {
        individuals,
        audits,
        budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub index: usize,
    pub genotype: Genotype,
    pub seed: u64,
    pub partial_accuracy: f64,
    pub penalty: bool,
}

#[derive(Debug, Clone)]
pub struct Pool {
    pub records: Vec<PoolRecord>,
    /// The best `P` by partial accuracy, best first, with their partial
    /// evaluations attached.
    pub selected: Vec<Candidate>,
    pub budget: Budget,
}

/// Pre-selection: `k·P` random genotypes trained to the partial budget;
/// the best `P` become the first population.
pub fn preselect_pool(
    pool_factor: usize,
    pop_size: usize,
    genotype: &GenotypeConfig,
    master_seed: u64,
    e_partial: usize,
    evaluator: &dyn Evaluator,
    exec: &Executor,
) -> Result<Pool> {
    if pool_factor == 0 {
        return Err(Error::Config("pool_factor must be at least 1".into()));
    }
    if pop_size == 0 {
        return Err(Error::Config("pop_size must be positive".into()));
    }
    let size = pool_factor * pop_size;
    let mut rng = derive_stream(master_seed, &[tag::POOL]);
    let jobs: Vec<Job> = (0..size)
        .map(|i| {
            let g = random_genotype(genotype, &mut rng)?;
            Ok((g, derive_seed(master_seed, &[tag::POOL, i as u64])))
        })
        .collect::<Result<_>>()?;
    let evals = exec.partial(evaluator, &jobs);
    let key = |i: usize| {
        if evals[i].is_penalty() {
            f64::NEG_INFINITY
        } else {
            evals[i].partial_accuracy
        }
    };
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    let selected = order[..pop_size]
        .iter()
        .map(|&i| Candidate {
            genotype: jobs[i].0.clone(),
            seed: jobs[i].1,
            elite: false,
            known_full: None,
            warm: Some(evals[i].clone()),
        })
        .collect();
    let records = jobs
        .iter()
        .zip(&evals)
        .enumerate()
        .map(|(i, ((g, s), e))| PoolRecord {
            index: i,
            genotype: g.clone(),
            seed: *s,
            partial_accuracy: e.partial_accuracy,
            penalty: e.is_penalty(),
        })
        .collect();
    Ok(Pool {
        records,
        selected,
        budget: Budget {
            pool: size * e_partial,
            ..Default::default()
        },
    })
}
