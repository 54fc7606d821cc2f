//! Fitness back ends: the real trainer and the interface the engine uses.

use serde::{Deserialize, Serialize};

use crate::data::{balance_and_augment, AugmentConfig, Dataset, Splits};
use crate::decoder::{decode, GraphStats, NetworkConfig, NetworkGraph, Shape};
use crate::error::{Error, Result};
use crate::genotype::Genotype;
use crate::nn::{evaluate_accuracy, train, TrainHyper, TrainedNetwork};

/// Outcome of training one genotype. Penalised individuals carry an empty
/// semantic vector and zero accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub stats: Option<GraphStats>,
    /// Eval-split semantics after the partial budget.
    pub semantics: Vec<f64>,
    pub partial_accuracy: f64,
    /// Eval-split accuracy after the full budget; `None` for partial runs.
    pub full_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<String>,
}

impl Evaluation {
    pub fn penalty(stats: Option<GraphStats>, reason: impl Into<String>) -> Evaluation {
        Evaluation {
            stats,
            semantics: Vec::new(),
            partial_accuracy: 0.0,
            full_accuracy: None,
            penalty: Some(reason.into()),
        }
    }

    pub fn is_penalty(&self) -> bool {
        self.penalty.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub eval_accuracy: f64,
    pub report_accuracy: f64,
    pub checkpoint: Option<TrainedNetwork>,
}

/// Training budgets are fixed per evaluator, so a given `(genotype, seed)`
/// always produces the same evaluation.
pub trait Evaluator: Sync {
    fn partial(&self, genotype: &Genotype, seed: u64) -> Evaluation;

    /// Trains to the full budget; the partial snapshot is taken on the way.
    fn full(&self, genotype: &Genotype, seed: u64) -> Evaluation;

    /// Full training followed by scoring on the held-out reporting split.
    fn report(&self, genotype: &Genotype, seed: u64) -> Result<Report>;

    fn stats(&self, genotype: &Genotype) -> Option<GraphStats>;
}

pub struct RealEvaluator {
    pub train: Dataset,
    pub eval: Dataset,
    pub report: Dataset,
    pub network: NetworkConfig,
    pub hyper: TrainHyper,
}

impl RealEvaluator {
    /// Balances (and optionally augments) the training split up front so
    /// every individual sees the same data.
    pub fn new(
        splits: &Splits,
        network: NetworkConfig,
        hyper: TrainHyper,
        augment: AugmentConfig,
        seed: u64,
    ) -> Result<RealEvaluator> {
        hyper.validate()?;
        if network.num_classes != splits.train.num_classes() {
            return Err(Error::Config(format!(
                "network has {} classes but the dataset has {}",
                network.num_classes,
                splits.train.num_classes()
            )));
        }
        let train = balance_and_augment(&splits.train, seed, augment)?.dataset;
        Ok(RealEvaluator {
            train,
            eval: splits.eval.clone(),
            report: splits.report.clone(),
            network,
            hyper,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.train.shape()
    }

    fn graph(&self, genotype: &Genotype) -> Result<NetworkGraph> {
        let graph = decode(genotype, self.input_shape(), &self.network)?;
        graph.validate(self.network.max_channels)?;
        Ok(graph)
    }

    fn run(&self, genotype: &Genotype, seed: u64, epochs: usize) -> Evaluation {
        let graph = match self.graph(genotype) {
            Ok(g) => g,
            Err(e) => return Evaluation::penalty(None, e.to_string()),
        };
        let stats = Some(graph.stats());
        let hyper = TrainHyper {
            epochs_total: epochs,
            ..self.hyper
        };
        let outcome = match train(&graph, &self.train, &self.eval, &hyper, seed) {
            Ok(o) => o,
            Err(e) => return Evaluation::penalty(stats, e.to_string()),
        };
        if outcome.trained.diverged() {
            return Evaluation::penalty(stats, "training diverged");
        }
        let partial = outcome.partial.expect("partial snapshot precedes the full one");
        Evaluation {
            stats,
            semantics: partial.semantics.values,
            partial_accuracy: partial.accuracy,
            full_accuracy: (epochs == self.hyper.epochs_total)
                .then(|| outcome.full.map(|s| s.accuracy))
                .flatten(),
            penalty: None,
        }
    }
}

impl Evaluator for RealEvaluator {
    fn partial(&self, genotype: &Genotype, seed: u64) -> Evaluation {
        self.run(genotype, seed, self.hyper.semantics_epoch)
    }

    fn full(&self, genotype: &Genotype, seed: u64) -> Evaluation {
        self.run(genotype, seed, self.hyper.epochs_total)
    }

    fn report(&self, genotype: &Genotype, seed: u64) -> Result<Report> {
        let graph = self.graph(genotype)?;
        let outcome = train(&graph, &self.train, &self.eval, &self.hyper, seed)?;
        if outcome.trained.diverged() {
            return Err(Error::NonFinite {
                epoch: outcome.epochs_executed,
            });
        }
        let eval_accuracy = outcome.full.map(|s| s.accuracy).unwrap_or(0.0);
        let report_accuracy = evaluate_accuracy(&outcome.trained.network, &self.report)?;
        Ok(Report {
            eval_accuracy,
            report_accuracy,
            checkpoint: Some(outcome.trained),
        })
    }

    fn stats(&self, genotype: &Genotype) -> Option<GraphStats> {
        self.graph(genotype).ok().map(|g| g.stats())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_dataset, SplitFractions, SyntheticSpec};
    use crate::genotype::GenotypeConfig;

    fn evaluator(epochs: usize, partial: usize) -> RealEvaluator {
        let ds = generate_synthetic(
            &SyntheticSpec {
                n: 80,
                height: 8,
                width: 8,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let splits = split_dataset(&ds, SplitFractions::default(), 3).unwrap();
        let hyper = TrainHyper {
            epochs_total: epochs,
            semantics_epoch: partial,
            batch_size: 16,
            lr: 1e-2,
        };
        RealEvaluator::new(&splits, NetworkConfig::default(), hyper, AugmentConfig::default(), 3).unwrap()
    }

    fn genotype(text: &str) -> Genotype {
        let cfg = GenotypeConfig {
            min_len: 1,
            ..Default::default()
        };
        Genotype::parse(text, &cfg).unwrap()
    }

    #[test]
    fn partial_is_a_prefix_of_full() {
        let ev = evaluator(3, 1);
        let g = genotype("CONV_32_3x3 r0 <- r0\n");
        let p = ev.partial(&g, 11);
        let f = ev.full(&g, 11);
        assert!(!p.is_penalty());
        assert_eq!(p.semantics, f.semantics);
        assert_eq!(p.partial_accuracy, f.partial_accuracy);
        assert!(p.full_accuracy.is_none());
        let acc = f.full_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(p.semantics.len(), ev.eval.len() * 2);
        assert_eq!(ev.full(&g, 11), f);
    }

    #[test]
    fn decode_failures_are_penalised() {
        let mut ev = evaluator(2, 1);
        ev.network.max_channels = 16;
        let g = genotype("CONV_32_3x3 r0 <- r0\n");
        let e = ev.full(&g, 1);
        assert!(e.is_penalty());
        assert!(e.semantics.is_empty());
        assert_eq!(e.partial_accuracy, 0.0);
        assert!(e.stats.is_none());
        assert!(ev.report(&g, 1).is_err());
    }

    #[test]
    fn report_matches_full_training() {
        let ev = evaluator(2, 1);
        let g = genotype("CONV_32_3x3 r0 <- r0\n");
        let r = ev.report(&g, 5).unwrap();
        assert_eq!(Some(r.eval_accuracy), ev.full(&g, 5).full_accuracy);
        assert!((0.0..=1.0).contains(&r.report_accuracy));
        assert_eq!(r.checkpoint.unwrap().epochs_completed, 2);
    }

    #[test]
    fn class_count_mismatch_is_a_config_error() {
        let ds = generate_synthetic(&SyntheticSpec::default(), 1).unwrap();
        let splits = split_dataset(&ds, SplitFractions::default(), 1).unwrap();
        let net = NetworkConfig {
            num_classes: 3,
            ..Default::default()
        };
        let err = RealEvaluator::new(&splits, net, TrainHyper::default(), AugmentConfig::default(), 1);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
