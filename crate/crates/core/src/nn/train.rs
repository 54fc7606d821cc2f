use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decoder::NetworkGraph;
use crate::error::{Error, Result};
use crate::nn::network::{Network, NodeParams, Phase};
use crate::nn::tensor::Tensor4;
use crate::rng::{derive_stream, tag};

pub const BN_MOMENTUM: f64 = 0.9;
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs_total: usize,
    /// Epoch after which the semantic vector is snapshotted.
    pub semantics_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs_total: 30,
            semantics_epoch: 10,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.semantics_epoch == 0 || self.semantics_epoch > self.epochs_total {
            return Err(Error::Config(format!(
                "need epochs_total ≥ semantics_epoch ≥ 1, got {} and {}",
                self.epochs_total, self.semantics_epoch
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss; `None` for a diverged epoch.
    pub loss: Option<f64>,
    /// Accuracy of the train-mode predictions seen during the epoch.
    pub train_accuracy: f64,
    /// Set when the loss became non-finite and training stopped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub network: Network,
    pub epochs_completed: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedNetwork {
    pub fn diverged(&self) -> bool {
        self.history.last().is_some_and(|r| r.diverged)
    }
}

/// Flattened softmax outputs over a split, instance-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticVector {
    pub values: Vec<f64>,
    pub epoch: usize,
}

/// Network state at one epoch: semantics and accuracy on the eval split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub semantics: SemanticVector,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub trained: TrainedNetwork,
    /// `None` when training diverged before the epoch was reached.
    pub partial: Option<Snapshot>,
    pub full: Option<Snapshot>,
    /// Epochs actually run, including a diverged one.
    pub epochs_executed: usize,
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network, lr: f64) -> Adam {
        let shapes: Vec<Vec<f64>> = net
            .params
            .iter()
            .flat_map(|p| p.trainable())
            .map(|v| vec![0.0; v.len()])
            .collect();
        Adam {
            lr,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &[NodeParams]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let params = net.params.iter_mut().flat_map(|p| p.trainable_mut());
        let grads = grads.iter().flat_map(|g| g.trainable());
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn update_running_stats(net: &mut Network, stats: Vec<(usize, Vec<f64>, Vec<f64>)>) {
    for (node, mean, var) in stats {
        if let NodeParams::BatchNorm {
            running_mean,
            running_var,
            ..
        } = &mut net.params[node]
        {
            for (r, b) in running_mean.iter_mut().zip(&mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
            for (r, b) in running_var.iter_mut().zip(&var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    // Strict comparison keeps the lowest index among ties.
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn snapshot(network: &Network, eval: &Dataset, epoch: usize) -> Result<Snapshot> {
    let probs = predict(network, eval)?;
    let accuracy = accuracy_of(&probs, &eval.labels);
    Ok(Snapshot {
        semantics: SemanticVector {
            values: probs.data,
            epoch,
        },
        accuracy,
    })
}

fn accuracy_of(probs: &Tensor4, labels: &[usize]) -> f64 {
    let hits = probs
        .data
        .chunks_exact(probs.c)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    hits as f64 / labels.len() as f64
}

fn predict(network: &Network, split: &Dataset) -> Result<Tensor4> {
    if split.is_empty() {
        return Err(Error::Empty("split"));
    }
    network.predict(&split.images, PREDICT_CHUNK)
}

/// Mini-batch Adam on `train`. The eval-split semantics are snapshotted
/// after `semantics_epoch` and training then continues from that state.
pub fn train(
    graph: &NetworkGraph,
    train: &Dataset,
    eval: &Dataset,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if eval.is_empty() {
        return Err(Error::Empty("eval split"));
    }
    let mut network = Network::init(graph.clone(), &mut derive_stream(seed, &[tag::INIT]));
    let mut rng = derive_stream(seed, &[tag::TRAIN]);
    let mut adam = Adam::new(&network, hyper.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs_total);
    let mut partial = None;
    let mut full = None;
    for epoch in 1..=hyper.epochs_total {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        let mut diverged = false;
        for chunk in order.chunks(hyper.batch_size) {
            let x = train.images.gather(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let fwd = network.forward(&x, Phase::Train, &mut rng)?;
            let grads = network.backward(&fwd, &labels)?;
            if !grads.loss.is_finite() {
                diverged = true;
                break;
            }
            loss_sum += grads.loss * chunk.len() as f64;
            hits += fwd
                .probabilities()
                .data
                .chunks_exact(graph.num_classes)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            let stats = fwd
                .batch_stats()
                .map(|(i, m, v)| (i, m.to_vec(), v.to_vec()))
                .collect();
            update_running_stats(&mut network, stats);
            adam.step(&mut network, &grads.params);
        }
        let n = train.len() as f64;
        history.push(EpochRecord {
            epoch,
            loss: (!diverged).then(|| loss_sum / n),
            train_accuracy: hits as f64 / n,
            diverged,
        });
        if diverged {
            log::warn!("training diverged at epoch {epoch}");
            return Ok(TrainOutcome {
                trained: TrainedNetwork {
                    network,
                    epochs_completed: epoch - 1,
                    history,
                },
                partial,
                full,
                epochs_executed: epoch,
            });
        }
        if epoch == hyper.semantics_epoch {
            partial = Some(snapshot(&network, eval, epoch)?);
        }
        if epoch == hyper.epochs_total {
            full = if hyper.semantics_epoch == epoch {
                partial.clone()
            } else {
                Some(snapshot(&network, eval, epoch)?)
            };
        }
    }
    Ok(TrainOutcome {
        trained: TrainedNetwork {
            network,
            epochs_completed: hyper.epochs_total,
            history,
        },
        partial,
        full,
        epochs_executed: hyper.epochs_total,
    })
}

/// Fraction of argmax predictions equal to the label; ties go to the lower
/// class index.
pub fn evaluate_accuracy(network: &Network, split: &Dataset) -> Result<f64> {
    Ok(accuracy_of(&predict(network, split)?, &split.labels))
}

pub fn extract_semantics(trained: &TrainedNetwork, split: &Dataset) -> Result<SemanticVector> {
    Ok(SemanticVector {
        values: predict(&trained.network, split)?.data,
        epoch: trained.epochs_completed,
    })
}
