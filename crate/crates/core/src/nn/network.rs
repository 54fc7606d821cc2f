use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::decoder::{NetworkGraph, NodeOp};
use crate::error::{Error, Result};
use crate::genotype::LayerOp;
use crate::nn::layers::{self, BatchNormCache};
use crate::nn::tensor::Tensor4;
use crate::rng::{stream, Rng};

/// Trainable state of one node. Gradients reuse the same layout, with the
/// batch-norm running statistics left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeParams {
    None,
    /// `weight` is `(k·k·c_in) × c_out` row-major.
    Conv { weight: Vec<f64>, bias: Vec<f64> },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    /// `weight` is `c_in × c_out` row-major.
    Dense { weight: Vec<f64>, bias: Vec<f64> },
}

impl NodeParams {
    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        match self {
            NodeParams::None => vec![],
            NodeParams::Conv { weight, bias } | NodeParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            NodeParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            NodeParams::None => vec![],
            NodeParams::Conv { weight, bias } | NodeParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            NodeParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    fn zeros_like(&self) -> NodeParams {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        match self {
            NodeParams::None => NodeParams::None,
            NodeParams::Conv { weight, bias } => NodeParams::Conv {
                weight: z(weight),
                bias: z(bias),
            },
            NodeParams::Dense { weight, bias } => NodeParams::Dense {
                weight: z(weight),
                bias: z(bias),
            },
            NodeParams::BatchNorm { gamma, beta, .. } => NodeParams::BatchNorm {
                gamma: z(gamma),
                beta: z(beta),
                running_mean: vec![],
                running_var: vec![],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

enum Cache {
    None,
    Dropout(Vec<f64>),
    MaxPool(Vec<usize>),
    BatchNorm(BatchNormCache),
}

/// Activations of every node plus what the backward pass needs.
pub struct Forward {
    pub activations: Vec<Tensor4>,
    caches: Vec<Cache>,
    /// Dense-layer output before the softmax.
    logits: usize,
}

impl Forward {
    pub fn probabilities(&self) -> &Tensor4 {
        self.activations.last().expect("non-empty graph")
    }

    /// Per-channel batch statistics of every batch-norm node, for running
    /// average updates.
    pub fn batch_stats(&self) -> impl Iterator<Item = (usize, &[f64], &[f64])> {
        self.caches.iter().enumerate().filter_map(|(i, c)| match c {
            Cache::BatchNorm(bn) if bn.batch_stats => Some((i, &bn.mean[..], &bn.var[..])),
            _ => None,
        })
    }
}

pub struct Gradients {
    pub params: Vec<NodeParams>,
    pub input: Tensor4,
    pub loss: f64,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.trainable())
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// A decoded graph with parameters for every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub graph: NetworkGraph,
    pub params: Vec<NodeParams>,
}

/// Negative log-likelihood with underflow clamped; NaN stays NaN so that
/// divergence is visible.
fn nll(p: f64) -> f64 {
    if p.is_nan() {
        f64::NAN
    } else {
        -p.max(f64::MIN_POSITIVE).ln()
    }
}

fn he_uniform<R: rand::Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

impl Network {
    /// He-uniform conv/dense weights, zero biases, identity batch norm.
    pub fn init(graph: NetworkGraph, rng: &mut Rng) -> Network {
        let params = graph
            .nodes
            .iter()
            .map(|node| {
                let c_in = node
                    .inputs
                    .first()
                    .map(|&i| graph.nodes[i].shape.c)
                    .unwrap_or(0);
                match node.op {
                    NodeOp::Layer {
                        layer: LayerOp::Conv { filters, kernel },
                    } => {
                        let fan_in = kernel * kernel * c_in;
                        NodeParams::Conv {
                            weight: he_uniform(fan_in * filters, fan_in, rng),
                            bias: vec![0.0; filters],
                        }
                    }
                    NodeOp::Layer {
                        layer: LayerOp::BatchNorm,
                    } => NodeParams::BatchNorm {
                        gamma: vec![1.0; c_in],
                        beta: vec![0.0; c_in],
                        running_mean: vec![0.0; c_in],
                        running_var: vec![1.0; c_in],
                    },
                    NodeOp::Dense { classes } => NodeParams::Dense {
                        weight: he_uniform(c_in * classes, c_in, rng),
                        bias: vec![0.0; classes],
                    },
                    _ => NodeParams::None,
                }
            })
            .collect();
        Network { graph, params }
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flat_map(|p| p.trainable())
            .map(|v| v.len())
            .sum()
    }

    /// Runs every node in topological order. Dropout masks are drawn from
    /// `rng` in node order, so equal seeds give equal masks.
    pub fn forward(&self, x: &Tensor4, phase: Phase, rng: &mut Rng) -> Result<Forward> {
        let graph = &self.graph;
        if x.shape() != graph.input_shape {
            return Err(Error::Shape(format!(
                "batch shape {} does not match network input {}",
                x.shape(),
                graph.input_shape
            )));
        }
        let mut acts: Vec<Tensor4> = Vec::with_capacity(graph.nodes.len());
        let mut caches = Vec::with_capacity(graph.nodes.len());
        let mut logits = 0;
        for (node, params) in graph.nodes.iter().zip(&self.params) {
            let input = |k: usize| &acts[node.inputs[k]];
            let (out, cache) = match (node.op, params) {
                (NodeOp::Input, _) => (x.clone(), Cache::None),
                (NodeOp::Layer { layer }, params) => match (layer, params) {
                    (LayerOp::Conv { filters, kernel }, NodeParams::Conv { weight, bias }) => (
                        layers::conv_forward(input(0), weight, bias, kernel, filters),
                        Cache::None,
                    ),
                    (LayerOp::MaxPool { kernel }, _) => {
                        let (out, argmax) =
                            layers::maxpool_forward(input(0), kernel, graph.pool_stride);
                        (out, Cache::MaxPool(argmax))
                    }
                    (LayerOp::AvgPool { kernel }, _) => (
                        layers::avgpool_forward(input(0), kernel, graph.pool_stride),
                        Cache::None,
                    ),
                    (LayerOp::Dropout { rate }, _) => match phase {
                        Phase::Eval => (input(0).clone(), Cache::None),
                        Phase::Train => {
                            let p = rate.fraction();
                            let keep = 1.0 / (1.0 - p);
                            let mask: Vec<f64> = (0..input(0).data.len())
                                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                                .collect();
                            let mut out = input(0).clone();
                            out.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                            (out, Cache::Dropout(mask))
                        }
                    },
                    (
                        LayerOp::BatchNorm,
                        NodeParams::BatchNorm {
                            gamma,
                            beta,
                            running_mean,
                            running_var,
                        },
                    ) => {
                        let running = match phase {
                            Phase::Train => None,
                            Phase::Eval => Some((&running_mean[..], &running_var[..])),
                        };
                        let (out, cache) = layers::batchnorm_forward(input(0), gamma, beta, running);
                        (out, Cache::BatchNorm(cache))
                    }
                    (LayerOp::Concat, _) => {
                        (layers::concat_forward(input(0), input(1)), Cache::None)
                    }
                    _ => return Err(Error::Shape(format!("node {} lacks parameters", node.id))),
                },
                (NodeOp::Align, _) => (
                    layers::align_forward(input(0), node.shape.h, node.shape.w),
                    Cache::None,
                ),
                (NodeOp::GlobalAvgPool, _) => (layers::gap_forward(input(0)), Cache::None),
                (NodeOp::Dense { classes }, NodeParams::Dense { weight, bias }) => {
                    logits = node.id;
                    (layers::dense_forward(input(0), weight, bias, classes), Cache::None)
                }
                (NodeOp::Softmax, _) => (layers::softmax_forward(input(0)), Cache::None),
                _ => return Err(Error::Shape(format!("node {} lacks parameters", node.id))),
            };
            debug_assert_eq!(out.shape(), node.shape, "node {} shape", node.id);
            acts.push(out);
            caches.push(cache);
        }
        Ok(Forward {
            activations: acts,
            caches,
            logits,
        })
    }

    /// Mean cross-entropy of `fwd` against `labels` and exact gradients of
    /// it with respect to every trainable parameter and the input batch.
    pub fn backward(&self, fwd: &Forward, labels: &[usize]) -> Result<Gradients> {
        let graph = &self.graph;
        let probs = fwd.probabilities();
        let (n, classes) = (probs.n, probs.c);
        if labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: labels.len(),
            });
        }
        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        for (b, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::Config(format!("label {label} out of range")));
            }
            loss += nll(probs.data[b * classes + label]);
            dlogits.data[b * classes + label] -= 1.0;
        }
        loss /= n as f64;
        dlogits.data.iter_mut().for_each(|g| *g /= n as f64);

        let acts = &fwd.activations;
        let mut grads: Vec<Option<Tensor4>> = vec![None; graph.nodes.len()];
        grads[fwd.logits] = Some(dlogits);
        let mut pgrads: Vec<NodeParams> = self.params.iter().map(NodeParams::zeros_like).collect();

        let accumulate = |slot: &mut Option<Tensor4>, g: Tensor4| match slot {
            Some(existing) => existing.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b),
            None => *slot = Some(g),
        };

        for node in graph.nodes.iter().rev() {
            if node.op == NodeOp::Input || node.op == NodeOp::Softmax {
                continue;
            }
            let Some(dy) = grads[node.id].take() else {
                continue;
            };
            let x = &acts[node.inputs[0]];
            let mut upstream: Vec<Tensor4> = Vec::with_capacity(2);
            match (node.op, &self.params[node.id], &mut pgrads[node.id]) {
                (
                    NodeOp::Layer {
                        layer: LayerOp::Conv { kernel, .. },
                    },
                    NodeParams::Conv { weight, .. },
                    NodeParams::Conv {
                        weight: dw,
                        bias: db,
                    },
                ) => upstream.push(layers::conv_backward(
                    x,
                    &acts[node.id],
                    &dy,
                    weight,
                    kernel,
                    dw,
                    db,
                )),
                (
                    NodeOp::Layer {
                        layer: LayerOp::MaxPool { .. },
                    },
                    ..,
                ) => {
                    let Cache::MaxPool(argmax) = &fwd.caches[node.id] else {
                        unreachable!("maxpool cache")
                    };
                    upstream.push(layers::maxpool_backward(x, &dy, argmax));
                }
                (
                    NodeOp::Layer {
                        layer: LayerOp::AvgPool { kernel },
                    },
                    ..,
                ) => upstream.push(layers::avgpool_backward(x, &dy, kernel, graph.pool_stride)),
                (
                    NodeOp::Layer {
                        layer: LayerOp::Dropout { .. },
                    },
                    ..,
                ) => {
                    let mut dx = dy;
                    if let Cache::Dropout(mask) = &fwd.caches[node.id] {
                        dx.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                    }
                    upstream.push(dx);
                }
                (
                    NodeOp::Layer {
                        layer: LayerOp::BatchNorm,
                    },
                    NodeParams::BatchNorm { gamma, .. },
                    NodeParams::BatchNorm {
                        gamma: dg,
                        beta: dbeta,
                        ..
                    },
                ) => {
                    let Cache::BatchNorm(cache) = &fwd.caches[node.id] else {
                        unreachable!("batch-norm cache")
                    };
                    upstream.push(layers::batchnorm_backward(&dy, gamma, cache, dg, dbeta));
                }
                (
                    NodeOp::Layer {
                        layer: LayerOp::Concat,
                    },
                    ..,
                ) => {
                    let (da, db) = layers::concat_backward(&dy, x.c);
                    upstream.push(da);
                    upstream.push(db);
                }
                (NodeOp::Align, ..) => upstream.push(layers::align_backward(x, &dy)),
                (NodeOp::GlobalAvgPool, ..) => upstream.push(layers::gap_backward(x, &dy)),
                (
                    NodeOp::Dense { .. },
                    NodeParams::Dense { weight, .. },
                    NodeParams::Dense {
                        weight: dw,
                        bias: db,
                    },
                ) => upstream.push(layers::dense_backward(x, &dy, weight, dw, db)),
                _ => return Err(Error::Shape(format!("no backward rule for node {}", node.id))),
            }
            for (&src, g) in node.inputs.iter().zip(upstream) {
                accumulate(&mut grads[src], g);
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor4::with_shape(n, graph.input_shape));
        Ok(Gradients {
            params: pgrads,
            input,
            loss,
        })
    }

    /// Train-mode forward with dropout stream `seed`, then backward.
    pub fn loss_and_gradients(&self, x: &Tensor4, labels: &[usize], seed: u64) -> Result<Gradients> {
        let fwd = self.forward(x, Phase::Train, &mut stream(seed))?;
        self.backward(&fwd, labels)
    }

    /// Mean cross-entropy only (train mode, dropout stream `seed`).
    pub fn loss(&self, x: &Tensor4, labels: &[usize], seed: u64) -> Result<f64> {
        let fwd = self.forward(x, Phase::Train, &mut stream(seed))?;
        let p = fwd.probabilities();
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(b, &l)| nll(p.data[b * p.c + l]))
            .sum();
        Ok(loss / labels.len() as f64)
    }

    /// Eval-mode class probabilities, computed in chunks of `chunk` instances.
    pub fn predict(&self, x: &Tensor4, chunk: usize) -> Result<Tensor4> {
        let classes = self.graph.num_classes;
        let mut out = Vec::with_capacity(x.n * classes);
        let mut rng = stream(0);
        let chunk = chunk.max(1);
        for start in (0..x.n).step_by(chunk) {
            let idx: Vec<usize> = (start..(start + chunk).min(x.n)).collect();
            let fwd = self.forward(&x.gather(&idx), Phase::Eval, &mut rng)?;
            out.extend_from_slice(&fwd.probabilities().data);
        }
        Ok(Tensor4::from_vec(x.n, 1, 1, classes, out))
    }
}
