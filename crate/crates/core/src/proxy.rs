//! Training-free stand-in evaluator.
//!
//! Fitness is a logistic squash of a few graph features plus seeded noise,
//! and the pseudo-semantics are coordinatewise logistic functions of the
//! fitness, so nearby fitness values give nearby semantic vectors.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode, GraphStats, NetworkConfig, NetworkGraph, Shape};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluation, Evaluator, Report};
use crate::genotype::{Genotype, OpKind};
use crate::rng::{derive_stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    /// Semantic dimension.
    pub dimension: usize,
    /// Standard deviation of the additive fitness noise.
    pub noise: f64,
    pub seed: u64,
    /// Weights for (evolved depth, conv count, concat count).
    pub weights: [f64; 3],
    pub midpoint: f64,
    /// Fitness range covered by the squash.
    pub range: (f64, f64),
    /// Partial accuracy is this fraction of the fitness.
    pub partial_factor: f64,
    pub input: Shape,
    pub network: NetworkConfig,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            dimension: 20,
            noise: 0.02,
            seed: 0,
            weights: [1.0, 0.6, 0.5],
            midpoint: 2.2,
            range: (0.2, 0.95),
            partial_factor: 0.8,
            input: Shape::new(16, 16, 1),
            network: NetworkConfig::default(),
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::Config("proxy dimension must be at least 2".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("proxy noise must be non-negative".into()));
        }
        let (lo, hi) = self.range;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config("proxy range must satisfy 0 <= lo < hi <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.partial_factor) {
            return Err(Error::Config("partial_factor must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    /// Longest input-to-output path counted in evolved layers.
    pub depth: usize,
    pub convs: usize,
    pub concats: usize,
}

impl Features {
    pub fn of(graph: &NetworkGraph) -> Features {
        let mut depth = vec![0usize; graph.nodes.len()];
        let (mut convs, mut concats) = (0, 0);
        for node in &graph.nodes {
            let below = node.inputs.iter().map(|&i| depth[i]).max().unwrap_or(0);
            depth[node.id] = below + node.op.is_evolved() as usize;
            if let crate::decoder::NodeOp::Layer { layer } = node.op {
                match layer.kind() {
                    OpKind::Conv => convs += 1,
                    OpKind::Concat => concats += 1,
                    _ => {}
                }
            }
        }
        Features {
            depth: depth.into_iter().max().unwrap_or(0),
            convs,
            concats,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// FNV-1a; stable across platforms and toolchains, unlike the std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyOutput {
    pub fitness: f64,
    pub semantics: Vec<f64>,
    pub stats: Option<GraphStats>,
    pub penalty: Option<String>,
}

pub struct ProxyEvaluator {
    config: ProxyConfig,
    slopes: Vec<f64>,
    offsets: Vec<f64>,
}

impl ProxyEvaluator {
    pub fn new(config: ProxyConfig) -> Result<ProxyEvaluator> {
        config.validate()?;
        let mut rng = derive_stream(config.seed, &[tag::PROXY]);
        let mut slopes = Vec::with_capacity(config.dimension);
        let mut offsets = Vec::with_capacity(config.dimension);
        for _ in 0..config.dimension {
            let a = rng.random_range(2.0..6.0);
            // Centre each coordinate's transition somewhere inside the range.
            let c: f64 = rng.random_range(config.range.0..config.range.1);
            slopes.push(a);
            offsets.push(-a * c);
        }
        Ok(ProxyEvaluator {
            config,
            slopes,
            offsets,
        })
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    /// Bound on ‖s(f) − s(g)‖ / |f − g|; the logistic slope is at most 1/4.
    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().map(|a| a * a).sum::<f64>().sqrt() / 4.0
    }

    pub fn semantics_of(&self, fitness: f64) -> Vec<f64> {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| logistic(a * fitness + b))
            .collect()
    }

    pub fn fitness_of(&self, features: Features, genotype: &Genotype) -> f64 {
        let [wd, wc, wx] = self.config.weights;
        let z = wd * features.depth as f64 + wc * features.convs as f64 + wx * features.concats as f64
            - self.config.midpoint;
        let (lo, hi) = self.config.range;
        let mut f = lo + (hi - lo) * logistic(z);
        if self.config.noise > 0.0 {
            let key = fnv1a(genotype.serialize().as_bytes());
            let mut rng = derive_stream(self.config.seed, &[tag::PROXY, key]);
            let eps: f64 = rng.sample(StandardNormal);
            f += self.config.noise * eps;
        }
        f.clamp(0.0, 1.0)
    }

    fn graph(&self, genotype: &Genotype) -> Result<NetworkGraph> {
        let graph = decode(genotype, self.config.input, &self.config.network)?;
        graph.validate(self.config.network.max_channels)?;
        Ok(graph)
    }

    pub fn evaluate(&self, genotype: &Genotype) -> ProxyOutput {
        match self.graph(genotype) {
            Ok(graph) => {
                let fitness = self.fitness_of(Features::of(&graph), genotype);
                ProxyOutput {
                    fitness,
                    semantics: self.semantics_of(fitness),
                    stats: Some(graph.stats()),
                    penalty: None,
                }
            }
            Err(e) => ProxyOutput {
                fitness: 0.0,
                semantics: vec![0.0; self.config.dimension],
                stats: None,
                penalty: Some(e.to_string()),
            },
        }
    }

    fn evaluation(&self, genotype: &Genotype, full: bool) -> Evaluation {
        let out = self.evaluate(genotype);
        if let Some(reason) = out.penalty {
            return Evaluation::penalty(out.stats, reason);
        }
        Evaluation {
            stats: out.stats,
            semantics: out.semantics,
            partial_accuracy: self.config.partial_factor * out.fitness,
            full_accuracy: full.then_some(out.fitness),
            penalty: None,
        }
    }
}

/// The training seed is ignored: proxy results depend on the genotype and
/// the proxy configuration only.
impl Evaluator for ProxyEvaluator {
    fn partial(&self, genotype: &Genotype, _seed: u64) -> Evaluation {
        self.evaluation(genotype, false)
    }

    fn full(&self, genotype: &Genotype, _seed: u64) -> Evaluation {
        self.evaluation(genotype, true)
    }

    fn report(&self, genotype: &Genotype, _seed: u64) -> Result<Report> {
        let out = self.evaluate(genotype);
        if let Some(reason) = out.penalty {
            return Err(Error::Config(format!("champion cannot be evaluated: {reason}")));
        }
        Ok(Report {
            eval_accuracy: out.fitness,
            report_accuracy: out.fitness,
            checkpoint: None,
        })
    }

    fn stats(&self, genotype: &Genotype) -> Option<GraphStats> {
        self.graph(genotype).ok().map(|g| g.stats())
    }
}
