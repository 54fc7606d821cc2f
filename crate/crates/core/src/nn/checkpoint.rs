//! Trained-network checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format": "neurolgp-checkpoint",
//!   "version": 1,
//!   "epochs_completed": 30,
//!   "history": [{"epoch": 1, "loss": 0.69, "train_accuracy": 0.5}, ...],
//!   "network": {
//!     "graph": { "input_shape": ..., "num_classes": ..., "pool_stride": ..., "nodes": [...] },
//!     "params": [{"kind": "none"}, {"kind": "conv", "weight": [...], "bias": [...]}, ...]
//!   }
//! }
//! ```
//!
//! `params[i]` belongs to `graph.nodes[i]`. Conv weights are
//! `(k·k·c_in) × c_out` row-major with the kernel offset `(ky, kx, c_in)`
//! varying slowest to fastest; dense weights are `c_in × c_out` row-major.
//! Floats are written with shortest round-trip formatting, so loading
//! restores every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{Network, NodeParams};
use crate::nn::train::{EpochRecord, TrainedNetwork};

pub const FORMAT: &str = "neurolgp-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    epochs_completed: usize,
    history: Vec<EpochRecord>,
    network: Network,
}

pub fn to_json(trained: &TrainedNetwork) -> String {
    let container = Container {
        format: FORMAT.into(),
        version: VERSION,
        epochs_completed: trained.epochs_completed,
        history: trained.history.clone(),
        network: trained.network.clone(),
    };
    serde_json::to_string(&container).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<TrainedNetwork> {
    let c: Container = serde_json::from_str(text)?;
    if c.format != FORMAT {
        return Err(Error::Config(format!("not a checkpoint: format `{}`", c.format)));
    }
    if c.version != VERSION {
        return Err(Error::Config(format!("unsupported checkpoint version {}", c.version)));
    }
    check_shapes(&c.network)?;
    Ok(TrainedNetwork {
        network: c.network,
        epochs_completed: c.epochs_completed,
        history: c.history,
    })
}

/// Parameter lengths must agree with the graph they claim to belong to.
fn check_shapes(net: &Network) -> Result<()> {
    let graph = &net.graph;
    graph.validate(usize::MAX)?;
    if net.params.len() != graph.nodes.len() {
        return Err(Error::Dimension {
            expected: graph.nodes.len(),
            got: net.params.len(),
        });
    }
    let mut rng = crate::rng::stream(0);
    let fresh = Network::init(graph.clone(), &mut rng);
    for (i, (have, want)) in net.params.iter().zip(&fresh.params).enumerate() {
        let lens = |p: &NodeParams| match p {
            NodeParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![gamma.len(), beta.len(), running_mean.len(), running_var.len()],
            p => p.trainable().iter().map(|v| v.len()).collect(),
        };
        if std::mem::discriminant(have) != std::mem::discriminant(want) || lens(have) != lens(want) {
            return Err(Error::Shape(format!(
                "parameters of node {i} do not match its layer"
            )));
        }
    }
    Ok(())
}

pub fn save(trained: &TrainedNetwork, path: &Path) -> Result<()> {
    fs::write(path, to_json(trained))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedNetwork> {
    from_json(&fs::read_to_string(path)?)
}
