//! Genotype to network DAG: effective code becomes evolved nodes, reads of
//! unwritten registers become edges from the input, and a fixed head
//! (global average pooling, dense, softmax) is appended to the terminal.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{mark_effective, Genotype, LayerOp, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

impl std::str::FromStr for Shape {
    type Err = String;

    /// `HxWxC`, e.g. `16x16x1`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let dims: Vec<usize> = s
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("malformed shape `{s}`, expected HxWxC"))?;
        match dims[..] {
            [h, w, c] if h > 0 && w > 0 && c > 0 => Ok(Shape { h, w, c }),
            _ => Err(format!("malformed shape `{s}`, expected HxWxC")),
        }
    }
}

/// Spatial policy for CONV/POOL layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolStride {
    /// Stride 1 with 'same' padding; every layer preserves spatial size.
    #[default]
    Same,
    /// Pooling uses stride = kernel (output `ceil(n / k)`); CONV stays 'same'.
    Strided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_classes: usize,
    pub max_channels: usize,
    pub pool_stride: PoolStride,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            num_classes: 2,
            max_channels: 512,
            pool_stride: PoolStride::Same,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeOp {
    Input,
    Layer { layer: LayerOp },
    /// Center crop to the node's output shape.
    Align,
    GlobalAvgPool,
    Dense { classes: usize },
    Softmax,
}

impl NodeOp {
    pub fn label(&self) -> String {
        match self {
            NodeOp::Input => "INPUT".into(),
            NodeOp::Layer { layer } => layer.to_string(),
            NodeOp::Align => "ALIGN".into(),
            NodeOp::GlobalAvgPool => "GLOBAL_AVG_POOL".into(),
            NodeOp::Dense { classes } => format!("DENSE_{classes}"),
            NodeOp::Softmax => "SOFTMAX".into(),
        }
    }

    pub fn is_evolved(&self) -> bool {
        matches!(self, NodeOp::Layer { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub op: NodeOp,
    pub inputs: Vec<usize>,
    pub shape: Shape,
    /// Genotype position this node was decoded from (evolved nodes only).
    pub source: Option<usize>,
}

/// Multi-branch network; `nodes` are stored in topological order with
/// `nodes[i].id == i`, node 0 being the input and the last node the softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub input_shape: Shape,
    pub num_classes: usize,
    pub pool_stride: PoolStride,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub layer_count: usize,
    pub concat_count: usize,
    pub concat_fraction: f64,
}

fn pooled(n: usize, k: usize, stride: PoolStride) -> usize {
    match stride {
        PoolStride::Same => n,
        PoolStride::Strided => n.div_ceil(k),
    }
}

/// Output shape of a node given its input shapes.
pub fn output_shape(
    op: &NodeOp,
    inputs: &[Shape],
    stride: PoolStride,
    input_shape: Shape,
) -> Result<Shape> {
    let first = || {
        inputs
            .first()
            .copied()
            .ok_or_else(|| Error::Shape(format!("{} has no input", op.label())))
    };
    Ok(match op {
        NodeOp::Input => input_shape,
        NodeOp::Layer { layer } => match layer {
            LayerOp::Conv { filters, .. } => Shape { c: *filters, ..first()? },
            LayerOp::MaxPool { kernel } | LayerOp::AvgPool { kernel } => {
                let s = first()?;
                Shape::new(pooled(s.h, *kernel, stride), pooled(s.w, *kernel, stride), s.c)
            }
            LayerOp::Dropout { .. } | LayerOp::BatchNorm => first()?,
            LayerOp::Concat => {
                let [a, b] = inputs else {
                    return Err(Error::Shape("CONCAT needs two inputs".into()));
                };
                if (a.h, a.w) != (b.h, b.w) {
                    return Err(Error::Shape(format!("CONCAT spatial mismatch {a} vs {b}")));
                }
                Shape::new(a.h, a.w, a.c + b.c)
            }
        },
        // Align targets are fixed at decode time; re-inference keeps them.
        NodeOp::Align => first()?,
        NodeOp::GlobalAvgPool => Shape::new(1, 1, first()?.c),
        NodeOp::Dense { classes } => {
            first()?;
            Shape::new(1, 1, *classes)
        }
        NodeOp::Softmax => first()?,
    })
}

struct Builder {
    nodes: Vec<Node>,
    stride: PoolStride,
    input_shape: Shape,
}

impl Builder {
    fn push(&mut self, op: NodeOp, inputs: Vec<usize>, source: Option<usize>) -> Result<usize> {
        let shapes: Vec<Shape> = inputs.iter().map(|&i| self.nodes[i].shape).collect();
        let shape = output_shape(&op, &shapes, self.stride, self.input_shape)?;
        self.push_shaped(op, inputs, shape, source)
    }

    fn push_shaped(
        &mut self,
        op: NodeOp,
        inputs: Vec<usize>,
        shape: Shape,
        source: Option<usize>,
    ) -> Result<usize> {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            op,
            inputs,
            shape,
            source,
        });
        Ok(id)
    }
}

pub fn decode(g: &Genotype, input_shape: Shape, config: &NetworkConfig) -> Result<NetworkGraph> {
    let analysis = mark_effective(g)?;
    let registers = g
        .instructions
        .iter()
        .flat_map(|i| std::iter::once(i.out).chain(i.inputs.iter().copied()))
        .max()
        .unwrap_or(0)
        + 1;
    let mut b = Builder {
        nodes: Vec::new(),
        stride: config.pool_stride,
        input_shape,
    };
    let input = b.push(NodeOp::Input, vec![], None)?;
    // register -> node currently holding its value; None means the raw input
    let mut holder: Vec<Option<usize>> = vec![None; registers];

    for &pos in &analysis.effective {
        let ins = &g.instructions[pos];
        let mut srcs: Vec<usize> = ins
            .inputs
            .iter()
            .map(|&r| holder[r].unwrap_or(input))
            .collect();
        if ins.op.kind() == OpKind::Concat {
            let target_h = srcs.iter().map(|&s| b.nodes[s].shape.h).min().unwrap_or(0);
            let target_w = srcs.iter().map(|&s| b.nodes[s].shape.w).min().unwrap_or(0);
            for s in srcs.iter_mut() {
                let shape = b.nodes[*s].shape;
                if (shape.h, shape.w) != (target_h, target_w) {
                    let cropped = Shape::new(target_h, target_w, shape.c);
                    *s = b.push_shaped(NodeOp::Align, vec![*s], cropped, None)?;
                }
            }
        }
        let id = b.push(NodeOp::Layer { layer: ins.op }, srcs, Some(pos))?;
        let channels = b.nodes[id].shape.c;
        if channels > config.max_channels {
            return Err(Error::ChannelCapExceeded {
                node: id,
                channels,
                max: config.max_channels,
            });
        }
        holder[ins.out] = Some(id);
    }

    let terminal = holder[0].expect("terminal writes r0");
    let gap = b.push(NodeOp::GlobalAvgPool, vec![terminal], None)?;
    let dense = b.push(
        NodeOp::Dense {
            classes: config.num_classes,
        },
        vec![gap],
        None,
    )?;
    b.push(NodeOp::Softmax, vec![dense], None)?;

    Ok(NetworkGraph {
        input_shape,
        num_classes: config.num_classes,
        pool_stride: config.pool_stride,
        nodes: b.nodes,
    })
}

impl NetworkGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .flat_map(|n| n.inputs.iter().map(move |&i| (i, n.id)))
            .collect()
    }

    pub fn output(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn evolved_ops(&self) -> Vec<LayerOp> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                NodeOp::Layer { layer } => Some(layer),
                _ => None,
            })
            .collect()
    }

    /// Re-derives every node's shape from `input_shape`. Align nodes keep
    /// their crop target; a CONCAT whose inputs disagree spatially is an
    /// invariant violation.
    pub fn infer_shapes(&mut self, input_shape: Shape) -> Result<()> {
        self.input_shape = input_shape;
        for i in 0..self.nodes.len() {
            let shapes: Vec<Shape> = self.nodes[i]
                .inputs
                .iter()
                .map(|&j| self.nodes[j].shape)
                .collect();
            let node = &self.nodes[i];
            let shape = match node.op {
                NodeOp::Align => {
                    let s = shapes[0];
                    let t = node.shape;
                    if t.h > s.h || t.w > s.w {
                        return Err(Error::Shape(format!("ALIGN cannot crop {s} to {t}")));
                    }
                    Shape::new(t.h, t.w, s.c)
                }
                ref op => output_shape(op, &shapes, self.pool_stride, input_shape)?,
            };
            self.nodes[i].shape = shape;
        }
        Ok(())
    }

    /// Checks the structural invariants of a decoded network.
    pub fn validate(&self, max_channels: usize) -> Result<()> {
        let n = self.nodes.len();
        if n < 4 {
            return Err(Error::Shape("graph too small".into()));
        }
        let mut out_degree = vec![0usize; n];
        for node in &self.nodes {
            for &i in &node.inputs {
                if i >= node.id {
                    return Err(Error::Shape(format!("edge {i}->{} breaks topological order", node.id)));
                }
                out_degree[i] += 1;
            }
            let expected = match node.op {
                NodeOp::Input => 0,
                NodeOp::Layer { layer } => layer.arity(),
                _ => 1,
            };
            if node.inputs.len() != expected {
                return Err(Error::Shape(format!("node {} has in-degree {}", node.id, node.inputs.len())));
            }
            if node.op.is_evolved() && node.shape.c > max_channels {
                return Err(Error::ChannelCapExceeded {
                    node: node.id,
                    channels: node.shape.c,
                    max: max_channels,
                });
            }
        }
        if self.nodes[0].op != NodeOp::Input
            || self.nodes.iter().filter(|n| n.op == NodeOp::Input).count() != 1
        {
            return Err(Error::Shape("exactly one INPUT node expected first".into()));
        }
        if self.nodes[n - 1].op != NodeOp::Softmax || out_degree[n - 1] != 0 {
            return Err(Error::Shape("SOFTMAX must be the sink".into()));
        }
        // every node except the sink must feed something, so all lie on an
        // input -> softmax path given in-degree checks above
        if let Some(dead) = (0..n - 1).find(|&i| out_degree[i] == 0) {
            return Err(Error::Shape(format!("node {dead} is disconnected from the output")));
        }
        Ok(())
    }

    pub fn stats(&self) -> GraphStats {
        graph_stats(self)
    }

    /// Graphviz digraph, nodes in topological order (ties by id).
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph network {\n  rankdir=TB;\n  node [shape=box];\n");
        for node in &self.nodes {
            let _ = writeln!(
                s,
                "  n{} [label=\"{}\\n{}\"];",
                node.id,
                node.op.label(),
                node.shape
            );
        }
        for (from, to) in self.edges() {
            let _ = writeln!(s, "  n{from} -> n{to};");
        }
        s.push_str("}\n");
        s
    }

    /// Export view: nodes (id, op, params, shape) and edges (from, to).
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                let (op, params) = match n.op {
                    NodeOp::Layer { layer } => {
                        let params = match layer {
                            LayerOp::Conv { filters, kernel } => {
                                json!({"filters": filters, "kernel": kernel})
                            }
                            LayerOp::MaxPool { kernel } | LayerOp::AvgPool { kernel } => {
                                json!({"kernel": kernel})
                            }
                            LayerOp::Dropout { rate } => json!({"rate": rate.fraction()}),
                            LayerOp::BatchNorm | LayerOp::Concat => json!({}),
                        };
                        let kind = serde_json::to_value(layer.kind()).expect("enum");
                        (kind, params)
                    }
                    NodeOp::Dense { classes } => (json!("DENSE"), json!({"units": classes})),
                    other => (json!(other.label()), json!({})),
                };
                json!({
                    "id": n.id,
                    "op": op,
                    "label": n.op.label(),
                    "params": params,
                    "shape": [n.shape.h, n.shape.w, n.shape.c],
                })
            })
            .collect();
        let edges: Vec<_> = self.edges().into_iter().map(|(a, b)| json!([a, b])).collect();
        json!({
            "input_shape": [self.input_shape.h, self.input_shape.w, self.input_shape.c],
            "num_classes": self.num_classes,
            "nodes": nodes,
            "edges": edges,
        })
    }
}

pub fn emit_dot(graph: &NetworkGraph) -> String {
    graph.to_dot()
}

pub fn graph_stats(graph: &NetworkGraph) -> GraphStats {
    let ops = graph.evolved_ops();
    let layer_count = ops.len();
    let concat_count = ops.iter().filter(|o| o.kind() == OpKind::Concat).count();
    GraphStats {
        layer_count,
        concat_count,
        concat_fraction: if layer_count == 0 {
            0.0
        } else {
            concat_count as f64 / layer_count as f64
        },
    }
}
