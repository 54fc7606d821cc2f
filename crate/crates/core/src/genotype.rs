//! Register-based linear genetic programs that encode multi-branch networks.
//!
//! A [`Genotype`] is a list of [`Instruction`]s stored in execution order.
//! Each instruction applies one layer operation to one register (two for
//! `CONCAT`) and writes the result into an output register. Register `r0` is
//! the output register: the last instruction writing it is the network's
//! terminal layer, and only instructions that feed it (transitively) are
//! effective. Reads of registers that were never written resolve to the raw
//! network input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTPUT_REGISTER: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpKind {
    Conv,
    MaxPool,
    AvgPool,
    Dropout,
    BatchNorm,
    Concat,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Conv,
        OpKind::MaxPool,
        OpKind::AvgPool,
        OpKind::Dropout,
        OpKind::BatchNorm,
        OpKind::Concat,
    ];

    pub fn arity(self) -> usize {
        if self == OpKind::Concat {
            2
        } else {
            1
        }
    }
}

/// Dropout rate stored in hundredths so operations stay `Eq` and `Hash`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DropoutRate(u8);

impl DropoutRate {
    pub fn from_fraction(rate: f64) -> Option<Self> {
        let pct = (rate * 100.0).round();
        if rate > 0.0 && rate < 1.0 && (pct / 100.0 - rate).abs() < 1e-9 {
            Some(DropoutRate(pct as u8))
        } else {
            None
        }
    }

    pub fn fraction(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

/// One layer operation from the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerOp {
    Conv { filters: usize, kernel: usize },
    MaxPool { kernel: usize },
    AvgPool { kernel: usize },
    Dropout { rate: DropoutRate },
    BatchNorm,
    Concat,
}

impl LayerOp {
    pub fn kind(&self) -> OpKind {
        match self {
            LayerOp::Conv { .. } => OpKind::Conv,
            LayerOp::MaxPool { .. } => OpKind::MaxPool,
            LayerOp::AvgPool { .. } => OpKind::AvgPool,
            LayerOp::Dropout { .. } => OpKind::Dropout,
            LayerOp::BatchNorm => OpKind::BatchNorm,
            LayerOp::Concat => OpKind::Concat,
        }
    }

    pub fn arity(&self) -> usize {
        self.kind().arity()
    }
}

impl fmt::Display for LayerOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerOp::Conv { filters, kernel } => write!(f, "CONV_{filters}_{kernel}x{kernel}"),
            LayerOp::MaxPool { kernel } => write!(f, "MAXPOOL_{kernel}x{kernel}"),
            LayerOp::AvgPool { kernel } => write!(f, "AVGPOOL_{kernel}x{kernel}"),
            LayerOp::Dropout { rate } => write!(f, "DROPOUT_{}", rate.fraction()),
            LayerOp::BatchNorm => f.write_str("BATCH_NORM"),
            LayerOp::Concat => f.write_str("CONCAT"),
        }
    }
}

fn parse_kernel(token: &str) -> std::result::Result<usize, String> {
    let (a, b) = token
        .split_once('x')
        .ok_or_else(|| format!("malformed kernel size `{token}`"))?;
    let a: usize = a.parse().map_err(|_| format!("malformed kernel size `{token}`"))?;
    let b: usize = b.parse().map_err(|_| format!("malformed kernel size `{token}`"))?;
    if a != b {
        return Err(format!("non-square kernel `{token}`"));
    }
    Ok(a)
}

impl FromStr for LayerOp {
    type Err = String;

    /// Parses the token syntax only; membership in a search space is checked
    /// separately by [`SearchSpace::check`].
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "BATCH_NORM" => return Ok(LayerOp::BatchNorm),
            "CONCAT" => return Ok(LayerOp::Concat),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("CONV_") {
            let (filters, kernel) = rest
                .split_once('_')
                .ok_or_else(|| format!("malformed conv token `{s}`"))?;
            let filters = filters
                .parse()
                .map_err(|_| format!("malformed filter count in `{s}`"))?;
            return Ok(LayerOp::Conv {
                filters,
                kernel: parse_kernel(kernel)?,
            });
        }
        if let Some(rest) = s.strip_prefix("MAXPOOL_") {
            return Ok(LayerOp::MaxPool {
                kernel: parse_kernel(rest)?,
            });
        }
        if let Some(rest) = s.strip_prefix("AVGPOOL_") {
            return Ok(LayerOp::AvgPool {
                kernel: parse_kernel(rest)?,
            });
        }
        if let Some(rest) = s.strip_prefix("DROPOUT_") {
            let rate: f64 = rest
                .parse()
                .map_err(|_| format!("malformed dropout rate in `{s}`"))?;
            let rate = DropoutRate::from_fraction(rate)
                .ok_or_else(|| format!("dropout rate `{rest}` outside (0,1)"))?;
            return Ok(LayerOp::Dropout { rate });
        }
        Err(format!("unknown op token `{s}`"))
    }
}

impl Serialize for LayerOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The finite set of parameter values operations may take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub dropout_rates: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            filters: vec![32, 64, 128],
            kernels: vec![3, 5],
            dropout_rates: vec![0.3, 0.5],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.kernels.is_empty() || self.dropout_rates.is_empty() {
            return Err(Error::Config("search space sets must be non-empty".into()));
        }
        if self.filters.contains(&0) {
            return Err(Error::Config("filter counts must be positive".into()));
        }
        if self.kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::Config("kernel sizes must be positive and odd".into()));
        }
        if self
            .dropout_rates
            .iter()
            .any(|&r| DropoutRate::from_fraction(r).is_none())
        {
            return Err(Error::Config(
                "dropout rates must lie in (0,1) with at most two decimals".into(),
            ));
        }
        Ok(())
    }

    /// Every operation of the space, in a fixed order.
    pub fn ops(&self) -> Vec<LayerOp> {
        let mut ops = Vec::new();
        for &filters in &self.filters {
            for &kernel in &self.kernels {
                ops.push(LayerOp::Conv { filters, kernel });
            }
        }
        for &kernel in &self.kernels {
            ops.push(LayerOp::MaxPool { kernel });
        }
        for &kernel in &self.kernels {
            ops.push(LayerOp::AvgPool { kernel });
        }
        for &rate in &self.dropout_rates {
            if let Some(rate) = DropoutRate::from_fraction(rate) {
                ops.push(LayerOp::Dropout { rate });
            }
        }
        ops.push(LayerOp::BatchNorm);
        ops.push(LayerOp::Concat);
        ops
    }

    /// Explains why `op` is outside the space, if it is.
    pub fn check(&self, op: &LayerOp) -> std::result::Result<(), String> {
        let kernel_ok = |k: &usize| self.kernels.contains(k);
        match op {
            LayerOp::Conv { filters, kernel } => {
                if !self.filters.contains(filters) {
                    return Err(format!("filter count {filters} not in {:?}", self.filters));
                }
                if !kernel_ok(kernel) {
                    return Err(format!("kernel size {kernel} not in {:?}", self.kernels));
                }
            }
            LayerOp::MaxPool { kernel } | LayerOp::AvgPool { kernel } => {
                if !kernel_ok(kernel) {
                    return Err(format!("kernel size {kernel} not in {:?}", self.kernels));
                }
            }
            LayerOp::Dropout { rate } => {
                let known = self
                    .dropout_rates
                    .iter()
                    .filter_map(|&r| DropoutRate::from_fraction(r))
                    .any(|r| r == *rate);
                if !known {
                    return Err(format!(
                        "dropout rate {} not in {:?}",
                        rate.fraction(),
                        self.dropout_rates
                    ));
                }
            }
            LayerOp::BatchNorm | LayerOp::Concat => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenotypeConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub registers: usize,
    pub search_space: SearchSpace,
}

impl Default for GenotypeConfig {
    fn default() -> Self {
        GenotypeConfig {
            min_len: 5,
            max_len: 25,
            registers: 7,
            search_space: SearchSpace::default(),
        }
    }
}

impl GenotypeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 {
            return Err(Error::Config("min_len must be at least 1".into()));
        }
        if self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.registers < 3 {
            return Err(Error::Config("at least 3 registers are required".into()));
        }
        self.search_space.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: LayerOp,
    pub out: usize,
    /// One register, or two for `CONCAT`.
    pub inputs: Vec<usize>,
}

impl Instruction {
    pub fn new(op: LayerOp, out: usize, inputs: Vec<usize>) -> Self {
        debug_assert_eq!(inputs.len(), op.arity());
        Instruction { op, out, inputs }
    }

    fn random<R: Rng + ?Sized>(ops: &[LayerOp], registers: usize, rng: &mut R) -> Self {
        let op = *ops.choose(rng).expect("search space is never empty");
        let out = rng.random_range(0..registers);
        let inputs = (0..op.arity())
            .map(|_| rng.random_range(0..registers))
            .collect();
        Instruction { op, out, inputs }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} r{} <- ", self.op, self.out)?;
        for (i, r) in self.inputs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "r{r}")?;
        }
        Ok(())
    }
}

fn parse_register(token: &str) -> std::result::Result<usize, String> {
    token
        .trim()
        .strip_prefix('r')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format!("malformed register `{}`", token.trim()))
}

impl FromStr for Instruction {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, Self::Err> {
        let (lhs, rhs) = line
            .split_once("<-")
            .ok_or_else(|| "expected `<OP> r<out> <- r<in>[, r<in>]`".to_string())?;
        let mut lhs = lhs.split_whitespace();
        let op: LayerOp = lhs.next().ok_or("missing op token")?.parse()?;
        let out = parse_register(lhs.next().ok_or("missing output register")?)?;
        if let Some(extra) = lhs.next() {
            return Err(format!("unexpected token `{extra}`"));
        }
        let inputs = rhs
            .split(',')
            .map(parse_register)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if inputs.len() != op.arity() {
            return Err(format!(
                "{op} takes {} input register(s), got {}",
                op.arity(),
                inputs.len()
            ));
        }
        Ok(Instruction { op, out, inputs })
    }
}

/// A linear program in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Genotype {
    pub instructions: Vec<Instruction>,
}

impl Serialize for Genotype {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.instructions.iter().map(|i| i.to_string()))
    }
}

impl<'de> Deserialize<'de> for Genotype {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let lines = Vec::<String>::deserialize(d)?;
        let instructions = lines
            .iter()
            .map(|l| l.parse())
            .collect::<std::result::Result<Vec<Instruction>, _>>()
            .map_err(serde::de::Error::custom)?;
        Ok(Genotype { instructions })
    }
}

impl Genotype {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Genotype { instructions }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn writes_output(&self) -> bool {
        self.instructions.iter().any(|i| i.out == OUTPUT_REGISTER)
    }

    /// Checks every structural invariant against `config`.
    pub fn validate(&self, config: &GenotypeConfig) -> Result<()> {
        let n = self.len();
        if n < config.min_len || n > config.max_len {
            return Err(Error::Config(format!(
                "genotype length {n} outside [{}, {}]",
                config.min_len, config.max_len
            )));
        }
        for (i, ins) in self.instructions.iter().enumerate() {
            if ins.inputs.len() != ins.op.arity() {
                return Err(Error::Config(format!("instruction {i}: wrong arity")));
            }
            if ins.out >= config.registers || ins.inputs.iter().any(|&r| r >= config.registers) {
                return Err(Error::Config(format!("instruction {i}: register out of range")));
            }
            config
                .search_space
                .check(&ins.op)
                .map_err(|m| Error::Config(format!("instruction {i}: {m}")))?;
        }
        if !self.writes_output() {
            return Err(Error::NoOutput);
        }
        Ok(())
    }

    /// Parses the line format, validating vocabulary, registers and length.
    pub fn parse(text: &str, config: &GenotypeConfig) -> Result<Self> {
        let mut instructions = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let ins: Instruction = line.parse().map_err(err)?;
            config.search_space.check(&ins.op).map_err(err)?;
            if let Some(&r) = std::iter::once(&ins.out)
                .chain(&ins.inputs)
                .find(|&&r| r >= config.registers)
            {
                return Err(err(format!(
                    "register r{r} out of range (R = {})",
                    config.registers
                )));
            }
            instructions.push(ins);
            if instructions.len() > config.max_len {
                return Err(err(format!(
                    "genotype longer than max_len {}",
                    config.max_len
                )));
            }
        }
        if instructions.len() < config.min_len.max(1) {
            return Err(Error::Parse {
                line: last_line,
                message: format!(
                    "genotype has {} instruction(s), fewer than min_len {}",
                    instructions.len(),
                    config.min_len.max(1)
                ),
            });
        }
        Ok(Genotype { instructions })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            out.push_str(&ins.to_string());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Rewrites the last instruction's output to `r0` when nothing writes it.
pub fn repair(mut g: Genotype) -> Genotype {
    if !g.writes_output() {
        if let Some(last) = g.instructions.last_mut() {
            last.out = OUTPUT_REGISTER;
        }
    }
    g
}

pub fn random_genotype<R: Rng + ?Sized>(config: &GenotypeConfig, rng: &mut R) -> Result<Genotype> {
    config.validate()?;
    let ops = config.search_space.ops();
    let len = rng.random_range(config.min_len..=config.max_len);
    let instructions = (0..len)
        .map(|_| Instruction::random(&ops, config.registers, rng))
        .collect();
    Ok(repair(Genotype { instructions }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveAnalysis {
    /// Positions of effective instructions, ascending (execution order).
    pub effective: Vec<usize>,
    /// `(position, register)` reads that resolve to the network input.
    pub input_bound_reads: Vec<(usize, usize)>,
    /// Position of the last writer of `r0`.
    pub terminal: usize,
}

impl EffectiveAnalysis {
    pub fn is_effective(&self, pos: usize) -> bool {
        self.effective.binary_search(&pos).is_ok()
    }
}

/// Backward liveness scan from the output register.
pub fn mark_effective(g: &Genotype) -> Result<EffectiveAnalysis> {
    let terminal = g
        .instructions
        .iter()
        .rposition(|i| i.out == OUTPUT_REGISTER)
        .ok_or(Error::NoOutput)?;

    // register -> readers still waiting for a producer
    let mut needed: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    needed.insert(OUTPUT_REGISTER, Vec::new());
    let mut effective = Vec::new();
    for (pos, ins) in g.instructions.iter().enumerate().rev() {
        if needed.remove(&ins.out).is_none() {
            continue;
        }
        effective.push(pos);
        for &r in &ins.inputs {
            let readers = needed.entry(r).or_default();
            if !readers.contains(&pos) {
                readers.push(pos);
            }
        }
    }
    effective.reverse();

    let mut input_bound_reads: Vec<(usize, usize)> = needed
        .into_iter()
        .flat_map(|(reg, readers)| readers.into_iter().map(move |pos| (pos, reg)))
        .collect();
    input_bound_reads.sort_unstable();

    Ok(EffectiveAnalysis {
        effective,
        input_bound_reads,
        terminal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    pub p_micro: f64,
    pub p_macro: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates {
            p_micro: 0.3,
            p_macro: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroMove {
    Insert,
    Delete,
}

/// Changes exactly one field (op parameter, output register or one input
/// register) of one instruction. Ops are only swapped for ops of equal arity.
pub fn micro_mutate<R: Rng + ?Sized>(g: &Genotype, config: &GenotypeConfig, rng: &mut R) -> Genotype {
    let mut child = g.clone();
    if child.is_empty() {
        return child;
    }
    let ops = config.search_space.ops();
    let r0_writers = child
        .instructions
        .iter()
        .filter(|i| i.out == OUTPUT_REGISTER)
        .count();
    let pos = rng.random_range(0..child.len());
    let ins = &mut child.instructions[pos];

    let alternatives: Vec<LayerOp> = ops
        .iter()
        .copied()
        .filter(|o| o.arity() == ins.op.arity() && *o != ins.op)
        .collect();
    // Moving the sole r0 writer off r0 would be undone by repair.
    let out_mutable = !(ins.out == OUTPUT_REGISTER && r0_writers == 1);

    let mut fields = vec![];
    if !alternatives.is_empty() {
        fields.push(0);
    }
    if out_mutable {
        fields.push(1);
    }
    fields.extend((0..ins.inputs.len()).map(|k| 2 + k));

    match *fields.choose(rng).expect("input registers always mutable") {
        0 => ins.op = *alternatives.choose(rng).expect("non-empty"),
        1 => ins.out = other_register(ins.out, config.registers, rng),
        k => ins.inputs[k - 2] = other_register(ins.inputs[k - 2], config.registers, rng),
    }
    repair(child)
}

fn other_register<R: Rng + ?Sized>(current: usize, registers: usize, rng: &mut R) -> usize {
    let r = rng.random_range(0..registers - 1);
    if r >= current {
        r + 1
    } else {
        r
    }
}

/// Inserts or deletes one random instruction; a move that would leave the
/// length bounds is swapped for the opposite move.
pub fn macro_mutate<R: Rng + ?Sized>(
    g: &Genotype,
    mv: MacroMove,
    config: &GenotypeConfig,
    rng: &mut R,
) -> Genotype {
    let mut child = g.clone();
    let can_insert = child.len() < config.max_len;
    let can_delete = child.len() > config.min_len;
    let mv = match (mv, can_insert, can_delete) {
        (MacroMove::Delete, _, true) | (MacroMove::Insert, false, true) => MacroMove::Delete,
        (_, true, _) => MacroMove::Insert,
        _ => return repair(child),
    };
    match mv {
        MacroMove::Insert => {
            let ops = config.search_space.ops();
            let pos = rng.random_range(0..=child.len());
            let ins = Instruction::random(&ops, config.registers, rng);
            child.instructions.insert(pos, ins);
        }
        MacroMove::Delete => {
            let pos = rng.random_range(0..child.len());
            child.instructions.remove(pos);
        }
    }
    repair(child)
}

/// Applies micro mutation with probability `p_micro`, then a random macro
/// move with probability `p_macro`.
pub fn mutate<R: Rng + ?Sized>(
    g: &Genotype,
    rates: MutationRates,
    config: &GenotypeConfig,
    rng: &mut R,
) -> Genotype {
    let mut child = g.clone();
    if rng.random_bool(rates.p_micro.clamp(0.0, 1.0)) {
        child = micro_mutate(&child, config, rng);
    }
    if rng.random_bool(rates.p_macro.clamp(0.0, 1.0)) {
        let mv = if rng.random_bool(0.5) {
            MacroMove::Insert
        } else {
            MacroMove::Delete
        };
        child = macro_mutate(&child, mv, config, rng);
    }
    repair(child)
}

const CROSSOVER_ATTEMPTS: usize = 16;

/// Two-point linear crossover: exchanges one contiguous segment of each
/// parent. Identical parents yield clones. Cut points are redrawn while a
/// child would leave the length bounds; after the last attempt children are
/// truncated or padded with random instructions.
pub fn crossover<R: Rng + ?Sized>(
    a: &Genotype,
    b: &Genotype,
    config: &GenotypeConfig,
    rng: &mut R,
) -> (Genotype, Genotype) {
    if a == b || a.is_empty() || b.is_empty() {
        return (repair(a.clone()), repair(b.clone()));
    }
    let in_bounds = |n: usize| n >= config.min_len && n <= config.max_len;
    let mut children = (Vec::new(), Vec::new());
    for _ in 0..CROSSOVER_ATTEMPTS {
        let (a0, a1) = segment(a.len(), rng);
        let (b0, b1) = segment(b.len(), rng);
        let len_a = a.len() - (a1 - a0) + (b1 - b0);
        let len_b = b.len() - (b1 - b0) + (a1 - a0);
        let splice = |x: &Genotype, x0, x1, y: &Genotype, y0, y1| -> Vec<Instruction> {
            let mut v = x.instructions[..x0].to_vec();
            v.extend_from_slice(&y.instructions[y0..y1]);
            v.extend_from_slice(&x.instructions[x1..]);
            v
        };
        children = (splice(a, a0, a1, b, b0, b1), splice(b, b0, b1, a, a0, a1));
        if in_bounds(len_a) && in_bounds(len_b) {
            break;
        }
    }
    let ops = config.search_space.ops();
    let mut clamp = |mut v: Vec<Instruction>| {
        v.truncate(config.max_len);
        while v.len() < config.min_len {
            v.push(Instruction::random(&ops, config.registers, rng));
        }
        repair(Genotype::new(v))
    };
    let first = clamp(children.0);
    let second = clamp(children.1);
    (first, second)
}

/// A non-empty half-open segment `[start, end)` of a sequence of length `n`.
fn segment<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let start = rng.random_range(0..n);
    let end = rng.random_range(start + 1..=n);
    (start, end)
}
