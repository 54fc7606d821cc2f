use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decoder::Shape;
use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::rng::{derive_stream, tag};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Images with an explicit channel dimension (n, h, w, c).
pub const IDX_IMAGES_MAGIC_CHANNELS: u32 = 0x0000_0804;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled images with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Tensor4,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Tensor4, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.n != labels.len() {
            return Err(Error::Dimension {
                expected: images.n,
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            images,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn shape(&self) -> Shape {
        self.images.shape()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    /// Defines semantics and fitness.
    pub eval: Dataset,
    /// Held out for final reporting.
    pub report: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    /// 0 gives axis-aligned, noise-free shapes; 1 gives full rotation and
    /// heavy noise.
    pub difficulty: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 200,
            height: 16,
            width: 16,
            channels: 1,
            classes: 2,
            difficulty: 0.0,
        }
    }
}

/// Polygon vertex count for class `k`; class 0 is a circle.
fn vertices(class: usize) -> usize {
    match class {
        0 => 0,
        1 => 4,
        2 => 3,
        k => k + 2,
    }
}

fn class_name(class: usize) -> String {
    match vertices(class) {
        0 => "circle".into(),
        3 => "triangle".into(),
        4 => "rectangle".into(),
        v => format!("polygon{v}"),
    }
}

/// Inside test for a convex polygon given counter-clockwise vertices.
fn inside_polygon(px: f64, py: f64, verts: &[(f64, f64)]) -> bool {
    verts.iter().zip(verts.iter().cycle().skip(1)).all(|(&(ax, ay), &(bx, by))| {
        (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
    })
}

/// Filled shapes on a dark background, one class per shape family, labels
/// cycling through the classes so the histogram is exact when `n` divides.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let SyntheticSpec {
        n,
        height,
        width,
        channels,
        classes,
        difficulty,
    } = *spec;
    if classes < 2 {
        return Err(Error::Config("at least two classes are required".into()));
    }
    if n < 4 * classes {
        return Err(Error::Config(format!(
            "n = {n} is below 4 × classes = {}",
            4 * classes
        )));
    }
    if channels == 0 {
        return Err(Error::Config("channels must be positive".into()));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Config("difficulty must lie in [0, 1]".into()));
    }
    let side = height.min(width) as f64;
    if side < 6.0 {
        return Err(Error::Config(format!(
            "a {height}×{width} image cannot hold a shape; need at least 6×6"
        )));
    }
    let mut rng = derive_stream(seed, &[tag::DATA]);
    let noise = Normal::new(0.0, 0.25 * difficulty).expect("finite sd");
    let mut images = Tensor4::zeros(n, height, width, channels);
    let mut labels = Vec::with_capacity(n);
    for b in 0..n {
        let class = b % classes;
        labels.push(class);
        // Scale jitter widens and the circle shrinks less as difficulty
        // grows, so at 0 the two classes also differ in area.
        let jitter = 0.03 + 0.06 * difficulty;
        let radius = side * rng.random_range(0.29 - jitter..0.29 + jitter);
        let radius = if vertices(class) == 0 {
            radius * (0.55 + 0.45 * difficulty)
        } else {
            radius
        };
        let margin = radius + 0.5;
        let cy = rng.random_range(margin..height as f64 - margin);
        let cx = rng.random_range(margin..width as f64 - margin);
        let angle = difficulty * rng.random_range(-PI..PI);
        let intensity = rng.random_range(0.7..1.0);
        let verts: Vec<(f64, f64)> = match vertices(class) {
            0 => vec![],
            4 => {
                let (hw, hh) = (radius, radius * rng.random_range(0.75 - 0.2 * difficulty..0.95));
                let (hw, hh) = if rng.random::<bool>() { (hw, hh) } else { (hh, hw) };
                [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].to_vec()
            }
            v => (0..v)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / v as f64 - PI / 2.0;
                    (radius * t.cos(), radius * t.sin())
                })
                .collect(),
        };
        let (sin, cos) = angle.sin_cos();
        let verts: Vec<(f64, f64)> = verts
            .into_iter()
            .map(|(x, y)| (cx + x * cos - y * sin, cy + x * sin + y * cos))
            .collect();
        for y in 0..height {
            for x in 0..width {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let hit = if verts.is_empty() {
                    (px - cx).powi(2) + (py - cy).powi(2) <= radius * radius
                } else {
                    inside_polygon(px, py, &verts)
                };
                for ch in 0..channels {
                    let base = if hit { intensity } else { 0.0 };
                    let v = if difficulty > 0.0 {
                        base + noise.sample(&mut rng)
                    } else {
                        base
                    };
                    let idx = images.index(b, y, x, ch);
                    images.data[idx] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Dataset::new(images, labels, (0..classes).map(class_name).collect())
}

fn read_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::Format {
            field,
            offset,
            message: "file ends inside the header".into(),
        })
}

/// Parses an IDX image payload into `(n, h, w, c)` and scaled pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor4> {
    let magic = read_u32(bytes, 0, "magic")?;
    let dims = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_IMAGES_MAGIC_CHANNELS => 4,
        other => {
            return Err(Error::Format {
                field: "magic",
                offset: 0,
                message: format!(
                    "expected 0x{IDX_IMAGES_MAGIC:08x} or 0x{IDX_IMAGES_MAGIC_CHANNELS:08x} for images, found 0x{other:08x}"
                ),
            })
        }
    };
    let mut sizes = [1usize; 4];
    for (d, size) in sizes.iter_mut().take(dims).enumerate() {
        *size = read_u32(bytes, 4 + 4 * d, "dimension size")? as usize;
    }
    let header = 4 + 4 * dims;
    let [n, h, w, c] = sizes;
    let expected = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or(Error::Format {
            field: "dimension size",
            offset: 4,
            message: "dimension product overflows".into(),
        })?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Format {
            field: "payload",
            offset: header + payload.len().min(expected),
            message: format!("expected {expected} pixel bytes, found {}", payload.len()),
        });
    }
    let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Tensor4::from_vec(n, h, w, c, data))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            field: "magic",
            offset: 0,
            message: format!("expected 0x{IDX_LABELS_MAGIC:08x} for labels, found 0x{magic:08x}"),
        });
    }
    let n = read_u32(bytes, 4, "dimension size")? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Format {
            field: "payload",
            offset: 8 + payload.len().min(n),
            message: format!("expected {n} label bytes, found {}", payload.len()),
        });
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Builds a dataset from IDX image and label payloads. Class names are the
/// label values.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let images = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if images.n != labels.len() {
        return Err(Error::Format {
            field: "count",
            offset: 4,
            message: format!(
                "image file holds {} items but label file holds {}",
                images.n,
                labels.len()
            ),
        });
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(images, labels, (0..classes).map(|c| c.to_string()).collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    dataset_from_idx(&fs::read(images_path)?, &fs::read(labels_path)?)
}

/// IDX encoding; pixels are quantized to bytes.
pub fn encode_idx(dataset: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let t = &dataset.images;
    let mut images = Vec::with_capacity(20 + t.data.len());
    if t.c == 1 {
        images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for d in [t.n, t.h, t.w] {
            images.extend_from_slice(&(d as u32).to_be_bytes());
        }
    } else {
        images.extend_from_slice(&IDX_IMAGES_MAGIC_CHANNELS.to_be_bytes());
        for d in [t.n, t.h, t.w, t.c] {
            images.extend_from_slice(&(d as u32).to_be_bytes());
        }
    }
    images.extend(t.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    labels.extend(dataset.labels.iter().map(|&l| l as u8));
    (images, labels)
}

pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    if dataset.num_classes() > 256 {
        return Err(Error::Config("IDX labels hold at most 256 classes".into()));
    }
    let (images, labels) = encode_idx(dataset);
    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}

/// Split proportions in the order train, validation, eval, report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions(pub [f64; 4]);

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions([0.55, 0.15, 0.15, 0.15])
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::Config(format!(
                "split fractions must all be positive, got {:?}",
                self.0
            )));
        }
        if (self.0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {:?}", self.0)));
        }
        Ok(())
    }
}

/// Largest-remainder allocation of `n` items over `fractions`.
fn allocate(n: usize, fractions: &[f64; 4]) -> [usize; 4] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 4];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Stratified shuffle split. Each class is shuffled independently and cut
/// by largest remainder, so every split keeps the class proportions within
/// one instance.
pub fn split_dataset(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    fractions.validate()?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut parts: [Vec<usize>; 4] = Default::default();
    for (&class, members) in &mut by_class {
        if members.len() < 4 {
            return Err(Error::Config(format!(
                "class {class} has {} instances; stratification needs at least 4",
                members.len()
            )));
        }
        members.shuffle(&mut derive_stream(seed, &[tag::SPLIT, class as u64]));
        let counts = allocate(members.len(), &fractions.0);
        if counts.contains(&0) {
            return Err(Error::Config(format!(
                "class {class} is too small for the requested fractions"
            )));
        }
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, validation, eval, report] = parts.map(|idx| dataset.subset(&idx));
    Ok(Splits {
        train,
        validation,
        eval,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    FlipHorizontal,
    FlipVertical,
    /// Quarter turns clockwise, 1..=3.
    Rotate(u8),
    /// Brightness factor in per-mille, e.g. 1050 for +5%.
    Brightness(u16),
}

impl Augmentation {
    pub fn apply(self, img: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; img.len()];
        let px = |y: usize, x: usize| (y * w + x) * c;
        match self {
            Augmentation::FlipHorizontal | Augmentation::FlipVertical => {
                for y in 0..h {
                    for x in 0..w {
                        let (sy, sx) = if self == Augmentation::FlipHorizontal {
                            (y, w - 1 - x)
                        } else {
                            (h - 1 - y, x)
                        };
                        out[px(y, x)..px(y, x) + c].copy_from_slice(&img[px(sy, sx)..px(sy, sx) + c]);
                    }
                }
            }
            Augmentation::Rotate(turns) if turns % 4 == 2 => {
                let flipped = Augmentation::FlipHorizontal.apply(img, h, w, c);
                return Augmentation::FlipVertical.apply(&flipped, h, w, c);
            }
            Augmentation::Rotate(turns) => {
                assert_eq!(h, w, "quarter turns need square images");
                let mut cur = img.to_vec();
                for _ in 0..turns % 4 {
                    // A clockwise quarter turn maps (y, x) to (x, h-1-y).
                    for y in 0..h {
                        for x in 0..w {
                            let (dy, dx) = (x, h - 1 - y);
                            out[px(dy, dx)..px(dy, dx) + c].copy_from_slice(&cur[px(y, x)..px(y, x) + c]);
                        }
                    }
                    std::mem::swap(&mut cur, &mut out);
                }
                return cur;
            }
            Augmentation::Brightness(permille) => {
                let f = permille as f64 / 1000.0;
                for (o, v) in out.iter_mut().zip(img) {
                    *o = (v * f).clamp(0.0, 1.0);
                }
            }
        }
        out
    }

    fn random<R: rand::Rng + ?Sized>(square: bool, rng: &mut R) -> Augmentation {
        let choices = if square { 6 } else { 4 };
        match rng.random_range(0..choices) {
            0 => Augmentation::FlipHorizontal,
            1 => Augmentation::FlipVertical,
            2 => Augmentation::Brightness(rng.random_range(900..=1100)),
            3 => Augmentation::Rotate(2),
            4 => Augmentation::Rotate(1),
            _ => Augmentation::Rotate(3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub dataset: Dataset,
    /// Number of up-sampled copies appended.
    pub added: usize,
}

/// Up-samples every minority class with replacement to the majority count.
/// Copies are appended after the originals; with augmentation enabled each
/// receives one random transform.
pub fn balance_and_augment(train: &Dataset, seed: u64, config: AugmentConfig) -> Result<Balanced> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let counts = train.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = derive_stream(seed, &[tag::AUGMENT]);
    let (h, w, c) = (train.images.h, train.images.w, train.images.c);
    let mut images = train.images.data.clone();
    let mut labels = train.labels.clone();
    let mut added = 0;
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let members: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == class).collect();
        for _ in count..target {
            let src = members[rng.random_range(0..members.len())];
            let img = train.images.instance(src);
            if config.enabled {
                let aug = Augmentation::random(h == w, &mut rng);
                images.extend(aug.apply(img, h, w, c));
            } else {
                images.extend_from_slice(img);
            }
            labels.push(class);
            added += 1;
        }
    }
    let n = labels.len();
    Ok(Balanced {
        dataset: Dataset::new(
            Tensor4::from_vec(n, h, w, c, images),
            labels,
            train.class_names.clone(),
        )?,
        added,
    })
}
