//! Dataset loading and persistence: the CIFAR-10 binary reader, a
//! procedural synthetic shape dataset, and the FQL1 batch format.
//!
//! All pixels are `f64` in `[0, 1]`. The FQL1 format stores them as
//! little-endian float64, so a save/load round trip is bit-exact.

use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

/// Canonical CIFAR-10 class names, label order 0..9.
pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

const CIFAR_RECORD_BYTES: usize = 3073;
const FQL1_MAGIC: &[u8; 4] = b"FQL1";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::format(path.display().to_string(), reason)
}

/// Images with integer labels and class names. May be empty; when
/// nonempty, all images share one (C, H, W).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            for (i, img) in images.iter().enumerate() {
                if img.dims() != first.dims() {
                    return Err(Error::shape_mismatch(
                        format!("{:?}", first.dims()),
                        format!("image {i}: {:?}", img.dims()),
                    ));
                }
                if !img.within_range(0.0, 1.0, 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "image {i} has pixels outside [0,1]"
                    )));
                }
            }
        }
        for &label in &labels {
            if label >= class_names.len() {
                return Err(Error::InvalidClass {
                    class: label,
                    num_classes: class_names.len(),
                });
            }
        }
        Ok(Self {
            images,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> &Image {
        &self.images[index]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// (C, H, W) shared by all images; None when empty.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|img| img.dims())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Image, usize)> {
        self.images.iter().zip(self.labels.iter().copied())
    }

    /// Keep only the listed classes, relabeling to their position in
    /// `classes` (so a 2-class subset has labels 0 and 1).
    pub fn filter_classes(&self, classes: &[usize]) -> Result<LabeledDataset> {
        validate_class_list(classes, self.num_classes())?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (img, label) in self.iter() {
            if let Some(pos) = classes.iter().position(|&c| c == label) {
                images.push(img.clone());
                labels.push(pos);
            }
        }
        let names = classes
            .iter()
            .map(|&c| self.class_names[c].clone())
            .collect();
        LabeledDataset::new(images, labels, names)
    }

    /// First `limit` samples in order.
    pub fn take(&self, limit: usize) -> LabeledDataset {
        let n = limit.min(self.len());
        LabeledDataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_names: self.class_names.clone(),
        }
    }

    /// Collapse RGB to single-channel luma (ITU-R 601 weights).
    pub fn grayscale(&self) -> Result<LabeledDataset> {
        let images = self
            .images
            .iter()
            .map(|img| {
                let (c, h, w) = img.dims();
                if c != 3 {
                    return Err(Error::shape_mismatch(
                        "3-channel image".to_string(),
                        format!("{c} channels"),
                    ));
                }
                let mut data = vec![0.0; h * w];
                for y in 0..h {
                    for x in 0..w {
                        data[y * w + x] = 0.299 * img.get(0, y, x)
                            + 0.587 * img.get(1, y, x)
                            + 0.114 * img.get(2, y, x);
                    }
                }
                Image::new(1, h, w, data)
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(images, self.labels.clone(), self.class_names.clone())
    }
}

fn validate_class_list(classes: &[usize], num_classes: usize) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::EmptyInput("class subset"));
    }
    for (i, &c) in classes.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::InvalidClass {
                class: c,
                num_classes,
            });
        }
        if classes[..i].contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "class {c} listed twice in subset"
            )));
        }
    }
    Ok(())
}

// ── CIFAR-10 ───────────────────────────────────────────────────────

/// Read CIFAR-10 binary batches (3073-byte records: label byte then
/// R, G, B planes of 1024 bytes each, row-major 32×32).
///
/// `path` may be one batch file or a directory, in which case every
/// `*.bin` file inside is read in name order. `subset` keeps only the
/// listed labels and relabels them to subset positions; `limit` keeps
/// the first N surviving records in file order.
pub fn load_cifar10(
    path: &Path,
    subset: Option<&[usize]>,
    limit: Option<usize>,
) -> Result<LabeledDataset> {
    if let Some(classes) = subset {
        validate_class_list(classes, 10)?;
    }
    let files = if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(format_err(path, "directory contains no .bin files"));
        }
        names
    } else {
        vec![path.to_path_buf()]
    };

    let mut images = Vec::new();
    let mut labels = Vec::new();
    'files: for file in &files {
        let bytes = fs::read(file)?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(format_err(
                file,
                format!(
                    "{} bytes is not a multiple of the {CIFAR_RECORD_BYTES}-byte record size",
                    bytes.len()
                ),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = record[0] as usize;
            if label >= 10 {
                return Err(format_err(file, format!("label byte {label} out of range 0..=9")));
            }
            let kept_label = match subset {
                Some(classes) => match classes.iter().position(|&c| c == label) {
                    Some(pos) => pos,
                    None => continue,
                },
                None => label,
            };
            let data = record[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
            images.push(Image::new(3, 32, 32, data)?);
            labels.push(kept_label);
            if limit.is_some_and(|n| images.len() >= n) {
                break 'files;
            }
        }
    }

    let class_names: Vec<String> = match subset {
        Some(classes) => classes
            .iter()
            .map(|&c| CIFAR10_CLASSES[c].to_string())
            .collect(),
        None => CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
    };
    LabeledDataset::new(images, labels, class_names)
}

// ── synthetic shapes ───────────────────────────────────────────────

/// Shape classes available to the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Square,
    Cross,
    Stripes,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Disk,
        ShapeKind::Square,
        ShapeKind::Cross,
        ShapeKind::Stripes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Disk => "disk",
            ShapeKind::Square => "square",
            ShapeKind::Cross => "cross",
            ShapeKind::Stripes => "stripes",
        }
    }
}

/// Recipe for a reproducible synthetic dataset: one geometric shape
/// per class at random position/scale, plus Gaussian pixel noise.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    classes: Vec<ShapeKind>,
    size: usize,
    samples_per_class: usize,
    noise_std: f64,
    seed: u64,
}

impl SyntheticSpec {
    pub fn new(
        classes: Vec<ShapeKind>,
        size: usize,
        samples_per_class: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::EmptyInput("synthetic class list"));
        }
        if size < 8 {
            return Err(Error::InvalidArgument(format!(
                "synthetic size {size} below minimum 8"
            )));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise std {noise_std} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            classes,
            size,
            samples_per_class,
            noise_std,
            seed,
        })
    }

    pub fn classes(&self) -> &[ShapeKind] {
        &self.classes
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples_per_class(&self) -> usize {
        self.samples_per_class
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Default for SyntheticSpec {
    /// The shipped desk-scale config: 4 shape classes × 500 images at
    /// 16×16 with light noise.
    fn default() -> Self {
        Self {
            classes: ShapeKind::ALL.to_vec(),
            size: 16,
            samples_per_class: 500,
            noise_std: 0.05,
            seed: 7,
        }
    }
}

const SHAPE_BG: f64 = 0.1;
const SHAPE_FG: f64 = 0.9;

/// Generate the dataset described by `spec`. Pure function of the
/// spec: the same spec yields a bit-identical dataset.
pub fn synthesize(spec: &SyntheticSpec) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size;
    let mut images = Vec::with_capacity(spec.classes.len() * spec.samples_per_class);
    let mut labels = Vec::with_capacity(images.capacity());

    for (class_idx, &kind) in spec.classes.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let mut data = draw_shape(kind, n, &mut rng);
            if spec.noise_std > 0.0 {
                let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
                for v in &mut data {
                    *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            images.push(Image::new(1, n, n, data).expect("generator stays in range"));
            labels.push(class_idx);
        }
    }

    let names = spec.classes.iter().map(|k| k.name().to_string()).collect();
    LabeledDataset::new(images, labels, names).expect("generator output is consistent")
}

fn draw_shape(kind: ShapeKind, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nf = n as f64;
    let mut data = vec![SHAPE_BG; n * n];
    match kind {
        ShapeKind::Disk | ShapeKind::Square | ShapeKind::Cross => {
            let cx = rng.random_range(0.3 * nf..0.7 * nf);
            let cy = rng.random_range(0.3 * nf..0.7 * nf);
            let r = rng.random_range(nf / 6.0..nf / 3.0);
            let thickness = (r / 3.0).max(0.8);
            for y in 0..n {
                for x in 0..n {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    let inside = match kind {
                        ShapeKind::Disk => dx * dx + dy * dy <= r * r,
                        ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
                        ShapeKind::Cross => {
                            (dx.abs() <= thickness && dy.abs() <= r)
                                || (dy.abs() <= thickness && dx.abs() <= r)
                        }
                        ShapeKind::Stripes => unreachable!(),
                    };
                    if inside {
                        data[y * n + x] = SHAPE_FG;
                    }
                }
            }
        }
        ShapeKind::Stripes => {
            let width = rng.random_range(1..=(n / 4).max(1));
            let phase = rng.random_range(0..2 * width);
            for y in 0..n {
                if ((y + phase) / width) % 2 == 0 {
                    for x in 0..n {
                        data[y * n + x] = SHAPE_FG;
                    }
                }
            }
        }
    }
    data
}

// ── FQL1 batch format ──────────────────────────────────────────────

/// Write a dataset as an FQL1 file: magic "FQL1", little-endian u32
/// count/channels/height/width, float64 pixels, u16 labels, then
/// class names (u32 count, per name u32 length + UTF-8 bytes).
pub fn save_batch(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let (c, h, w) = dataset.dims().unwrap_or((0, 0, 0));
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(FQL1_MAGIC)?;
    for dim in [dataset.len(), c, h, w] {
        let v = u32::try_from(dim).map_err(|_| format_err(path, "dimension overflow"))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for img in dataset.images() {
        for v in img.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for &label in dataset.labels() {
        let v = u16::try_from(label).map_err(|_| format_err(path, "label overflow"))?;
        out.write_all(&v.to_le_bytes())?;
    }
    let name_count = u32::try_from(dataset.class_names().len())
        .map_err(|_| format_err(path, "class count overflow"))?;
    out.write_all(&name_count.to_le_bytes())?;
    for name in dataset.class_names() {
        let len =
            u32::try_from(name.len()).map_err(|_| format_err(path, "class name overflow"))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read an FQL1 file written by [`save_batch`]. Round trips are
/// bit-exact.
pub fn load_batch(path: &Path) -> Result<LabeledDataset> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut reader, &mut magic, path)?;
    if &magic != FQL1_MAGIC {
        return Err(format_err(path, "bad magic (expected FQL1)"));
    }
    let count = read_u32(&mut reader, path)? as usize;
    let channels = read_u32(&mut reader, path)? as usize;
    let height = read_u32(&mut reader, path)? as usize;
    let width = read_u32(&mut reader, path)? as usize;
    let per_image = channels
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| format_err(path, "dimension overflow"))?;
    if count
        .checked_mul(per_image)
        .and_then(|v| v.checked_mul(8))
        .is_none()
    {
        return Err(format_err(path, "dimension overflow"));
    }

    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; per_image * 8];
    for _ in 0..count {
        read_exact(&mut reader, &mut buf, path)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        images.push(Image::new(channels, height, width, data)?);
    }
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(read_u16(&mut reader, path)? as usize);
    }
    let name_count = read_u32(&mut reader, path)? as usize;
    let mut class_names = Vec::with_capacity(name_count);
    for _ in 0..name_count {
        let len = read_u32(&mut reader, path)? as usize;
        if len > 1 << 20 {
            return Err(format_err(path, "class name overflow"));
        }
        let mut name = vec![0u8; len];
        read_exact(&mut reader, &mut name, path)?;
        class_names.push(
            String::from_utf8(name).map_err(|_| format_err(path, "class name is not UTF-8"))?,
        );
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(format_err(path, "trailing data after class names"));
    }
    LabeledDataset::new(images, labels, class_names)
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| format_err(path, "unexpected end of file"))
}

fn read_u32(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(reader, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16(reader: &mut impl Read, path: &Path) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(reader, &mut b, path)?;
    Ok(u16::from_le_bytes(b))
}
