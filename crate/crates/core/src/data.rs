//! IDX dataset loading, class filtering and seeded mini-batching.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Environment variable overriding the dataset root directory.
pub const DATA_ROOT_ENV: &str = "QINR_DATA_ROOT";

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw images and labels as stored in a pair of IDX files.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Swaps rows and columns of every image in place.
    pub fn transpose_images(&mut self) {
        let (r, c) = (self.rows, self.cols);
        let mut buf = vec![0u8; r * c];
        for img in self.pixels.chunks_exact_mut(r * c) {
            for y in 0..r {
                for x in 0..c {
                    buf[x * r + y] = img[y * c + x];
                }
            }
            img.copy_from_slice(&buf);
        }
        std::mem::swap(&mut self.rows, &mut self.cols);
    }
}

/// Reads a file, inflating it if it starts with the gzip magic bytes.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| idx_error(path, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn idx_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::IdxParse { path: path.to_path_buf(), reason: reason.into() }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    if bytes.len() < 16 {
        return Err(idx_error(path, "file shorter than the 16-byte image header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGES_MAGIC {
        return Err(idx_error(path, format!("bad image magic {magic:#010x}")));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let need = n * rows * cols;
    if bytes.len() - 16 < need {
        return Err(idx_error(
            path,
            format!("truncated: header promises {need} pixel bytes, found {}", bytes.len() - 16),
        ));
    }
    Ok((n, rows, cols, bytes[16..16 + need].to_vec()))
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(idx_error(path, "file shorter than the 8-byte label header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABELS_MAGIC {
        return Err(idx_error(path, format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() - 8 < n {
        return Err(idx_error(
            path,
            format!("truncated: header promises {n} labels, found {}", bytes.len() - 8),
        ));
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Parses an image file and its label file (either may be gzip-compressed).
pub fn load_idx(images: &Path, labels: &Path) -> Result<RawDataset> {
    let (n, rows, cols, pixels) = parse_images(images, &read_maybe_gz(images)?)?;
    let labels_vec = parse_labels(labels, &read_maybe_gz(labels)?)?;
    if labels_vec.len() != n {
        return Err(idx_error(
            labels,
            format!("{} labels for {n} images in {}", labels_vec.len(), images.display()),
        ));
    }
    Ok(RawDataset { rows, cols, pixels, labels: labels_vec })
}

/// Serializes images and labels as uncompressed IDX byte streams.
pub fn encode_idx(rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, labels.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Mnist,
    EmnistLetters,
    FashionMnist,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::EmnistLetters => "emnist-letters",
            DatasetName::FashionMnist => "fashion-mnist",
        }
    }

    /// Subdirectory of the data root holding this dataset.
    pub fn dir(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::EmnistLetters => "emnist",
            DatasetName::FashionMnist => "fashion-mnist",
        }
    }

    fn file_stems(self) -> (&'static str, &'static str) {
        match self {
            DatasetName::EmnistLetters => (
                "emnist-letters-train-images-idx3-ubyte",
                "emnist-letters-train-labels-idx1-ubyte",
            ),
            _ => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        }
    }

    /// Valid class labels (letters are 1..=26, A/a merged).
    pub fn labels(self) -> std::ops::RangeInclusive<u8> {
        match self {
            DatasetName::EmnistLetters => 1..=26,
            _ => 0..=9,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "emnist" | "emnist-letters" => Ok(DatasetName::EmnistLetters),
            "fashion" | "fashion-mnist" => Ok(DatasetName::FashionMnist),
            other => Err(Error::Config(format!(
                "unknown dataset {other:?} (expected mnist, emnist-letters or fashion-mnist)"
            ))),
        }
    }
}

/// Which training images to use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: DatasetName,
    /// `None` trains on every class at once. Serialized as the label or
    /// the string `"all"`.
    #[serde(with = "class_selection")]
    pub class: Option<u8>,
    pub samples_per_class: usize,
}

impl DatasetSpec {
    pub fn new(name: DatasetName, class: Option<u8>, samples_per_class: usize) -> Self {
        Self { name, class, samples_per_class }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be at least 1".into()));
        }
        if let Some(c) = self.class {
            if !self.name.labels().contains(&c) {
                return Err(Error::Config(format!("class {c} is not a valid {} label", self.name)));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<u8> {
        match self.class {
            Some(c) => vec![c],
            None => self.name.labels().collect(),
        }
    }
}

mod class_selection {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(class: &Option<u8>, s: S) -> Result<S::Ok, S::Error> {
        match class {
            Some(c) => s.serialize_u8(*c),
            None => s.serialize_str("all"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u8>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Label(u8),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Label(c) => Ok(Some(c)),
            Raw::Word(w) if w == "all" => Ok(None),
            Raw::Word(w) => Err(de::Error::custom(format!("class must be a label or \"all\", got {w:?}"))),
        }
    }
}

/// `$QINR_DATA_ROOT` if set, else the `data/` directory of this repository.
pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Locates the IDX pair under `root/<dataset dir>/`, preferring `.gz`.
pub fn dataset_files(root: &Path, name: DatasetName) -> Result<(PathBuf, PathBuf)> {
    let dir = root.join(name.dir());
    let (img, lab) = name.file_stems();
    let find = |stem: &str| {
        [format!("{stem}.gz"), stem.to_string()]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::Data(format!("{stem}[.gz] not found in {}", dir.display())))
    };
    Ok((find(img)?, find(lab)?))
}

/// One normalized image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// 784 values in [-1, 1].
    pub pixels: Vec<f64>,
    pub label: u8,
    /// Index of the image in the source file.
    pub id: usize,
}

#[inline]
pub fn normalize_byte(b: u8) -> f64 {
    b as f64 / 255.0 * 2.0 - 1.0
}

/// Maps normalized pixels back to the [0, 1] reconstruction target.
pub fn to_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)).collect()
}

/// Keeps the first `samples_per_class` images of each requested class in
/// file order and scales them to [-1, 1].
pub fn prepare(spec: &DatasetSpec, raw: &RawDataset) -> Result<Vec<Sample>> {
    spec.validate()?;
    if raw.rows != IMAGE_SIDE || raw.cols != IMAGE_SIDE {
        return Err(Error::Data(format!(
            "expected {IMAGE_SIDE}x{IMAGE_SIDE} images, found {}x{}",
            raw.rows, raw.cols
        )));
    }
    let classes = spec.classes();
    let mut taken = vec![0usize; 256];
    let mut out = Vec::new();
    for (id, &label) in raw.labels.iter().enumerate() {
        if classes.contains(&label) && taken[label as usize] < spec.samples_per_class {
            taken[label as usize] += 1;
            out.push(Sample {
                pixels: raw.image(id).iter().map(|&b| normalize_byte(b)).collect(),
                label,
                id,
            });
        }
    }
    for c in classes {
        if taken[c as usize] < spec.samples_per_class {
            return Err(Error::Data(format!(
                "class {c} of {} has {} samples, {} requested",
                spec.name, taken[c as usize], spec.samples_per_class
            )));
        }
    }
    Ok(out)
}

/// Loads and prepares a dataset from `root`. E-MNIST images are
/// transposed to upright orientation.
pub fn load_dataset(root: &Path, spec: &DatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let (img, lab) = dataset_files(root, spec.name)?;
    let mut raw = load_idx(&img, &lab)?;
    if spec.name == DatasetName::EmnistLetters {
        raw.transpose_images();
    }
    prepare(spec, &raw)
}

/// A mini-batch laid out as `[len, 1, 28, 28]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub pixels: Vec<f64>,
    pub labels: Vec<u8>,
    pub ids: Vec<usize>,
}

impl ImageBatch {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut b = ImageBatch { pixels: Vec::new(), labels: Vec::new(), ids: Vec::new() };
        for s in samples {
            b.pixels.extend_from_slice(&s.pixels);
            b.labels.push(s.label);
            b.ids.push(s.id);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.len(), 1, IMAGE_SIDE, IMAGE_SIDE]
    }

    /// Reconstruction target in [0, 1].
    pub fn target(&self) -> Vec<f64> {
        to_unit(&self.pixels)
    }
}

/// Index groups for one epoch. With a seed the order is a seeded shuffle,
/// otherwise file order. A trailing group of one sample is dropped since
/// train-mode batch norm cannot use it.
pub fn batch_indices(n: usize, batch_size: usize, epoch_seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = epoch_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Materialized mini-batches for one epoch.
pub fn batches(samples: &[Sample], batch_size: usize, epoch_seed: Option<u64>) -> Result<Vec<ImageBatch>> {
    Ok(batch_indices(samples.len(), batch_size, epoch_seed)?
        .into_iter()
        .map(|idx| ImageBatch::from_samples(idx.iter().map(|&i| &samples[i])))
        .collect())
}
