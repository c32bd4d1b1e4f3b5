//! IDX ingestion (MNIST / Fashion-MNIST) and the fixed validation split.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Flat `[0, 1]` feature rows with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: usize,
    images: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: usize, images: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if features == 0 {
            return Err(Error::InvalidShape(
                "dataset needs at least one feature".into(),
            ));
        }
        if images.len() != features * labels.len() {
            return Err(Error::CountMismatch {
                images: images.len() / features,
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {l} outside 0-9")));
        }
        Ok(Self {
            features,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.features..(i + 1) * self.features]
    }

    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features: self.features,
            images,
            labels,
        }
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file into `(count, rows * cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let truncated = || Error::TruncatedIdx(path.to_path_buf());
    let magic = be_u32(bytes, 0).ok_or_else(truncated)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4).ok_or_else(truncated)? as usize;
    let rows = be_u32(bytes, 8).ok_or_else(truncated)? as usize;
    let cols = be_u32(bytes, 12).ok_or_else(truncated)? as usize;
    let features = rows * cols;
    let payload = bytes.get(16..).ok_or_else(truncated)?;
    if payload.len() != n * features {
        return Err(truncated());
    }
    Ok((n, features, payload.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let truncated = || Error::TruncatedIdx(path.to_path_buf());
    let magic = be_u32(bytes, 0).ok_or_else(truncated)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4).ok_or_else(truncated)? as usize;
    let payload = bytes.get(8..).ok_or_else(truncated)?;
    if payload.len() != n {
        return Err(truncated());
    }
    Ok(payload.to_vec())
}

/// Loads an image/label IDX pair, scaling pixels by 1/255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let (n, features, pixels) = parse_idx_images(&read_file(ip)?, ip)?;
    let labels = parse_idx_labels(&read_file(lp)?, lp)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let images = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(features, images, labels)
}

pub fn encode_idx_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols) as usize;
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fmnist,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fmnist => "fmnist",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fmnist" | "fashion-mnist" => Ok(DatasetKind::Fmnist),
            _ => Err(Error::InvalidArgument(format!("unknown dataset {s:?}"))),
        }
    }
}

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Directory holding the four standard IDX files for `kind`: either
/// `<root>/<kind>/` or `<root>` itself.
pub fn locate_dataset(root: &Path, kind: DatasetKind) -> Result<PathBuf> {
    let nested = root.join(kind.to_string());
    for dir in [nested.as_path(), root] {
        if dir.join(TRAIN_IMAGES).is_file() {
            return Ok(dir.to_path_buf());
        }
    }
    Err(Error::io(
        nested.join(TRAIN_IMAGES),
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX files not found"),
    ))
}

/// The full training file and the test file.
pub fn load_standard(root: &Path, kind: DatasetKind) -> Result<(Dataset, Dataset)> {
    let dir = locate_dataset(root, kind)?;
    let train = load_idx(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))?;
    let test = load_idx(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Random hold-out of `test_size` indices; both sides returned ascending.
pub fn split(len: usize, test_size: usize, rng: &mut RngStream) -> Result<SplitIndices> {
    if test_size >= len && !(test_size == 0 && len == 0) {
        return Err(Error::InvalidArgument(format!(
            "validation size {test_size} must be smaller than dataset size {len}"
        )));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    let mut validation = idx[..test_size].to_vec();
    let mut train = idx[test_size..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, validation })
}

/// Train / validation / test partitions used by one experiment.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl DataSplits {
    /// Holds out a validation set the size of the test set.
    pub fn from_train_test(
        full_train: &Dataset,
        test: Dataset,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let parts = split(full_train.len(), test.len(), rng)?;
        Ok(Self {
            train: full_train.subset(&parts.train),
            validation: full_train.subset(&parts.validation),
            test,
        })
    }
}
