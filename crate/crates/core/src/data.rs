//! Dataset loading, normalization and mini-batch streaming.
//!
//! The on-disk format is the big-endian, magic-tagged IDX encoding used by
//! the standard handwritten-digit files; gzip-compressed files are detected
//! by their two-byte signature and decompressed transparently.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated, expected {expected_bytes} bytes but found {actual_bytes}")]
    Truncated {
        path: PathBuf,
        expected_bytes: usize,
        actual_bytes: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("feature rows {rows} do not match label count {labels}")]
    RowCountMismatch { rows: usize, labels: usize },
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("batch size {batch_size} exceeds population {population}")]
    BatchTooLarge { batch_size: usize, population: usize },
}

/// A labeled dataset: `N x d` feature matrix plus one class label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::RowCountMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        for ((row, col), &x) in features.indexed_iter() {
            if !x.is_finite() {
                return Err(DataError::NonFiniteFeature { row, col });
            }
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(DataError::LabelOutOfRange {
                    row,
                    label,
                    classes,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copies the selected rows into a dense batch.
    pub fn batch(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (features, labels)
    }

    /// Shifts and scales every feature by scalar statistics computed over all
    /// entries of this dataset, returning `(mean, std)` so the same transform
    /// can be applied to a held-out split. The scale is floored at `1e-12`.
    pub fn normalize(&mut self) -> Result<(f64, f64), DataError> {
        if self.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let n = self.features.len() as f64;
        let mean = self.features.sum() / n;
        let var = self
            .features
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt().max(1e-12);
        self.apply_normalization(mean, std);
        Ok((mean, std))
    }

    /// Applies externally computed statistics — the held-out split must use
    /// the training split's numbers, not its own.
    pub fn apply_normalization(&mut self, mean: f64, std: f64) {
        let std = std.max(1e-12);
        self.features.mapv_inplace(|x| (x - mean) / std);
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut decoded = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut decoded)
            .map_err(io_err)?;
        return Ok(decoded);
    }
    Ok(raw)
}

fn read_be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("bounds checked"))
}

/// Validates the magic tag first, then the byte count implied by the header,
/// so a file of the wrong kind reports a magic mismatch rather than a size
/// complaint.
fn check_header(
    path: &Path,
    bytes: &[u8],
    expected_magic: u32,
    header_len: usize,
) -> Result<(), DataError> {
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected_bytes: header_len,
            actual_bytes: bytes.len(),
        });
    }
    let magic = read_be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected: expected_magic,
            found: magic,
        });
    }
    if bytes.len() < header_len {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected_bytes: header_len,
            actual_bytes: bytes.len(),
        });
    }
    Ok(())
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<(), DataError> {
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected_bytes: expected,
            actual_bytes: bytes.len(),
        });
    }
    Ok(())
}

/// Loads an image/label pair of IDX files into a dataset with pixel values
/// kept on their raw `0..=255` scale.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = read_maybe_gz(images_path)?;
    check_header(images_path, &images, IMAGES_MAGIC, 16)?;
    let n = read_be_u32(&images, 4) as usize;
    let rows = read_be_u32(&images, 8) as usize;
    let cols = read_be_u32(&images, 12) as usize;
    check_len(images_path, &images, 16 + n * rows * cols)?;

    let labels = read_maybe_gz(labels_path)?;
    check_header(labels_path, &labels, LABELS_MAGIC, 8)?;
    let n_labels = read_be_u32(&labels, 4) as usize;
    check_len(labels_path, &labels, 8 + n_labels)?;

    if n != n_labels {
        return Err(DataError::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }

    let features = Array2::from_shape_fn((n, rows * cols), |(i, j)| {
        images[16 + i * rows * cols + j] as f64
    });
    let labels: Vec<usize> = labels[8..].iter().map(|&b| b as usize).collect();
    Dataset::new(features, labels, 10)
}

/// Deterministic index stream over a dataset: one pass per epoch, every index
/// exactly once, last batch possibly short. With shuffling on, a fresh
/// permutation is drawn at the start of every epoch from the seeded stream;
/// with it off, batch `i` of every epoch is the contiguous slice `i`.
#[derive(Debug, Clone)]
pub struct MiniBatchStream {
    order: Vec<usize>,
    batch_size: usize,
    shuffle: bool,
    rng: ChaCha8Rng,
    pos: usize,
    epoch: u64,
}

impl MiniBatchStream {
    pub fn new(
        population: usize,
        batch_size: usize,
        shuffle: bool,
        seed: u64,
    ) -> Result<Self, DataError> {
        if batch_size == 0 {
            return Err(DataError::ZeroBatchSize);
        }
        if batch_size > population {
            return Err(DataError::BatchTooLarge {
                batch_size,
                population,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..population).collect();
        if shuffle {
            order.shuffle(&mut rng);
        }
        Ok(Self {
            order,
            batch_size,
            shuffle,
            rng,
            pos: 0,
            epoch: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    /// Completed epochs.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Indices of the next mini-batch, advancing the stream.
    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos >= self.order.len() {
            self.pos = 0;
            self.epoch += 1;
            if self.shuffle {
                self.order.shuffle(&mut self.rng);
            }
        }
        let start = self.pos;
        let end = (start + self.batch_size).min(self.order.len());
        self.pos = end;
        &self.order[start..end]
    }
}
