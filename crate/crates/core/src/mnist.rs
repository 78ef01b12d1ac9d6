//! MNIST IDX container parsing, normalization and deterministic minibatch
//! planning.
//!
//! The IDX layout is bit-exact: a 4-byte big-endian magic (0x00000803 for
//! images, 0x00000801 for labels), one 4-byte big-endian size per dimension,
//! then the raw unsigned bytes. Files are read locally; nothing is
//! downloaded.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};
use crate::rng::SplitMix64;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Canonical file names of the four MNIST files inside a data directory.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// A parsed IDX image container (raw bytes, not yet normalized).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

/// A parsed IDX label container. Every label has been validated `< 10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub count: usize,
    pub labels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            need: end,
            have: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(Error::Truncated {
            need,
            have: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<IdxLabels> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(Error::Truncated {
            need,
            have: bytes.len(),
        });
    }
    let labels = bytes[8..need].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::BadLabel(bad));
    }
    Ok(IdxLabels { count, labels })
}

/// Inverse of [`parse_idx_images`]; reproduces the input byte-for-byte.
pub fn serialize_idx_images(imgs: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + imgs.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(imgs.count as u32).to_be_bytes());
    out.extend_from_slice(&(imgs.rows as u32).to_be_bytes());
    out.extend_from_slice(&(imgs.cols as u32).to_be_bytes());
    out.extend_from_slice(&imgs.pixels);
    out
}

pub fn serialize_idx_labels(labels: &IdxLabels) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.count as u32).to_be_bytes());
    out.extend_from_slice(&labels.labels);
    out
}

/// Normalized images paired with class labels. Pixels are scaled to
/// `[0, 1]` by dividing by 255; no mean/std standardization.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Vec<Matrix<T>>,
    pub labels: Vec<u8>,
}

/// Map raw bytes to `[0, 1]` reals, one matrix per image.
pub fn normalize<T: Real>(raw: &IdxImages) -> Vec<Matrix<T>> {
    let px = raw.rows * raw.cols;
    let scale = T::from_f64(1.0 / 255.0);
    (0..raw.count)
        .map(|i| {
            let data = raw.pixels[i * px..(i + 1) * px]
                .iter()
                .map(|&p| T::from_f64(p as f64) * scale)
                .collect();
            Matrix::from_vec(raw.rows, raw.cols, data)
        })
        .collect()
}

impl<T: Real> Dataset<T> {
    pub fn new(raw: &IdxImages, labels: &IdxLabels) -> Result<Self> {
        if raw.count != labels.count {
            return Err(Error::ShapeMismatch(format!(
                "{} images but {} labels",
                raw.count, labels.count
            )));
        }
        Ok(Dataset {
            images: normalize(raw),
            labels: labels.labels.clone(),
        })
    }

    pub fn from_files(images_path: &Path, labels_path: &Path) -> Result<Self> {
        let raw = parse_idx_images(&fs::read(images_path)?)?;
        let labels = parse_idx_labels(&fs::read(labels_path)?)?;
        Dataset::new(&raw, &labels)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Load the train split from a directory holding the canonical MNIST files.
pub fn load_train<T: Real>(data_dir: &Path) -> Result<Dataset<T>> {
    Dataset::from_files(&data_dir.join(TRAIN_IMAGES), &data_dir.join(TRAIN_LABELS))
}

/// Load the test split from a directory holding the canonical MNIST files.
pub fn load_test<T: Real>(data_dir: &Path) -> Result<Dataset<T>> {
    Dataset::from_files(&data_dir.join(TEST_IMAGES), &data_dir.join(TEST_LABELS))
}

/// Deterministic minibatch schedule: a seed plus a batch size. Each epoch
/// gets its own Fisher-Yates permutation from a stream derived with
/// [`SplitMix64::for_stream`], so the whole schedule is a pure function of
/// `(seed, epoch)`.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
}

impl BatchPlan {
    pub fn new(seed: u64, batch_size: usize) -> Self {
        BatchPlan { seed, batch_size }
    }

    /// The sample permutation for one epoch (a bijection on `0..count`).
    pub fn permutation(&self, epoch: u64, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..count).collect();
        SplitMix64::for_stream(self.seed, epoch).shuffle(&mut idx);
        idx
    }
}

/// One shuffled minibatch: borrowed images plus their labels.
pub struct Minibatch<'a, T> {
    pub images: Vec<&'a Matrix<T>>,
    pub labels: Vec<u8>,
}

/// Split one epoch's permutation into minibatches. Every sample appears
/// exactly once; a final partial batch is kept, not dropped.
pub fn batches<'a, T: Real>(
    ds: &'a Dataset<T>,
    plan: &BatchPlan,
    epoch: u64,
) -> Result<Vec<Minibatch<'a, T>>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if plan.batch_size == 0 || plan.batch_size > ds.len() {
        return Err(Error::Invalid(format!(
            "batch size {} not in 1..={}",
            plan.batch_size,
            ds.len()
        )));
    }
    let perm = plan.permutation(epoch, ds.len());
    Ok(perm
        .chunks(plan.batch_size)
        .map(|chunk| Minibatch {
            images: chunk.iter().map(|&i| &ds.images[i]).collect(),
            labels: chunk.iter().map(|&i| ds.labels[i]).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&rows.to_be_bytes());
        b.extend_from_slice(&cols.to_be_bytes());
        b.extend_from_slice(payload);
        b
    }

    fn label_bytes(count: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn parses_image_container() {
        let bytes = image_bytes(2, 2, 2, &[0, 10, 20, 30, 40, 50, 60, 255]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 2, 2));
        assert_eq!(imgs.pixels.len(), 8);
    }

    #[test]
    fn parses_empty_container() {
        let bytes = image_bytes(0, 28, 28, &[]);
        let imgs = parse_idx_images(&bytes).unwrap();
        assert_eq!(imgs.count, 0);
    }

    #[test]
    fn label_magic_rejected_by_image_parser() {
        let bytes = label_bytes(1, &[7]);
        match parse_idx_images(&bytes) {
            Err(Error::BadMagic { found, .. }) => assert_eq!(found, LABELS_MAGIC),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = image_bytes(2, 2, 2, &[1, 2, 3]);
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn parses_labels_and_rejects_out_of_range() {
        let ok = parse_idx_labels(&label_bytes(1, &[0x07])).unwrap();
        assert_eq!(ok.labels, vec![7]);
        let bad = parse_idx_labels(&label_bytes(2, &[3, 0x0A]));
        assert!(matches!(bad, Err(Error::BadLabel(0x0A))));
    }

    #[test]
    fn serialize_round_trips() {
        let bytes = image_bytes(3, 2, 2, &[9; 12]);
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(serialize_idx_images(&parsed), bytes);

        let lbytes = label_bytes(3, &[1, 2, 3]);
        let parsed = parse_idx_labels(&lbytes).unwrap();
        assert_eq!(serialize_idx_labels(&parsed), lbytes);
    }

    #[test]
    fn normalize_maps_endpoints_and_midpoint() {
        let bytes = image_bytes(1, 1, 3, &[0, 128, 255]);
        let imgs = parse_idx_images(&bytes).unwrap();
        let m = &normalize::<f64>(&imgs)[0];
        assert_eq!(m[(0, 0)], 0.0);
        assert!((m[(0, 1)] - 128.0 / 255.0).abs() < 1e-15);
        assert_eq!(m[(0, 2)], 1.0);
    }

    #[test]
    fn normalize_is_monotone() {
        let bytes = image_bytes(1, 1, 256, &(0..=255).collect::<Vec<u8>>());
        let imgs = parse_idx_images(&bytes).unwrap();
        let m = &normalize::<f64>(&imgs)[0];
        for p in 1..256usize {
            assert!(m[(0, p - 1)] < m[(0, p)]);
        }
    }

    fn tiny_dataset(n: usize) -> Dataset<f64> {
        let raw = IdxImages {
            count: n,
            rows: 2,
            cols: 2,
            pixels: vec![1; 4 * n],
        };
        let labels = IdxLabels {
            count: n,
            labels: (0..n).map(|i| (i % 10) as u8).collect(),
        };
        Dataset::new(&raw, &labels).unwrap()
    }

    #[test]
    fn batch_sizes_keep_remainder() {
        let ds = tiny_dataset(5);
        let plan = BatchPlan::new(1, 2);
        let b = batches(&ds, &plan, 0).unwrap();
        let sizes: Vec<usize> = b.iter().map(|m| m.labels.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn batches_cover_every_sample_once() {
        let ds = tiny_dataset(23);
        let plan = BatchPlan::new(3, 4);
        for epoch in 0..5 {
            let perm = plan.permutation(epoch, ds.len());
            let mut seen = perm.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batches_are_deterministic_per_epoch() {
        let ds = tiny_dataset(10);
        let plan = BatchPlan::new(42, 3);
        let a: Vec<Vec<u8>> = batches(&ds, &plan, 2)
            .unwrap()
            .iter()
            .map(|m| m.labels.clone())
            .collect();
        let b: Vec<Vec<u8>> = batches(&ds, &plan, 2)
            .unwrap()
            .iter()
            .map(|m| m.labels.clone())
            .collect();
        assert_eq!(a, b);
        let c: Vec<Vec<u8>> = batches(&ds, &plan, 3)
            .unwrap()
            .iter()
            .map(|m| m.labels.clone())
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let ds = tiny_dataset(0);
        assert!(matches!(
            batches(&ds, &BatchPlan::new(0, 1), 0),
            Err(Error::EmptyDataset)
        ));
    }
}
