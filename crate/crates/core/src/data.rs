//! IDX digit data: parsing and writing the MNIST binary container,
//! zero-padding 28x28 images into 32x32 inputs, global normalization, and
//! deterministic subset selection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Magic number of an IDX file holding unsigned-byte rank-3 data (images).
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number of an IDX file holding unsigned-byte rank-1 data (labels).
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Side length of a network input; raw digits are padded up to this.
pub const INPUT_SIDE: usize = 32;
/// Side length of a raw MNIST digit.
pub const RAW_SIDE: usize = 28;

/// One grayscale image as parsed from an IDX file, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<GrayImage> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension("image dimensions must be positive"));
        }
        if pixels.len() != rows * cols {
            return Err(Error::DataLength {
                expected: rows * cols,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage { rows, cols, pixels })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.cols + col]
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::PayloadLength {
            expected: end,
            actual: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an IDX image file: big-endian magic 0x00000803, count, rows,
/// cols, then `count*rows*cols` pixel bytes. The byte length must match
/// the header exactly in both directions.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_IMAGE_MAGIC,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension("image dimensions must be positive"));
    }
    let per_image = rows
        .checked_mul(cols)
        .ok_or(Error::InvalidDimension("image size overflows"))?;
    let expected = count
        .checked_mul(per_image)
        .ok_or(Error::InvalidDimension("payload size overflows"))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::PayloadLength {
            expected: expected + 16,
            actual: bytes.len(),
        });
    }
    let mut images = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(per_image) {
        images.push(GrayImage {
            rows,
            cols,
            pixels: chunk.to_vec(),
        });
    }
    Ok(images)
}

/// Parses an IDX label file: big-endian magic 0x00000801, count, then
/// `count` label bytes, each in 0..=9.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_LABEL_MAGIC,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::PayloadLength {
            expected: count + 8,
            actual: bytes.len(),
        });
    }
    for (index, &value) in payload.iter().enumerate() {
        if value > 9 {
            return Err(Error::LabelOutOfRangeAt { index, value });
        }
    }
    Ok(payload.to_vec())
}

/// Writes images back into IDX bytes. All images must share one geometry.
/// `parse_idx_images(write_idx_images(v))` reproduces `v` bit-exactly.
pub fn write_idx_images(images: &[GrayImage]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first() {
        Some(first) => (first.rows, first.cols),
        None => (RAW_SIDE, RAW_SIDE),
    };
    for image in images {
        if image.rows != rows || image.cols != cols {
            return Err(Error::InvalidDimension(
                "all images in one file must share dimensions",
            ));
        }
    }
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    bytes.extend(IDX_IMAGE_MAGIC.to_be_bytes());
    bytes.extend((images.len() as u32).to_be_bytes());
    bytes.extend((rows as u32).to_be_bytes());
    bytes.extend((cols as u32).to_be_bytes());
    for image in images {
        bytes.extend_from_slice(&image.pixels);
    }
    Ok(bytes)
}

/// Writes labels into IDX bytes; the inverse of [`parse_idx_labels`].
pub fn write_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    for (index, &value) in labels.iter().enumerate() {
        if value > 9 {
            return Err(Error::LabelOutOfRangeAt { index, value });
        }
    }
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend(IDX_LABEL_MAGIC.to_be_bytes());
    bytes.extend((labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    Ok(bytes)
}

/// A parsed digit corpus: 28x28 images with their labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    images: Vec<GrayImage>,
    labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>) -> Result<RawDataset> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        for image in &images {
            if image.rows != RAW_SIDE || image.cols != RAW_SIDE {
                return Err(Error::InvalidDimension("dataset images must be 28x28"));
            }
        }
        for (index, &value) in labels.iter().enumerate() {
            if value > 9 {
                return Err(Error::LabelOutOfRangeAt { index, value });
            }
        }
        Ok(RawDataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[GrayImage] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// SHA-256 over the dataset's canonical IDX serialization (images then
    /// labels), as lowercase hex.
    pub fn content_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(write_idx_images(&self.images).expect("uniform 28x28 by invariant"));
        hasher.update(write_idx_labels(&self.labels).expect("labels in range by invariant"));
        crate::hash::finish_hex(hasher)
    }
}

/// Normalization statistics of the training pixels, in 0..=1 pixel units:
/// inputs are transformed as `x' = (x/255 - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// No-op normalization, the state of a freshly initialized model.
    pub const IDENTITY: NormStats = NormStats { mean: 0.0, std: 1.0 };
}

/// How training/testing samples are drawn from the raw corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetRule {
    /// The first N samples in file order; fully reproducible with no seed.
    FirstN,
    /// N samples drawn without replacement by a seeded PRNG.
    Random { seed: u64 },
}

/// Where a prepared dataset came from: the source corpus digest, the
/// subset rule, and how many samples were taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source_digest: String,
    pub rule: SubsetRule,
    pub count: usize,
}

/// Normalized 1x32x32 samples ready for the network, together with the
/// statistics that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    samples: Vec<(Tensor, u8)>,
    stats: NormStats,
    provenance: Provenance,
}

impl PreparedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(Tensor, u8)] {
        &self.samples
    }

    pub fn stats(&self) -> NormStats {
        self.stats
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// Pads a raw image into the 32x32 input grid and scales bytes to 0..=1.
/// 28x28 images are centered with a two-pixel zero border; 32x32 images
/// pass through unpadded.
fn padded_scaled(image: &GrayImage) -> Result<Vec<f64>> {
    let mut grid = vec![0.0; INPUT_SIDE * INPUT_SIDE];
    if image.rows == INPUT_SIDE && image.cols == INPUT_SIDE {
        for (slot, &byte) in grid.iter_mut().zip(&image.pixels) {
            *slot = byte as f64 / 255.0;
        }
        return Ok(grid);
    }
    if image.rows != RAW_SIDE || image.cols != RAW_SIDE {
        return Err(Error::InvalidDimension("input images must be 28x28 or 32x32"));
    }
    let margin = (INPUT_SIDE - RAW_SIDE) / 2;
    for r in 0..RAW_SIDE {
        for c in 0..RAW_SIDE {
            grid[(r + margin) * INPUT_SIDE + (c + margin)] = image.get(r, c) as f64 / 255.0;
        }
    }
    Ok(grid)
}

/// Converts one image into a normalized network input under `stats`. This
/// is the single preprocessing path: dataset preparation and one-off
/// classification both go through it.
pub fn image_to_input(image: &GrayImage, stats: NormStats) -> Result<Tensor> {
    let mut grid = padded_scaled(image)?;
    for value in &mut grid {
        *value = (*value - stats.mean) / stats.std;
    }
    Tensor::from_vec(&[1, INPUT_SIDE, INPUT_SIDE], grid)
}

/// Prepares train and test sets with the default first-N subset rule.
pub fn prepare(
    raw_train: &RawDataset,
    raw_test: &RawDataset,
    train_count: usize,
    test_count: usize,
) -> Result<(PreparedDataset, PreparedDataset)> {
    prepare_with_rule(raw_train, raw_test, train_count, test_count, SubsetRule::FirstN)
}

/// Prepares train and test sets: selects samples by `rule`, pads each to
/// 32x32, computes mean/std over all selected training pixels (border
/// included, population std), and normalizes both sets with those training
/// statistics.
pub fn prepare_with_rule(
    raw_train: &RawDataset,
    raw_test: &RawDataset,
    train_count: usize,
    test_count: usize,
    rule: SubsetRule,
) -> Result<(PreparedDataset, PreparedDataset)> {
    if train_count == 0 || test_count == 0 {
        return Err(Error::InvalidConfig(String::from(
            "train and test sizes must be at least 1",
        )));
    }
    if raw_train.len() < train_count {
        return Err(Error::InsufficientSamples {
            which: "train",
            requested: train_count,
            available: raw_train.len(),
        });
    }
    if raw_test.len() < test_count {
        return Err(Error::InsufficientSamples {
            which: "test",
            requested: test_count,
            available: raw_test.len(),
        });
    }

    let train_indices = select_indices(raw_train.len(), train_count, rule, 0);
    let test_indices = select_indices(raw_test.len(), test_count, rule, 1);

    // Two-pass statistics over every padded, 0..=1-scaled training pixel.
    let mut grids = Vec::with_capacity(train_count);
    for &index in &train_indices {
        grids.push(padded_scaled(&raw_train.images()[index])?);
    }
    let pixel_count = (train_count * INPUT_SIDE * INPUT_SIDE) as f64;
    let mut sum = 0.0;
    for grid in &grids {
        for &v in grid {
            sum += v;
        }
    }
    let mean = sum / pixel_count;
    let mut sq_sum = 0.0;
    for grid in &grids {
        for &v in grid {
            let d = v - mean;
            sq_sum += d * d;
        }
    }
    let std = libm::sqrt(sq_sum / pixel_count);
    if std < 1e-12 {
        return Err(Error::DegenerateData);
    }
    let stats = NormStats { mean, std };

    let mut train_samples = Vec::with_capacity(train_count);
    for (grid, &index) in grids.into_iter().zip(&train_indices) {
        let normalized: Vec<f64> = grid.iter().map(|&v| (v - mean) / std).collect();
        let tensor = Tensor::from_vec(&[1, INPUT_SIDE, INPUT_SIDE], normalized)?;
        train_samples.push((tensor, raw_train.labels()[index]));
    }
    let mut test_samples = Vec::with_capacity(test_count);
    for &index in &test_indices {
        let tensor = image_to_input(&raw_test.images()[index], stats)?;
        test_samples.push((tensor, raw_test.labels()[index]));
    }

    let train = PreparedDataset {
        samples: train_samples,
        stats,
        provenance: Provenance {
            source_digest: raw_train.content_digest(),
            rule,
            count: train_count,
        },
    };
    let test = PreparedDataset {
        samples: test_samples,
        stats,
        provenance: Provenance {
            source_digest: raw_test.content_digest(),
            rule,
            count: test_count,
        },
    };
    Ok((train, test))
}

/// Index selection for one split. Random mode derives a distinct stream
/// per split (`stream`: 0 train, 1 test) so the two splits never reuse one
/// sequence.
fn select_indices(available: usize, count: usize, rule: SubsetRule, stream: u64) -> Vec<usize> {
    match rule {
        SubsetRule::FirstN => (0..count).collect(),
        SubsetRule::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            rand::seq::index::sample(&mut rng, available, count).into_vec()
        }
    }
}

/// Deterministic summary of a prepared dataset, for logs and fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct DigestReport {
    pub count: usize,
    pub per_class_counts: [usize; 10],
    pub stats: NormStats,
    pub content_hash: String,
}

/// Hashes every sample (label, then tensor contents) in order; any change
/// to content or order changes the hash.
pub fn dataset_digest(prepared: &PreparedDataset) -> DigestReport {
    let mut per_class_counts = [0usize; 10];
    let mut hasher = Sha256::new();
    for (tensor, label) in prepared.samples() {
        per_class_counts[*label as usize] += 1;
        hasher.update([*label]);
        crate::hash::update_tensor(&mut hasher, tensor);
    }
    DigestReport {
        count: prepared.len(),
        per_class_counts,
        stats: prepared.stats(),
        content_hash: crate::hash::finish_hex(hasher),
    }
}
