//! MNIST-family IDX loading.
//!
//! Files may be raw or gzip-compressed; compression is detected from the
//! content, not the file name.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, IdxError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// 784 intensities in `[0, 1]` (raw byte / 255).
    pub pixels: Vec<f32>,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Train,
    Test,
}

impl DatasetKind {
    fn prefix(self) -> &'static str {
        match self {
            DatasetKind::Train => "train",
            DatasetKind::Test => "t10k",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub samples: Vec<ImageSample>,
}

impl Dataset {
    /// Loads `train-*` or `t10k-*` IDX files from `dir`, with or without `.gz`.
    pub fn load(dir: &Path, kind: DatasetKind) -> Result<Self> {
        let images = load_idx_images(&locate(dir, kind, "images-idx3-ubyte")?)?;
        let labels = load_idx_labels(&locate(dir, kind, "labels-idx1-ubyte")?)?;
        Self::from_parts(kind, images, labels)
    }

    pub fn from_parts(kind: DatasetKind, images: Vec<Vec<f32>>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            }
            .into());
        }
        let samples = images
            .into_iter()
            .zip(labels)
            .map(|(pixels, label)| ImageSample { pixels, label })
            .collect();
        Ok(Dataset { kind, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps only the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        self.samples.truncate(n);
    }
}

fn locate(dir: &Path, kind: DatasetKind, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(format!("{}-{}", kind.prefix(), stem));
    let gz = dir.join(format!("{}-{}.gz", kind.prefix(), stem));
    for candidate in [&plain, &gz] {
        if candidate.is_file() {
            return Ok(candidate.clone());
        }
    }
    Err(Error::io(
        plain,
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no {}-{} file (plain or .gz)", kind.prefix(), stem),
        ),
    ))
}

/// Reads a file, transparently inflating gzip content.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::Magic { expected, found });
    }
    Ok(())
}

/// Parses an image container: magic, count, 28, 28, then `count * 784` bytes.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f32>>, IdxError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(IdxError::Dimensions { rows, cols });
    }
    let payload = &bytes[16..];
    let expected = count * IMAGE_PIXELS;
    if payload.len() < expected {
        return Err(IdxError::Truncated {
            expected: 16 + expected,
            found: bytes.len(),
        });
    }
    Ok(payload[..expected]
        .chunks_exact(IMAGE_PIXELS)
        .map(|img| img.iter().map(|&b| b as f32 / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(IdxError::Truncated {
            expected: 8 + count,
            found: bytes.len(),
        });
    }
    let labels = payload[..count].to_vec();
    if let Some((index, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= NUM_CLASSES)
    {
        return Err(IdxError::Label { index, label });
    }
    Ok(labels)
}

pub fn load_idx_images(path: &Path) -> Result<Vec<Vec<f32>>> {
    Ok(parse_idx_images(&read_maybe_gz(path)?)?)
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    Ok(parse_idx_labels(&read_maybe_gz(path)?)?)
}

/// A uniformly random visiting order over `0..n`.
pub fn shuffled_epoch<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Serializes images into an IDX container (used by tests and tooling).
pub fn encode_idx_images(images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_PIXELS);
    for word in [
        IMAGE_MAGIC,
        images.len() as u32,
        IMAGE_SIDE as u32,
        IMAGE_SIDE as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
