//! IDX container (the MNIST distribution format).
//!
//! Big-endian u32 magic, big-endian u32 dimension sizes, then unsigned bytes in
//! row-major order. Images use magic `0x00000803` (3 dims), labels `0x00000801`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(Error::Idx(format!(
                "{} file truncated: missing header field `{field}`",
                self.what
            )));
        };
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn payload(&self, len: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        match rest.len().cmp(&len) {
            std::cmp::Ordering::Less => Err(Error::Idx(format!(
                "{} payload truncated: expected {len} bytes, found {}",
                self.what,
                rest.len()
            ))),
            std::cmp::Ordering::Greater => Err(Error::Idx(format!(
                "{} payload has {} trailing bytes",
                self.what,
                rest.len() - len
            ))),
            std::cmp::Ordering::Equal => Ok(rest),
        }
    }
}

/// Parsed image tensor: `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "image",
    };
    let magic = r.u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx(format!(
            "bad image magic number {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let n = r.u32("image count")? as usize;
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let pixels = r.payload(n * rows * cols)?;
    Ok((n, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "label",
    };
    let magic = r.u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx(format!(
            "bad label magic number {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let n = r.u32("label count")? as usize;
    r.payload(n)
}

/// Decode an image/label pair; pixels are divided by 255.
pub fn decode(images: &[u8], labels: &[u8], num_classes: Option<usize>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Idx(format!(
            "count mismatch: {n} images but {} labels",
            labels.len()
        )));
    }
    let d = rows * cols;
    let features = Array2::from_shape_fn((n, d), |(i, j)| f64::from(pixels[i * d + j]) / 255.0);
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let mut ds = Dataset::new(features, labels, classes)?;
    ds.image_shape = Some((rows, cols));
    Ok(ds)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx(images: &Path, labels: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    decode(&read(images)?, &read(labels)?, num_classes)
}

/// Encode a dataset as `(image bytes, label bytes)`; features are rounded to
/// the nearest of 256 levels.
pub fn encode(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = ds.image_shape.unwrap_or((1, ds.feature_dim()));
    if ds.num_classes > 256 {
        return Err(Error::precondition("IDX labels are bytes; at most 256 classes"));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for dim in [ds.len(), rows, cols] {
        img.extend_from_slice(&(dim as u32).to_be_bytes());
    }
    img.extend(ds.features.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((img, lab))
}

pub fn save_idx(ds: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let (img, lab) = encode(ds)?;
    for (path, bytes) in [(images, img), (labels, lab)] {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
