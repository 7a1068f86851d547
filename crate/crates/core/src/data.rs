//! IDX datasets (Fashion-MNIST, EMNIST) and encoding of images as input fields.
//!
//! IDX layout: bytes `00 00 <type> <rank>`, then `rank` big-endian `u32`
//! dimensions, then the row-major payload. Only the unsigned-byte element type
//! (`0x08`) is supported. Gzip-compressed files are detected by their magic
//! bytes and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::field::{ComplexField, GridGeometry};
use crate::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const IDX_UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: [u8; 4],
    pub dims: Vec<usize>,
}

/// A parsed IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn header(&self) -> IdxHeader {
        IdxHeader {
            magic: [0, 0, IDX_UBYTE, self.dims.len() as u8],
            dims: self.dims.clone(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("rank {} too large", self.dims.len())));
        }
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.header().magic);
        for &d in &self.dims {
            let d = u32::try_from(d)
                .map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        Ok(out)
    }
}

pub fn parse_idx_header(bytes: &[u8]) -> Result<(IdxHeader, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Format(
            "file shorter than the 4-byte IDX magic".into(),
        ));
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic[0] != 0 || magic[1] != 0 {
        return Err(Error::Format(format!(
            "bad IDX magic {:02x} {:02x} {:02x} {:02x}",
            magic[0], magic[1], magic[2], magic[3]
        )));
    }
    if magic[2] != IDX_UBYTE {
        return Err(Error::Format(format!(
            "unsupported IDX element type 0x{:02x} (only unsigned byte 0x08)",
            magic[2]
        )));
    }
    let rank = magic[3] as usize;
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::Format(format!(
            "IDX header declares rank {rank} but the file ends after {} bytes",
            bytes.len()
        )));
    }
    let dims = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    Ok((IdxHeader { magic, dims }, header_len))
}

/// Parses raw (already decompressed) IDX bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let (header, offset) = parse_idx_header(bytes)?;
    let expected = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let payload = &bytes[offset..];
    if payload.len() != expected {
        return Err(Error::Length {
            expected,
            found: payload.len(),
        });
    }
    Ok(IdxTensor {
        dims: header.dims,
        data: payload.to_vec(),
    })
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    parse_idx(&read_maybe_gzip(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_idx(path: impl AsRef<Path>, tensor: &IdxTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()?).map_err(|e| Error::io(path, e))
}

/// Labeled 28×28 grayscale images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<u8>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// `images` holds `labels.len()` consecutive row-major 28×28 images.
    pub fn new(images: Vec<u8>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_PIXELS {
            return Err(Error::ShapeMismatch(format!(
                "{} image bytes for {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `n` samples (all of them if `n` exceeds the size).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    pub fn to_idx(&self) -> Result<(IdxTensor, IdxTensor)> {
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                u8::try_from(l).map_err(|_| Error::Format(format!("label {l} exceeds a byte")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            IdxTensor::new(
                vec![self.len(), IMAGE_SIDE, IMAGE_SIDE],
                self.images.clone(),
            )?,
            IdxTensor::new(vec![self.len()], labels)?,
        ))
    }

    pub fn write_idx(
        &self,
        images_path: impl AsRef<Path>,
        labels_path: impl AsRef<Path>,
    ) -> Result<()> {
        let (images, labels) = self.to_idx()?;
        write_idx(images_path, &images)?;
        write_idx(labels_path, &labels)
    }
}

/// Swaps rows and columns of a 28×28 image.
pub fn transpose_image(image: &[u8]) -> Vec<u8> {
    let mut out = vec![0; IMAGE_PIXELS];
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            out[c * IMAGE_SIDE + r] = image[r * IMAGE_SIDE + c];
        }
    }
    out
}

/// Pairs an image file with a label file. `orientation_fix` transposes every
/// image, which EMNIST's stored layout requires.
pub fn load_dataset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    num_classes: usize,
    orientation_fix: bool,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = load_idx(images_path)?;
    let labels = load_idx(labels_path)?;
    if images.dims.len() != 3 || images.dims[1] != IMAGE_SIDE || images.dims[2] != IMAGE_SIDE {
        return Err(Error::Format(format!(
            "{}: expected dims (N, 28, 28), found {:?}",
            images_path.display(),
            images.dims
        )));
    }
    if labels.dims.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected rank-1 labels, found dims {:?}",
            labels_path.display(),
            labels.dims
        )));
    }
    if images.dims[0] != labels.dims[0] {
        return Err(Error::ShapeMismatch(format!(
            "{} images but {} labels",
            images.dims[0], labels.dims[0]
        )));
    }
    let pixels = if orientation_fix {
        images
            .data
            .chunks_exact(IMAGE_PIXELS)
            .flat_map(transpose_image)
            .collect()
    } else {
        images.data
    };
    Dataset::new(
        pixels,
        labels.data.into_iter().map(usize::from).collect(),
        num_classes,
    )
}

/// Places an image as real amplitudes (zero phase) in the centered 28×28
/// window and scales it to unit total energy. An all-zero image yields the
/// zero field.
pub fn to_input_field(image: &[u8], geometry: GridGeometry) -> Result<ComplexField> {
    if image.len() != IMAGE_PIXELS {
        return Err(Error::ShapeMismatch(format!(
            "expected {IMAGE_PIXELS} pixels, got {}",
            image.len()
        )));
    }
    if geometry.nx < IMAGE_SIDE || geometry.ny < IMAGE_SIDE {
        return Err(Error::InvalidGeometry(format!(
            "{}x{} grid cannot hold a 28x28 image",
            geometry.nx, geometry.ny
        )));
    }
    let x0 = (geometry.nx - IMAGE_SIDE) / 2;
    let y0 = (geometry.ny - IMAGE_SIDE) / 2;
    let energy: f64 = image.iter().map(|&p| (p as f64 / 255.0).powi(2)).sum();
    let norm = if energy > 0.0 {
        1.0 / energy.sqrt()
    } else {
        0.0
    };
    let mut values = vec![Complex64::default(); geometry.len()];
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let v = image[r * IMAGE_SIDE + c] as f64 / 255.0 * norm;
            values[geometry.index(x0 + c, y0 + r)] = Complex64::new(v, 0.0);
        }
    }
    ComplexField::from_values(geometry, values)
}

/// A seeded permutation of `0..n` cut into batches; the last may be short.
pub fn batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
