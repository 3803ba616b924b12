//! Test-set and weight ingestion.
//!
//! Datasets use the MNIST IDX layout (big-endian header, one unsigned byte
//! per pixel or label). Trained weights are stored as a JSON manifest naming
//! one little-endian `f32` binary per weight matrix and bias vector.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::InputEncoding;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated stream: needed {needed} bytes, got {got}")]
    TruncatedStream { needed: usize, got: usize },
    #[error("shape mismatch in {what}: expected {expected} values, found {found}")]
    ShapeMismatch { what: String, expected: usize, found: usize },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("non-finite value at index {index} of {what}")]
    NonFiniteValue { what: String, index: usize },
    #[error("pixel {index} = {value} is outside [0, 255]")]
    OutOfRangePixel { index: usize, value: f64 },
    #[error("dataset has {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("malformed weights manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major `count × (rows·cols)` pixel matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageMatrix {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl ImageMatrix {
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[i * d..(i + 1) * d]
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32, DataError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(n).ok_or(DataError::TruncatedStream {
            needed: usize::MAX,
            got: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(DataError::TruncatedStream { needed: end, got: self.bytes.len() });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

fn check_magic(r: &mut Reader<'_>, expected: u32) -> Result<(), DataError> {
    let found = r.u32()?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageMatrix, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    check_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let total = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or(DataError::TruncatedStream { needed: usize::MAX, got: bytes.len() })?;
    let pixels = r.take(total)?.to_vec();
    Ok(ImageMatrix { count, rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    check_magic(&mut r, IDX_LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

pub fn write_idx_images(images: &ImageMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Test images paired with their class labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub images: ImageMatrix,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: ImageMatrix, labels: Vec<u8>) -> Result<Self, DataError> {
        if images.count != labels.len() {
            return Err(DataError::CountMismatch { images: images.count, labels: labels.len() });
        }
        Ok(Dataset { images, labels })
    }

    /// Flat `count × dim` samples as a single-row image matrix.
    pub fn from_rows(dim: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, DataError> {
        let count = labels.len();
        if pixels.len() != count * dim {
            return Err(DataError::ShapeMismatch {
                what: "dataset pixels".into(),
                expected: count * dim,
                found: pixels.len(),
            });
        }
        Dataset::new(ImageMatrix { count, rows: 1, cols: dim, pixels }, labels)
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self, DataError> {
        let images = parse_idx_images(&read_file(images)?)?;
        let labels = parse_idx_labels(&read_file(labels)?)?;
        Dataset::new(images, labels)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    pub fn sample(&self, i: usize) -> (&[u8], u8) {
        (self.images.row(i), self.labels[i])
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
        _ => DataError::Io(e),
    })
}

/// One layer's trained parameters: `w` is `inputs × outputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl LayerWeights {
    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f32 {
        self.w[row * self.outputs + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsBundle {
    pub topology: Vec<usize>,
    pub layers: Vec<LayerWeights>,
}

impl WeightsBundle {
    pub fn new(topology: Vec<usize>, layers: Vec<LayerWeights>) -> Result<Self, DataError> {
        let bundle = WeightsBundle { topology, layers };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let expected = self.topology.len().saturating_sub(1);
        if self.layers.len() != expected {
            return Err(DataError::ShapeMismatch {
                what: "layer count".into(),
                expected,
                found: self.layers.len(),
            });
        }
        for (j, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = (self.topology[j], self.topology[j + 1]);
            if layer.inputs != rows || layer.outputs != cols || layer.w.len() != rows * cols {
                return Err(DataError::ShapeMismatch {
                    what: format!("layer {} weights", j + 1),
                    expected: rows * cols,
                    found: layer.w.len(),
                });
            }
            if layer.b.len() != cols {
                return Err(DataError::ShapeMismatch {
                    what: format!("layer {} biases", j + 1),
                    expected: cols,
                    found: layer.b.len(),
                });
            }
            for (what, values) in [("weights", &layer.w), ("biases", &layer.b)] {
                if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                    return Err(DataError::NonFiniteValue {
                        what: format!("layer {} {what}", j + 1),
                        index,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    topology: Vec<usize>,
    layers: Vec<ManifestLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLayer {
    w: PathBuf,
    b: PathBuf,
}

fn read_f32s(path: &Path, what: String, expected: usize) -> Result<Vec<f32>, DataError> {
    let bytes = read_file(path)?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(DataError::ShapeMismatch { what, expected, found: bytes.len() / 4 });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(DataError::NonFiniteValue { what, index });
    }
    Ok(values)
}

/// Loads a weights manifest. Binary paths are relative to the manifest.
pub fn load_weights(manifest_path: &Path) -> Result<WeightsBundle, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(manifest_path.to_path_buf()),
        _ => DataError::Io(e),
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    if manifest.topology.len() < 2 || manifest.topology.contains(&0) {
        return Err(DataError::Manifest("topology needs >= 2 positive widths".into()));
    }
    if manifest.layers.len() != manifest.topology.len() - 1 {
        return Err(DataError::ShapeMismatch {
            what: "manifest layers".into(),
            expected: manifest.topology.len() - 1,
            found: manifest.layers.len(),
        });
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (j, entry) in manifest.layers.iter().enumerate() {
        let (rows, cols) = (manifest.topology[j], manifest.topology[j + 1]);
        let w = read_f32s(&base.join(&entry.w), format!("layer {} weights", j + 1), rows * cols)?;
        let b = read_f32s(&base.join(&entry.b), format!("layer {} biases", j + 1), cols)?;
        layers.push(LayerWeights { inputs: rows, outputs: cols, w, b });
    }
    WeightsBundle::new(manifest.topology, layers)
}

/// Writes `layer<j>_w.bin` / `layer<j>_b.bin` next to the manifest.
pub fn save_weights(bundle: &WeightsBundle, manifest_path: &Path) -> Result<(), DataError> {
    bundle.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("weights")
        .to_string();
    let mut layers = Vec::new();
    for (j, layer) in bundle.layers.iter().enumerate() {
        let w_name = PathBuf::from(format!("{stem}.layer{}_w.bin", j + 1));
        let b_name = PathBuf::from(format!("{stem}.layer{}_b.bin", j + 1));
        fs::write(base.join(&w_name), f32_bytes(&layer.w))?;
        fs::write(base.join(&b_name), f32_bytes(&layer.b))?;
        layers.push(ManifestLayer { w: w_name, b: b_name });
    }
    let manifest = Manifest { topology: bundle.topology.clone(), layers };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, text + "\n")?;
    Ok(())
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Maps 0–255 intensities linearly onto `[enc.v_min, enc.v_max]`.
pub fn encode_input<T: Scalar>(pixels: &[f64], enc: &InputEncoding) -> Result<Vec<T>, DataError> {
    let span = enc.v_max - enc.v_min;
    pixels
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            if !(0.0..=255.0).contains(&p) {
                return Err(DataError::OutOfRangePixel { index, value: p });
            }
            let v = if p == 255.0 { enc.v_max } else { enc.v_min + (p / 255.0) * span };
            Ok(T::lit(v))
        })
        .collect()
}

/// [`encode_input`] for raw dataset bytes, which are always in range.
pub fn encode_pixels<T: Scalar>(pixels: &[u8], enc: &InputEncoding) -> Vec<T> {
    let as_f64: Vec<f64> = pixels.iter().map(|&p| f64::from(p)).collect();
    encode_input(&as_f64, enc).expect("u8 pixels are in range")
}
