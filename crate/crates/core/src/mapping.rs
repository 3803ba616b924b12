//! Signed weights to differential conductance pairs.
//!
//! Each weight `w` becomes a pair `(g_pos, g_neg)` in `[g_min, g_max]` with
//! one side resting at `g_min`:
//!
//! ```text
//! w >= 0:  g_pos = g_min + (w/s)·(g_max − g_min),  g_neg = g_min
//! w <  0:  g_pos = g_min,  g_neg = g_min + (|w|/s)·(g_max − g_min)
//! ```
//!
//! The layer bias maps the same way into an extra bottom row.

use thiserror::Error;

use crate::dataio::LayerWeights;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("non-finite weight at row {row}, column {col}")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("resistance range must satisfy 0 < r_low < r_high")]
    BadRange,
    #[error("explicit scale must be positive and finite")]
    BadScale,
    #[error("weight matrix is {found} values, expected {expected}")]
    Shape { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScaleMode {
    /// Largest |w| or |b| in the layer maps to full scale.
    PerLayerMax,
    Explicit(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConductanceMode {
    /// Any conductance in `[g_min, g_max]`.
    #[default]
    Continuous,
    /// Round every device to `g_min` or `g_max`.
    Quantized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingOptions {
    pub scale: ScaleMode,
    pub mode: ConductanceMode,
}

impl Default for MappingOptions {
    fn default() -> Self {
        MappingOptions { scale: ScaleMode::PerLayerMax, mode: ConductanceMode::Continuous }
    }
}

/// Conductance image of one layer. Matrices are `(rows + 1) × cols`,
/// row-major, with the bias in the last row.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedLayer<T> {
    pub rows: usize,
    pub cols: usize,
    pub g_pos: Vec<T>,
    pub g_neg: Vec<T>,
    /// Weight magnitude mapped to full scale.
    pub scale: T,
    pub g_min: T,
    pub g_max: T,
}

impl<T: Scalar> MappedLayer<T> {
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn pair(&self, row: usize, col: usize) -> (T, T) {
        let i = self.index(row, col);
        (self.g_pos[i], self.g_neg[i])
    }

    /// Row index of the bias devices.
    pub fn bias_row(&self) -> usize {
        self.rows
    }
}

/// Maps a single signed value, already divided by the scale, to a pair.
fn map_unit<T: Scalar>(u: T, g_min: T, g_max: T, mode: ConductanceMode) -> (T, T) {
    let span = g_max - g_min;
    let level = |m: T| -> T {
        let m = m.min(T::one());
        match mode {
            ConductanceMode::Continuous => {
                if m == T::one() {
                    g_max
                } else {
                    g_min + m * span
                }
            }
            ConductanceMode::Quantized => {
                if m >= T::lit(0.5) {
                    g_max
                } else {
                    g_min
                }
            }
        }
    };
    if u >= T::zero() {
        (level(u), g_min)
    } else {
        (g_min, level(-u))
    }
}

/// Differential conductance mapping of one layer (`W` is `rows × cols`).
pub fn map_weights<T: Scalar>(
    w: &[f32],
    b: &[f32],
    rows: usize,
    cols: usize,
    r_low: f64,
    r_high: f64,
    opts: MappingOptions,
) -> Result<MappedLayer<T>, MappingError> {
    if !(r_low > 0.0 && r_low < r_high && r_high.is_finite()) {
        return Err(MappingError::BadRange);
    }
    if w.len() != rows * cols {
        return Err(MappingError::Shape { expected: rows * cols, found: w.len() });
    }
    if b.len() != cols {
        return Err(MappingError::Shape { expected: cols, found: b.len() });
    }
    for (i, v) in w.iter().chain(b).enumerate() {
        if !v.is_finite() {
            let (row, col) = if i < w.len() { (i / cols, i % cols) } else { (rows, i - w.len()) };
            return Err(MappingError::NonFiniteWeight { row, col });
        }
    }

    let scale = match opts.scale {
        ScaleMode::PerLayerMax => {
            let m = w.iter().chain(b).fold(0.0f64, |m, &v| m.max(f64::from(v).abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
        ScaleMode::Explicit(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(MappingError::BadScale);
            }
            s
        }
    };

    let g_min = T::lit(1.0 / r_high);
    let g_max = T::lit(1.0 / r_low);
    let s = T::lit(scale);
    let mut g_pos = Vec::with_capacity((rows + 1) * cols);
    let mut g_neg = Vec::with_capacity((rows + 1) * cols);
    for &v in w.iter().chain(b) {
        let (p, n) = map_unit(T::lit(f64::from(v)) / s, g_min, g_max, opts.mode);
        g_pos.push(p);
        g_neg.push(n);
    }
    Ok(MappedLayer { rows, cols, g_pos, g_neg, scale: s, g_min, g_max })
}

/// [`map_weights`] for a bundle layer.
pub fn map_layer<T: Scalar>(
    layer: &LayerWeights,
    r_low: f64,
    r_high: f64,
    opts: MappingOptions,
) -> Result<MappedLayer<T>, MappingError> {
    map_weights(&layer.w, &layer.b, layer.inputs, layer.outputs, r_low, r_high, opts)
}

/// Signed conductance encoded by a differential pair.
#[inline]
pub fn effective_weight<T: Scalar>(g_pos: T, g_neg: T) -> T {
    g_pos - g_neg
}
