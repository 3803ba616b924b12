//! Crossbar tiles, layer subcircuits and the assembled network.
//!
//! Every layer is realized as `hp × vp` partitions, each holding a positive
//! and a negative tile. A tile's row wires are driven from the left edge and
//! its column wires leave at the bottom into a virtual-ground sense node.
//! Each cell contributes one row segment and one column segment of wire.
//! Partial column currents of the `hp` tiles sharing a column range add at
//! the sense node.

mod netlist;

use std::ops::Range;

use thiserror::Error;

pub use netlist::{
    export_spice, parse_spice_subset, LayerSkeleton, NetlistError, NetlistSkeleton, TileSkeleton,
};

use crate::dataio::WeightsBundle;
use crate::mapping::{map_layer, MappedLayer, MappingError, MappingOptions};
use crate::params::{HyperParams, NeuronKind, WireParams};
use crate::scalar::Scalar;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("layer {layer}: {parts} {axis} partitions leave some partition empty ({size} {axis}s)")]
    PartitionTooFine { layer: usize, axis: &'static str, parts: usize, size: usize },
    #[error("layer {layer} expects {expected} inputs but the previous layer has {found} outputs")]
    TopologyMismatch { layer: usize, expected: usize, found: usize },
    #[error("layer {layer}: {reason}")]
    Shape { layer: usize, reason: String },
    #[error("layer {layer}: {source}")]
    Mapping { layer: usize, source: MappingError },
}

/// Resistance of one wire segment: `ρ·L / (t·w)`.
pub fn wire_segment_resistance(wire: &WireParams, seg_len: f64) -> f64 {
    wire.resistivity * seg_len / (wire.thickness * wire.width)
}

/// Parallel-plate capacitance of one wire segment to the adjacent metal
/// layer: `ε₀·ε_r·(w·L) / spacing`.
pub fn wire_segment_capacitance(wire: &WireParams, seg_len: f64) -> f64 {
    EPSILON_0 * wire.eps_r * (wire.width * seg_len) / wire.spacing
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Pos, Polarity::Neg];

    pub fn tag(self) -> char {
        match self {
            Polarity::Pos => 'P',
            Polarity::Neg => 'N',
        }
    }
}

/// One crossbar subarray.
#[derive(Clone, Debug, PartialEq)]
pub struct Tile<T> {
    /// Zero-based layer index.
    pub layer: usize,
    pub h: usize,
    pub v: usize,
    pub polarity: Polarity,
    pub rows: usize,
    pub cols: usize,
    /// `rows × cols` cell conductances, row-major.
    pub g: Vec<T>,
    pub r_seg_row: T,
    pub r_seg_col: T,
    pub c_seg_row: T,
    pub c_seg_col: T,
    /// First layer input driven onto local row 0.
    pub row_offset: usize,
    /// First layer output collected from local column 0.
    pub col_offset: usize,
    /// Whether the last local row is the bias row.
    pub has_bias: bool,
}

impl<T: Scalar> Tile<T> {
    #[inline]
    pub fn conductance(&self, row: usize, col: usize) -> T {
        self.g[row * self.cols + col]
    }

    /// Number of inputs (excluding the bias row) this tile reads.
    pub fn input_rows(&self) -> usize {
        self.rows - usize::from(self.has_bias)
    }

    /// Netlist-style name, e.g. `L1_H0_V2_P`.
    pub fn name(&self) -> String {
        format!("L{}_H{}_V{}_{}", self.layer + 1, self.h, self.v, self.polarity.tag())
    }

    /// Standalone tile without wire parasitics, mostly for tests.
    pub fn ideal(rows: usize, cols: usize, g: Vec<T>) -> Self {
        Tile::with_wires(rows, cols, g, T::zero(), T::zero())
    }

    /// Standalone tile with the given segment resistances and no capacitance.
    pub fn with_wires(rows: usize, cols: usize, g: Vec<T>, r_seg_row: T, r_seg_col: T) -> Self {
        assert_eq!(g.len(), rows * cols, "conductance matrix shape");
        Tile {
            layer: 0,
            h: 0,
            v: 0,
            polarity: Polarity::Pos,
            rows,
            cols,
            g,
            r_seg_row,
            r_seg_col,
            c_seg_row: T::zero(),
            c_seg_col: T::zero(),
            row_offset: 0,
            col_offset: 0,
            has_bias: false,
        }
    }
}

/// Sizes of `parts` contiguous blocks covering `n` items, differing by at most one.
pub fn split_even(n: usize, parts: usize) -> Vec<usize> {
    let (base, extra) = (n / parts, n % parts);
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// One DNN layer realized as `hp × vp` partitions of pos/neg tile pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSubcircuit<T> {
    pub index: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub hp: usize,
    pub vp: usize,
    /// Layer inputs read by each horizontal partition. Partition 0 also owns the bias row.
    pub row_ranges: Vec<Range<usize>>,
    /// Layer outputs produced by each vertical partition.
    pub col_ranges: Vec<Range<usize>>,
    /// Ordered by `(h, v, polarity)`.
    pub tiles: Vec<Tile<T>>,
    pub gain: T,
    pub neuron: NeuronKind,
    /// Physical neuron slope in 1/V.
    pub steepness: T,
    /// Mapping scale of this layer's weights.
    pub scale: T,
    pub g_min: T,
    pub g_max: T,
}

impl<T: Scalar> LayerSubcircuit<T> {
    pub fn tile(&self, h: usize, v: usize, polarity: Polarity) -> &Tile<T> {
        &self.tiles[(h * self.vp + v) * 2 + polarity as usize]
    }

    pub fn name(&self) -> String {
        format!("LAYER{}", self.index + 1)
    }
}

/// Builds the partitioned, parasitic-annotated tiles of layer `j` (zero-based).
pub fn build_layer<T: Scalar>(
    mapped: &MappedLayer<T>,
    hp: usize,
    vp: usize,
    params: &HyperParams,
    j: usize,
) -> Result<LayerSubcircuit<T>, CircuitError> {
    let (inputs, outputs) = (mapped.rows, mapped.cols);
    if j + 1 >= params.topology.len()
        || params.topology[j] != inputs
        || params.topology[j + 1] != outputs
    {
        return Err(CircuitError::Shape {
            layer: j + 1,
            reason: format!("mapped layer is {inputs}×{outputs}, topology disagrees"),
        });
    }
    if hp == 0 || hp > inputs + 1 {
        return Err(CircuitError::PartitionTooFine {
            layer: j + 1,
            axis: "row",
            parts: hp,
            size: inputs + 1,
        });
    }
    if vp == 0 || vp > outputs {
        return Err(CircuitError::PartitionTooFine {
            layer: j + 1,
            axis: "column",
            parts: vp,
            size: outputs,
        });
    }

    // the bias row is counted in partition 0
    let row_sizes = split_even(inputs + 1, hp);
    let mut row_ranges = Vec::with_capacity(hp);
    let mut start = 0;
    for (h, &size) in row_sizes.iter().enumerate() {
        let n = if h == 0 { size - 1 } else { size };
        row_ranges.push(start..start + n);
        start += n;
    }
    let mut col_ranges = Vec::with_capacity(vp);
    let mut start = 0;
    for size in split_even(outputs, vp) {
        col_ranges.push(start..start + size);
        start += size;
    }

    let r_seg_row = T::lit(wire_segment_resistance(&params.wire, params.bitcell.width));
    let r_seg_col = T::lit(wire_segment_resistance(&params.wire, params.bitcell.height));
    let c_seg_row = T::lit(wire_segment_capacitance(&params.wire, params.bitcell.width));
    let c_seg_col = T::lit(wire_segment_capacitance(&params.wire, params.bitcell.height));

    let mut tiles = Vec::with_capacity(hp * vp * 2);
    for (h, rr) in row_ranges.iter().enumerate() {
        let has_bias = h == 0;
        let mut global_rows: Vec<usize> = rr.clone().collect();
        if has_bias {
            global_rows.push(mapped.bias_row());
        }
        for (v, cr) in col_ranges.iter().enumerate() {
            for polarity in Polarity::BOTH {
                let source = match polarity {
                    Polarity::Pos => &mapped.g_pos,
                    Polarity::Neg => &mapped.g_neg,
                };
                let mut g = Vec::with_capacity(global_rows.len() * cr.len());
                for &r in &global_rows {
                    g.extend(cr.clone().map(|c| source[mapped.index(r, c)]));
                }
                tiles.push(Tile {
                    layer: j,
                    h,
                    v,
                    polarity,
                    rows: global_rows.len(),
                    cols: cr.len(),
                    g,
                    r_seg_row,
                    r_seg_col,
                    c_seg_row,
                    c_seg_col,
                    row_offset: rr.start,
                    col_offset: cr.start,
                    has_bias,
                });
            }
        }
    }

    let gain = T::lit(params.gains[j]);
    let span = mapped.g_max - mapped.g_min;
    // slope that makes k·x equal steepness·(x·W + b) in normalized units
    let steepness = T::lit(params.neuron.steepness) * mapped.scale
        / (gain * T::lit(params.r_feedback) * span * T::lit(params.v_bias));

    Ok(LayerSubcircuit {
        index: j,
        inputs,
        outputs,
        hp,
        vp,
        row_ranges,
        col_ranges,
        tiles,
        gain,
        neuron: params.neuron.kind,
        steepness,
        scale: mapped.scale,
        g_min: mapped.g_min,
        g_max: mapped.g_max,
    })
}

/// The full IMAC circuit: one subcircuit per weight layer, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGraph<T> {
    pub layers: Vec<LayerSubcircuit<T>>,
    pub params: HyperParams,
}

impl<T: Scalar> CircuitGraph<T> {
    /// Maps every layer of `weights` and builds the partitioned network.
    pub fn build(
        params: &HyperParams,
        weights: &WeightsBundle,
        opts: MappingOptions,
    ) -> Result<Self, CircuitError> {
        if weights.topology != params.topology {
            return Err(CircuitError::Shape {
                layer: 0,
                reason: format!(
                    "weights topology {:?} differs from config topology {:?}",
                    weights.topology, params.topology
                ),
            });
        }
        let layers = weights
            .layers
            .iter()
            .enumerate()
            .map(|(j, lw)| {
                let mapped = map_layer::<T>(lw, params.r_low, params.r_high, opts)
                    .map_err(|source| CircuitError::Mapping { layer: j + 1, source })?;
                build_layer(&mapped, params.h_p[j], params.v_p[j], params, j)
            })
            .collect::<Result<Vec<_>, _>>()?;
        assemble_network(layers, params)
    }

    pub fn tile_count(&self) -> usize {
        self.layers.iter().map(|l| l.tiles.len()).sum()
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }
}

/// Concatenates layer subcircuits, checking that adjacent widths agree.
pub fn assemble_network<T: Scalar>(
    layers: Vec<LayerSubcircuit<T>>,
    params: &HyperParams,
) -> Result<CircuitGraph<T>, CircuitError> {
    if layers.is_empty() {
        return Err(CircuitError::Shape { layer: 0, reason: "network has no layers".into() });
    }
    for pair in layers.windows(2) {
        if pair[0].outputs != pair[1].inputs {
            return Err(CircuitError::TopologyMismatch {
                layer: pair[1].index + 1,
                expected: pair[1].inputs,
                found: pair[0].outputs,
            });
        }
    }
    Ok(CircuitGraph { layers, params: params.clone() })
}
