//! Device and circuit hyperparameters, their JSON form, partition derivation
//! and memristive technology presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Built-in values used for any field a config document omits.
pub mod defaults {
    pub const VDD: f64 = 0.8;
    pub const VSS: f64 = -0.8;
    /// MRAM resistance range.
    pub const R_LOW: f64 = 8.5e3;
    pub const R_HIGH: f64 = 25.5e3;
    pub const R_FEEDBACK: f64 = 10e3;
    /// 64λ at λ = 9 nm.
    pub const BITCELL_WIDTH: f64 = 576e-9;
    pub const BITCELL_HEIGHT: f64 = 576e-9;
    /// Copper. The published table prints 1.9e9, which is not a metal.
    pub const WIRE_RESISTIVITY: f64 = 1.9e-8;
    pub const WIRE_THICKNESS: f64 = 22e-9;
    /// 4λ at λ = 9 nm.
    pub const WIRE_WIDTH: f64 = 36e-9;
    pub const WIRE_SPACING: f64 = 20e-9;
    /// SiO2.
    pub const WIRE_EPS_R: f64 = 3.9;
    pub const T_SAMPLING: f64 = 10e-9;
    pub const GAIN: f64 = 1.0;
    pub const NEURON_STEEPNESS: f64 = 1.0;
    pub const NEURON_STATIC_POWER: f64 = 0.0;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("unknown memristive technology `{0}` (expected MRAM, RRAM, CBRAM or PCM)")]
    UnknownTechnology(String),
}

impl ParamsError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParamsError::Validation { field: field.into(), reason: reason.into() }
    }

    /// Name of the offending field, for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ParamsError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronKind {
    Sigmoid,
    Tanh,
    Relu,
}

impl fmt::Display for NeuronKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeuronKind::Sigmoid => "sigmoid",
            NeuronKind::Tanh => "tanh",
            NeuronKind::Relu => "relu",
        })
    }
}

/// Behavioral neuron model.
///
/// `steepness` is normalized: the circuit converts it to a per-layer physical
/// slope (1/V) so that a unit steepness makes the ideal crossbar reproduce the
/// float network `act(x·W + b)` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronSpec {
    pub kind: NeuronKind,
    pub steepness: f64,
    /// Watts drawn by each neuron regardless of its input.
    pub static_power: f64,
}

impl Default for NeuronSpec {
    fn default() -> Self {
        NeuronSpec {
            kind: NeuronKind::Sigmoid,
            steepness: defaults::NEURON_STEEPNESS,
            static_power: defaults::NEURON_STATIC_POWER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bitcell {
    pub width: f64,
    pub height: f64,
}

impl Default for Bitcell {
    fn default() -> Self {
        Bitcell { width: defaults::BITCELL_WIDTH, height: defaults::BITCELL_HEIGHT }
    }
}

/// Interconnect geometry and material. All lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireParams {
    /// Ω·m. Zero models ideal wires.
    pub resistivity: f64,
    pub thickness: f64,
    pub width: f64,
    /// Inter-metal layer spacing.
    pub spacing: f64,
    pub eps_r: f64,
}

impl Default for WireParams {
    fn default() -> Self {
        WireParams {
            resistivity: defaults::WIRE_RESISTIVITY,
            thickness: defaults::WIRE_THICKNESS,
            width: defaults::WIRE_WIDTH,
            spacing: defaults::WIRE_SPACING,
            eps_r: defaults::WIRE_EPS_R,
        }
    }
}

/// Linear pixel-to-voltage map: 0 → `v_min`, 255 → `v_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEncoding {
    pub v_min: f64,
    pub v_max: f64,
}

/// Full device/circuit configuration of one IMAC deployment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperParams {
    pub vdd: f64,
    pub vss: f64,
    pub neuron: NeuronSpec,
    pub r_low: f64,
    pub r_high: f64,
    pub topology: Vec<usize>,
    pub h_p: Vec<usize>,
    pub v_p: Vec<usize>,
    pub gains: Vec<f64>,
    pub r_feedback: f64,
    pub bitcell: Bitcell,
    pub wire: WireParams,
    pub t_sampling: f64,
    pub v_bias: f64,
    pub input_encoding: InputEncoding,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    vdd: Option<f64>,
    vss: Option<f64>,
    neuron: Option<NeuronSpec>,
    r_low: Option<f64>,
    r_high: Option<f64>,
    topology: Vec<usize>,
    h_p: Option<Vec<usize>>,
    v_p: Option<Vec<usize>>,
    gains: Option<Vec<f64>>,
    r_feedback: Option<f64>,
    bitcell: Option<Bitcell>,
    wire: Option<WireParams>,
    t_sampling: Option<f64>,
    v_bias: Option<f64>,
    input_encoding: Option<InputEncoding>,
}

impl ConfigDoc {
    fn resolve(self) -> HyperParams {
        let vdd = self.vdd.unwrap_or(defaults::VDD);
        let layers = self.topology.len().saturating_sub(1);
        HyperParams {
            vdd,
            vss: self.vss.unwrap_or(defaults::VSS),
            neuron: self.neuron.unwrap_or_default(),
            r_low: self.r_low.unwrap_or(defaults::R_LOW),
            r_high: self.r_high.unwrap_or(defaults::R_HIGH),
            h_p: self.h_p.unwrap_or_else(|| vec![1; layers]),
            v_p: self.v_p.unwrap_or_else(|| vec![1; layers]),
            gains: self.gains.unwrap_or_else(|| vec![defaults::GAIN; layers]),
            topology: self.topology,
            r_feedback: self.r_feedback.unwrap_or(defaults::R_FEEDBACK),
            bitcell: self.bitcell.unwrap_or_default(),
            wire: self.wire.unwrap_or_default(),
            t_sampling: self.t_sampling.unwrap_or(defaults::T_SAMPLING),
            v_bias: self.v_bias.unwrap_or(vdd),
            input_encoding: self.input_encoding.unwrap_or(InputEncoding { v_min: 0.0, v_max: vdd }),
        }
    }
}

/// Parses and validates a JSON config document, filling omitted fields with
/// [`defaults`]. Unknown keys are rejected.
pub fn load_config(text: &str) -> Result<HyperParams, ParamsError> {
    let doc: ConfigDoc =
        serde_json::from_str(text).map_err(|e| ParamsError::Schema(e.to_string()))?;
    let params = doc.resolve();
    params.validate()?;
    Ok(params)
}

impl HyperParams {
    /// Default configuration for `topology`, without partitioning.
    pub fn for_topology(topology: &[usize]) -> Result<Self, ParamsError> {
        let doc = ConfigDoc {
            vdd: None,
            vss: None,
            neuron: None,
            r_low: None,
            r_high: None,
            topology: topology.to_vec(),
            h_p: None,
            v_p: None,
            gains: None,
            r_feedback: None,
            bitcell: None,
            wire: None,
            t_sampling: None,
            v_bias: None,
            input_encoding: None,
        };
        let params = doc.resolve();
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("HyperParams serializes")
    }

    pub fn n_layers(&self) -> usize {
        self.topology.len() - 1
    }

    pub fn g_min(&self) -> f64 {
        1.0 / self.r_high
    }

    pub fn g_max(&self) -> f64 {
        1.0 / self.r_low
    }

    /// Copy with the resistance range of `tech`.
    pub fn with_technology(&self, tech: Technology) -> Self {
        let preset = tech.preset();
        HyperParams { r_low: preset.r_low, r_high: preset.r_high, ..self.clone() }
    }

    /// Copy with new partitioning. Not validated.
    pub fn with_partitions(&self, h_p: Vec<usize>, v_p: Vec<usize>) -> Self {
        HyperParams { h_p, v_p, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ParamsError::invalid(field, format!("must be finite, got {v}")))
            }
        };
        let positive = |field: &str, v: f64| {
            finite(field, v)?;
            if v > 0.0 {
                Ok(())
            } else {
                Err(ParamsError::invalid(field, format!("must be > 0, got {v}")))
            }
        };

        finite("vdd", self.vdd)?;
        finite("vss", self.vss)?;
        if self.vdd <= 0.0 {
            return Err(ParamsError::invalid("vdd", "must be positive"));
        }
        if self.vss >= 0.0 {
            return Err(ParamsError::invalid("vss", "must be negative"));
        }

        positive("r_low", self.r_low)?;
        positive("r_high", self.r_high)?;
        if self.r_low >= self.r_high {
            return Err(ParamsError::invalid(
                "r_low",
                format!("must be below r_high ({} >= {})", self.r_low, self.r_high),
            ));
        }

        if self.topology.len() < 2 {
            return Err(ParamsError::invalid("topology", "needs at least two layer widths"));
        }
        if self.topology.contains(&0) {
            return Err(ParamsError::invalid("topology", "layer widths must be >= 1"));
        }
        let n = self.n_layers();
        for (field, len) in [("h_p", self.h_p.len()), ("v_p", self.v_p.len()), ("gains", self.gains.len())] {
            if len != n {
                return Err(ParamsError::invalid(
                    field,
                    format!("has {len} entries, topology needs {n}"),
                ));
            }
        }
        for j in 0..n {
            let (rows, cols) = (self.topology[j], self.topology[j + 1]);
            let hp = self.h_p[j];
            if hp == 0 || hp > rows + 1 {
                return Err(ParamsError::invalid(
                    "h_p",
                    format!("layer {} has {hp} row partitions for {} rows", j + 1, rows + 1),
                ));
            }
            let vp = self.v_p[j];
            if vp == 0 || vp > cols {
                return Err(ParamsError::invalid(
                    "v_p",
                    format!("layer {} has {vp} column partitions for {cols} columns", j + 1),
                ));
            }
            positive("gains", self.gains[j])?;
        }

        positive("r_feedback", self.r_feedback)?;
        positive("bitcell.width", self.bitcell.width)?;
        positive("bitcell.height", self.bitcell.height)?;
        finite("wire.resistivity", self.wire.resistivity)?;
        if self.wire.resistivity < 0.0 {
            return Err(ParamsError::invalid("wire.resistivity", "must be >= 0"));
        }
        positive("wire.thickness", self.wire.thickness)?;
        positive("wire.width", self.wire.width)?;
        positive("wire.spacing", self.wire.spacing)?;
        positive("wire.eps_r", self.wire.eps_r)?;
        positive("t_sampling", self.t_sampling)?;
        positive("v_bias", self.v_bias)?;
        positive("neuron.steepness", self.neuron.steepness)?;
        finite("neuron.static_power", self.neuron.static_power)?;
        if self.neuron.static_power < 0.0 {
            return Err(ParamsError::invalid("neuron.static_power", "must be >= 0"));
        }
        finite("input_encoding.v_min", self.input_encoding.v_min)?;
        finite("input_encoding.v_max", self.input_encoding.v_max)?;
        if self.input_encoding.v_min >= self.input_encoding.v_max {
            return Err(ParamsError::invalid("input_encoding", "v_min must be below v_max"));
        }
        Ok(())
    }
}

/// Horizontal (row) and vertical (column) partition counts per layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitions {
    pub h_p: Vec<usize>,
    pub v_p: Vec<usize>,
}

impl Partitions {
    /// Number of crossbar tiles per polarity.
    pub fn tile_count(&self) -> usize {
        self.h_p.iter().zip(&self.v_p).map(|(h, v)| h * v).sum()
    }
}

/// Smallest partitioning that fits every layer on `array_rows × array_cols`
/// subarrays. With `bias_row`, the bias row counts toward the row budget.
pub fn derive_partitions(
    topology: &[usize],
    array_rows: usize,
    array_cols: usize,
    bias_row: bool,
) -> Result<Partitions, ParamsError> {
    if array_rows == 0 || array_cols == 0 {
        return Err(ParamsError::invalid("array", "subarray dimensions must be >= 1"));
    }
    if topology.len() < 2 || topology.contains(&0) {
        return Err(ParamsError::invalid("topology", "needs >= 2 widths, each >= 1"));
    }
    let extra = usize::from(bias_row);
    let h_p = topology[..topology.len() - 1]
        .iter()
        .map(|&rows| (rows + extra).div_ceil(array_rows))
        .collect();
    let v_p = topology[1..].iter().map(|&cols| cols.div_ceil(array_cols)).collect();
    Ok(Partitions { h_p, v_p })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Technology {
    Mram,
    Rram,
    Cbram,
    Pcm,
}

impl Technology {
    pub const ALL: [Technology; 4] =
        [Technology::Mram, Technology::Rram, Technology::Cbram, Technology::Pcm];

    pub fn preset(self) -> TechnologyPreset {
        let (r_low, r_high) = match self {
            Technology::Mram => (8.5e3, 25.5e3),
            Technology::Rram => (2.5e3, 100e3),
            Technology::Cbram => (5e3, 1e6),
            Technology::Pcm => (50e3, 1e6),
        };
        TechnologyPreset { name: self, r_low, r_high }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Technology::Mram => "MRAM",
            Technology::Rram => "RRAM",
            Technology::Cbram => "CBRAM",
            Technology::Pcm => "PCM",
        })
    }
}

impl FromStr for Technology {
    type Err = ParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MRAM" => Ok(Technology::Mram),
            "RRAM" => Ok(Technology::Rram),
            "CBRAM" => Ok(Technology::Cbram),
            "PCM" => Ok(Technology::Pcm),
            _ => Err(ParamsError::UnknownTechnology(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TechnologyPreset {
    pub name: Technology,
    pub r_low: f64,
    pub r_high: f64,
}

/// Looks up a preset by name (case-insensitive).
pub fn technology_preset(name: &str) -> Result<TechnologyPreset, ParamsError> {
    Ok(name.parse::<Technology>()?.preset())
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_NET: [usize; 4] = [400, 120, 84, 10];

    #[test]
    fn omitted_fields_take_defaults() {
        let p = load_config(r#"{"topology":[400,120,84,10],"h_p":[13,4,3],"v_p":[4,3,1]}"#)
            .unwrap();
        assert_eq!(p.vdd, 0.8);
        assert_eq!(p.vss, -0.8);
        assert_eq!(p.wire.thickness, 22e-9);
        assert_eq!(p.wire.width, 36e-9);
        assert_eq!(p.bitcell.width, 576e-9);
        assert_eq!(p.gains, vec![1.0; 3]);
        assert_eq!(p.v_bias, 0.8);
        assert_eq!(p.input_encoding, InputEncoding { v_min: 0.0, v_max: 0.8 });
        assert_eq!(p.r_feedback, 10e3);
    }

    #[test]
    fn equal_resistances_name_r_low() {
        let err = load_config(r#"{"topology":[2,2],"r_low":1e4,"r_high":1e4}"#).unwrap_err();
        assert_eq!(err.field(), Some("r_low"));
    }

    #[test]
    fn partition_length_mismatch() {
        let err = load_config(r#"{"topology":[400,120,84,10],"h_p":[13,4],"v_p":[4,3,1]}"#)
            .unwrap_err();
        assert_eq!(err.field(), Some("h_p"));
    }

    #[test]
    fn unknown_keys_are_schema_errors() {
        let err = load_config(r#"{"topology":[2,2],"vddd":0.8}"#).unwrap_err();
        assert!(matches!(err, ParamsError::Schema(_)));
        let err = load_config(r#"{"topology":[2,2],"wire":{"resitivity":1}}"#).unwrap_err();
        assert!(matches!(err, ParamsError::Schema(_)));
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(load_config("{"), Err(ParamsError::Schema(_))));
        assert!(matches!(load_config(r#"{"vdd":0.8}"#), Err(ParamsError::Schema(_))));
    }

    #[test]
    fn partition_bounds() {
        let err = load_config(r#"{"topology":[4,2],"h_p":[6],"v_p":[1]}"#).unwrap_err();
        assert_eq!(err.field(), Some("h_p"));
        // bias row makes 5 partitions legal
        load_config(r#"{"topology":[4,2],"h_p":[5],"v_p":[2]}"#).unwrap();
        let err = load_config(r#"{"topology":[4,2],"h_p":[1],"v_p":[3]}"#).unwrap_err();
        assert_eq!(err.field(), Some("v_p"));
        let err = load_config(r#"{"topology":[4,0]}"#).unwrap_err();
        assert_eq!(err.field(), Some("topology"));
    }

    #[test]
    fn rail_polarity() {
        assert_eq!(load_config(r#"{"topology":[2,2],"vss":0.1}"#).unwrap_err().field(), Some("vss"));
        assert_eq!(load_config(r#"{"topology":[2,2],"vdd":-1}"#).unwrap_err().field(), Some("vdd"));
    }

    #[test]
    fn json_round_trip() {
        let p = load_config(
            r#"{"topology":[16,8,4],"h_p":[2,1],"v_p":[1,2],"gains":[2.0,3.5],
                "neuron":{"kind":"tanh","steepness":0.5},"r_low":5e4,"r_high":1e6}"#,
        )
        .unwrap();
        assert_eq!(load_config(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn table_iii_partition_rows() {
        let cases = [
            (32, [13, 4, 3], [4, 3, 1]),
            (64, [7, 2, 2], [2, 2, 1]),
            (128, [4, 1, 1], [1, 1, 1]),
            (256, [2, 1, 1], [1, 1, 1]),
            (512, [1, 1, 1], [1, 1, 1]),
        ];
        for (size, h, v) in cases {
            let p = derive_partitions(&REFERENCE_NET, size, size, false).unwrap();
            assert_eq!(p.h_p, h, "h_p at {size}");
            assert_eq!(p.v_p, v, "v_p at {size}");
        }
    }

    #[test]
    fn bias_row_counts_toward_rows() {
        let p = derive_partitions(&[64, 32], 32, 32, true).unwrap();
        assert_eq!(p.h_p, vec![3]);
        let p = derive_partitions(&[64, 32], 32, 32, false).unwrap();
        assert_eq!(p.h_p, vec![2]);
    }

    #[test]
    fn zero_array_rejected() {
        assert!(derive_partitions(&REFERENCE_NET, 0, 32, false).is_err());
    }

    #[test]
    fn partitions_brute_force() {
        // minimality and monotonicity against an explicit search
        for width in 1..=64usize {
            for bias in [false, true] {
                let rows = width + usize::from(bias);
                let mut prev = usize::MAX;
                for array in 1..=64usize {
                    let p = derive_partitions(&[width, width], array, array, bias).unwrap();
                    let smallest = (1..).find(|k| k * array >= rows).unwrap();
                    assert_eq!(p.h_p[0], smallest);
                    let smallest_v = (1..).find(|k| k * array >= width).unwrap();
                    assert_eq!(p.v_p[0], smallest_v);
                    assert!(p.h_p[0] <= prev, "growing the array never adds partitions");
                    prev = p.h_p[0];
                }
            }
        }
    }

    #[test]
    fn technology_table() {
        assert_eq!(technology_preset("MRAM").unwrap().r_low, 8.5e3);
        assert_eq!(technology_preset("MRAM").unwrap().r_high, 25.5e3);
        assert_eq!(technology_preset("pcm").unwrap().r_low, 50e3);
        assert_eq!(technology_preset("PCM").unwrap().r_high, 1e6);
        assert_eq!(technology_preset("RRAM").unwrap().r_low, 2.5e3);
        assert_eq!(technology_preset("RRAM").unwrap().r_high, 100e3);
        assert_eq!(technology_preset("CBRAM").unwrap().r_low, 5e3);
        assert_eq!(technology_preset("CBRAM").unwrap().r_high, 1e6);
        assert!(matches!(technology_preset("SRAM"), Err(ParamsError::UnknownTechnology(_))));
    }
}
