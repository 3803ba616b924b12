//! SPICE netlist emission and a parser for the emitted subset.
//!
//! Grammar accepted by [`parse_spice_subset`]: a title line, `*` comments,
//! `.SUBCKT`/`.ENDS`, `R`/`C`/`V`/`B` element cards, `X` instances, `+`
//! continuation lines and a closing `.END`.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use super::{CircuitGraph, LayerSubcircuit, Tile};
use crate::params::NeuronKind;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: unsupported card `{card}`")]
    UnsupportedCard { line: usize, card: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> NetlistError {
    NetlistError::ParseError { line, message: message.into() }
}

/// Element-level summary of one tile subcircuit.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TileSkeleton {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Cell resistances in ohms, row-major.
    pub cells: Vec<f64>,
    pub row_wires: Vec<f64>,
    pub col_wires: Vec<f64>,
    pub capacitors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LayerSkeleton {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    /// Names of the tile subcircuits instantiated by this layer, in order.
    pub tiles: Vec<String>,
    pub sense_sources: usize,
    pub neurons: usize,
}

/// Structure recovered from a netlist (or computed from a graph) for comparison.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NetlistSkeleton {
    pub tiles: Vec<TileSkeleton>,
    pub layers: Vec<LayerSkeleton>,
    pub inputs: usize,
    pub top_instances: Vec<String>,
}

impl NetlistSkeleton {
    /// The skeleton [`export_spice`] produces for `graph`.
    pub fn from_graph<T: Scalar>(graph: &CircuitGraph<T>) -> Self {
        let mut tiles = Vec::new();
        let mut layers = Vec::new();
        for layer in &graph.layers {
            for tile in &layer.tiles {
                let ohms = |v: T| 1.0 / v.as_f64();
                let n = tile.rows * tile.cols;
                let wires = |r: T| if r > T::zero() { vec![r.as_f64(); n] } else { Vec::new() };
                let mut capacitors = Vec::new();
                for _ in 0..n {
                    if tile.c_seg_row > T::zero() {
                        capacitors.push(tile.c_seg_row.as_f64());
                    }
                    if tile.c_seg_col > T::zero() {
                        capacitors.push(tile.c_seg_col.as_f64());
                    }
                }
                tiles.push(TileSkeleton {
                    name: tile.name(),
                    rows: tile.rows,
                    cols: tile.cols,
                    cells: tile.g.iter().map(|&g| ohms(g)).collect(),
                    row_wires: wires(tile.r_seg_row),
                    col_wires: wires(tile.r_seg_col),
                    capacitors,
                });
            }
            layers.push(LayerSkeleton {
                name: layer.name(),
                inputs: layer.inputs,
                outputs: layer.outputs,
                tiles: layer.tiles.iter().map(|t| t.name()).collect(),
                sense_sources: 2 * layer.outputs,
                neurons: layer.outputs,
            });
        }
        NetlistSkeleton {
            tiles,
            layers,
            inputs: graph.inputs(),
            top_instances: graph.layers.iter().map(|l| l.name()).collect(),
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn row_node(tile_name: &str, tile: &Tile<impl Scalar>, r: usize, c: usize) -> String {
    if tile.r_seg_row > Scalar::lit(0.0) {
        format!("{tile_name}_R{r}C{c}_ROW")
    } else {
        format!("IN{r}")
    }
}

fn col_node(tile_name: &str, tile: &Tile<impl Scalar>, r: usize, c: usize) -> String {
    if tile.r_seg_col > Scalar::lit(0.0) {
        format!("{tile_name}_R{r}C{c}_COL")
    } else {
        format!("OUT{c}")
    }
}

fn write_tile<T: Scalar>(out: &mut String, tile: &Tile<T>) {
    let name = tile.name();
    let _ = write!(out, ".SUBCKT {name}");
    for r in 0..tile.rows {
        let _ = write!(out, " IN{r}");
    }
    for c in 0..tile.cols {
        let _ = write!(out, " OUT{c}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "* layer {} rows {}..{}{} cols {}..{}",
        tile.layer + 1,
        tile.row_offset,
        tile.row_offset + tile.input_rows(),
        if tile.has_bias { " +bias" } else { "" },
        tile.col_offset,
        tile.col_offset + tile.cols
    );
    let zero = T::zero();
    for r in 0..tile.rows {
        for c in 0..tile.cols {
            let rn = row_node(&name, tile, r, c);
            let cn = col_node(&name, tile, r, c);
            let _ = writeln!(out, "RCELL_R{r}C{c} {rn} {cn} {}", num(1.0 / tile.conductance(r, c).as_f64()));
            if tile.r_seg_row > zero {
                let prev = if c == 0 { format!("IN{r}") } else { row_node(&name, tile, r, c - 1) };
                let _ = writeln!(out, "RWR_R{r}C{c} {prev} {rn} {}", num(tile.r_seg_row.as_f64()));
            }
            if tile.r_seg_col > zero {
                let next =
                    if r + 1 == tile.rows { format!("OUT{c}") } else { col_node(&name, tile, r + 1, c) };
                let _ = writeln!(out, "RWC_R{r}C{c} {cn} {next} {}", num(tile.r_seg_col.as_f64()));
            }
            if tile.c_seg_row > zero {
                let _ = writeln!(out, "CWR_R{r}C{c} {rn} 0 {}", num(tile.c_seg_row.as_f64()));
            }
            if tile.c_seg_col > zero {
                let _ = writeln!(out, "CWC_R{r}C{c} {cn} 0 {}", num(tile.c_seg_col.as_f64()));
            }
        }
    }
    out.push_str(".ENDS\n\n");
}

fn neuron_expr<T: Scalar>(layer: &LayerSubcircuit<T>, vdd: f64, vss: f64, r_feedback: f64, c: usize) -> String {
    let x = format!(
        "{}*{}*(i(VSP{c})-i(VSN{c}))",
        num(layer.gain.as_f64()),
        num(r_feedback)
    );
    let k = num(layer.steepness.as_f64());
    match layer.neuron {
        NeuronKind::Sigmoid => {
            format!("{} + {}/(1+exp(-{k}*{x}))", num(vss), num(vdd - vss))
        }
        NeuronKind::Tanh => format!("{}*tanh({k}*{x})", num(vdd)),
        NeuronKind::Relu => format!("min(max({k}*{x}*{}, 0), {})", num(vdd), num(vdd)),
    }
}

fn write_layer<T: Scalar>(out: &mut String, layer: &LayerSubcircuit<T>, graph: &CircuitGraph<T>) {
    let p = &graph.params;
    let _ = write!(out, ".SUBCKT {}", layer.name());
    for i in 0..layer.inputs {
        let _ = write!(out, " X{i}");
    }
    out.push_str(" BIAS");
    for c in 0..layer.outputs {
        let _ = write!(out, " Y{c}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "* hp {} vp {} gain {} neuron {}",
        layer.hp,
        layer.vp,
        num(layer.gain.as_f64()),
        layer.neuron
    );
    for tile in &layer.tiles {
        let _ = write!(out, "X{}", tile.name());
        for r in 0..tile.input_rows() {
            let _ = write!(out, " X{}", tile.row_offset + r);
        }
        if tile.has_bias {
            out.push_str(" BIAS");
        }
        for c in 0..tile.cols {
            let _ = write!(out, " S{}{}", tile.polarity.tag(), tile.col_offset + c);
        }
        let _ = writeln!(out, " {}", tile.name());
    }
    for c in 0..layer.outputs {
        let _ = writeln!(out, "VSP{c} SP{c} 0 DC 0");
        let _ = writeln!(out, "VSN{c} SN{c} 0 DC 0");
    }
    for c in 0..layer.outputs {
        let _ = writeln!(out, "BN{c} Y{c} 0 V = {{{}}}", neuron_expr(layer, p.vdd, p.vss, p.r_feedback, c));
    }
    out.push_str(".ENDS\n\n");
}

/// Emits the hierarchical netlist of `graph`. Input sources default to 0 V
/// when `input_v` is `None`.
pub fn export_spice<T: Scalar>(graph: &CircuitGraph<T>, input_v: Option<&[T]>) -> String {
    let p = &graph.params;
    let topology: Vec<String> = p.topology.iter().map(|w| w.to_string()).collect();
    let mut out = String::new();
    out.push_str("* IMAC-Sim netlist\n");
    let _ = writeln!(out, "* topology {}", topology.join("x"));
    let _ = writeln!(out, "* h_p {:?} v_p {:?}", p.h_p, p.v_p);
    let _ = writeln!(
        out,
        "* r_low {} r_high {} vdd {} vss {}",
        num(p.r_low),
        num(p.r_high),
        num(p.vdd),
        num(p.vss)
    );
    let _ = writeln!(out, "* suggested analysis: .OP or .TRAN with step {}", num(p.t_sampling));
    out.push('\n');

    for layer in &graph.layers {
        for tile in &layer.tiles {
            write_tile(&mut out, tile);
        }
        write_layer(&mut out, layer, graph);
    }

    let _ = writeln!(out, "VBIAS BIAS 0 DC {}", num(p.v_bias));
    for i in 0..graph.inputs() {
        let v = input_v.and_then(|v| v.get(i)).map_or(0.0, |v| v.as_f64());
        let _ = writeln!(out, "VIN{i} IN{i} 0 DC {}", num(v));
    }
    for (j, layer) in graph.layers.iter().enumerate() {
        let _ = write!(out, "X{}", layer.name());
        let in_prefix = if j == 0 { "IN".to_string() } else { format!("H{j}_") };
        for i in 0..layer.inputs {
            let _ = write!(out, " {in_prefix}{i}");
        }
        out.push_str(" BIAS");
        for c in 0..layer.outputs {
            let _ = write!(out, " H{}_{c}", j + 1);
        }
        let _ = writeln!(out, " {}", layer.name());
    }
    out.push_str(".END\n");
    out
}

/// Parses a SPICE value with an optional scale suffix (`10k`, `1.5meg`, `3e-9`).
fn parse_value(token: &str) -> Option<f64> {
    let lower = token.to_ascii_lowercase();
    let split = lower
        .char_indices()
        .find(|&(i, ch)| {
            ch.is_ascii_alphabetic()
                && !(ch == 'e'
                    && lower[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+'))
        })
        .map_or(lower.len(), |(i, _)| i);
    let (mantissa, suffix) = lower.split_at(split);
    let base: f64 = mantissa.parse().ok()?;
    let scale = match suffix {
        "" => 1.0,
        s if s.starts_with("meg") => 1e6,
        s if s.starts_with('t') => 1e12,
        s if s.starts_with('g') => 1e9,
        s if s.starts_with('k') => 1e3,
        s if s.starts_with('m') => 1e-3,
        s if s.starts_with('u') => 1e-6,
        s if s.starts_with('n') => 1e-9,
        s if s.starts_with('p') => 1e-12,
        s if s.starts_with('f') => 1e-15,
        _ => return None,
    };
    Some(base * scale)
}

fn cell_coords(rest: &str) -> Option<(usize, usize)> {
    let rest = rest.strip_prefix('R')?;
    let (r, c) = rest.split_once('C')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

enum Block {
    Tile(TileSkeleton, BTreeMap<(usize, usize), f64>),
    Layer(LayerSkeleton),
}

/// Recovers the structural skeleton of a netlist produced by [`export_spice`].
pub fn parse_spice_subset(text: &str) -> Result<NetlistSkeleton, NetlistError> {
    // join continuation lines, keeping the first line number of each card
    let mut cards: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if i == 0 {
            continue; // title
        }
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        if let Some(cont) = line.strip_prefix('+') {
            match cards.last_mut() {
                Some((_, card)) => {
                    card.push(' ');
                    card.push_str(cont.trim());
                }
                None => return Err(parse_err(line_no, "continuation without a card")),
            }
            continue;
        }
        cards.push((line_no, line.to_string()));
    }

    let mut skel = NetlistSkeleton::default();
    let mut block: Option<Block> = None;
    let mut ended = false;

    for (line, card) in &cards {
        let line = *line;
        if ended {
            return Err(parse_err(line, "content after .END"));
        }
        let tokens: Vec<&str> = card.split_whitespace().collect();
        let head = tokens[0].to_ascii_uppercase();

        if head.starts_with('.') {
            match head.as_str() {
                ".SUBCKT" => {
                    if block.is_some() {
                        return Err(parse_err(line, "nested .SUBCKT"));
                    }
                    let name = tokens
                        .get(1)
                        .ok_or_else(|| parse_err(line, ".SUBCKT without a name"))?
                        .to_string();
                    let ports = &tokens[2..];
                    let count = |prefix: &str| {
                        ports
                            .iter()
                            .filter(|p| {
                                p.strip_prefix(prefix).is_some_and(|n| n.parse::<usize>().is_ok())
                            })
                            .count()
                    };
                    block = Some(if name.to_ascii_uppercase().starts_with("LAYER") {
                        Block::Layer(LayerSkeleton {
                            name,
                            inputs: count("X"),
                            outputs: count("Y"),
                            ..Default::default()
                        })
                    } else {
                        Block::Tile(
                            TileSkeleton { name, rows: count("IN"), cols: count("OUT"), ..Default::default() },
                            BTreeMap::new(),
                        )
                    });
                }
                ".ENDS" => match block.take() {
                    Some(Block::Tile(mut t, cells)) => {
                        if cells.len() != t.rows * t.cols {
                            return Err(parse_err(
                                line,
                                format!("tile {} has {} cells for {}×{} ports", t.name, cells.len(), t.rows, t.cols),
                            ));
                        }
                        t.cells = cells.into_values().collect();
                        skel.tiles.push(t);
                    }
                    Some(Block::Layer(l)) => skel.layers.push(l),
                    None => return Err(parse_err(line, ".ENDS outside a subcircuit")),
                },
                ".END" => {
                    if block.is_some() {
                        return Err(parse_err(line, ".END inside an open .SUBCKT"));
                    }
                    ended = true;
                }
                _ => return Err(NetlistError::UnsupportedCard { line, card: tokens[0].to_string() }),
            }
            continue;
        }

        let kind = head.chars().next().unwrap_or(' ');
        match kind {
            'R' | 'C' => {
                if tokens.len() != 4 {
                    return Err(parse_err(line, format!("{kind} card needs 2 nodes and a value")));
                }
                let value = parse_value(tokens[3])
                    .ok_or_else(|| parse_err(line, format!("bad value `{}`", tokens[3])))?;
                match block.as_mut() {
                    Some(Block::Tile(t, cells)) => {
                        if kind == 'C' {
                            t.capacitors.push(value);
                        } else if let Some(rest) = head.strip_prefix("RCELL_") {
                            let rc = cell_coords(rest)
                                .ok_or_else(|| parse_err(line, format!("bad cell name {}", tokens[0])))?;
                            if rc.0 >= t.rows || rc.1 >= t.cols {
                                return Err(parse_err(line, "cell outside tile ports"));
                            }
                            if cells.insert(rc, value).is_some() {
                                return Err(parse_err(line, "duplicate cell"));
                            }
                        } else if head.starts_with("RWR_") {
                            t.row_wires.push(value);
                        } else if head.starts_with("RWC_") {
                            t.col_wires.push(value);
                        } else {
                            return Err(parse_err(line, format!("unrecognized resistor {}", tokens[0])));
                        }
                    }
                    _ => return Err(parse_err(line, "passive element outside a tile subcircuit")),
                }
            }
            'V' => {
                if tokens.len() < 4 {
                    return Err(parse_err(line, "V card needs 2 nodes and a value"));
                }
                let value_tok = if tokens[3].eq_ignore_ascii_case("DC") { tokens.get(4) } else { tokens.get(3) };
                value_tok
                    .and_then(|v| parse_value(v))
                    .ok_or_else(|| parse_err(line, "bad source value"))?;
                match block.as_mut() {
                    Some(Block::Layer(l)) => l.sense_sources += 1,
                    Some(Block::Tile(..)) => return Err(parse_err(line, "source inside a tile")),
                    None => {
                        if head.starts_with("VIN") {
                            skel.inputs += 1;
                        }
                    }
                }
            }
            'B' => {
                let expr = card.split_once('=').map(|(_, e)| e.trim());
                let ok = tokens.len() >= 4
                    && tokens[3].to_ascii_uppercase().starts_with('V')
                    && expr.is_some_and(|e| e.starts_with('{') && e.ends_with('}'));
                if !ok {
                    return Err(parse_err(line, "B card must read `B<name> n+ n- V = {expr}`"));
                }
                match block.as_mut() {
                    Some(Block::Layer(l)) => l.neurons += 1,
                    _ => return Err(parse_err(line, "behavioral source outside a layer")),
                }
            }
            'X' => {
                if tokens.len() < 2 {
                    return Err(parse_err(line, "X card needs a subcircuit name"));
                }
                let target = tokens[tokens.len() - 1].to_string();
                match block.as_mut() {
                    Some(Block::Layer(l)) => l.tiles.push(target),
                    Some(Block::Tile(..)) => return Err(parse_err(line, "instance inside a tile")),
                    None => skel.top_instances.push(target),
                }
            }
            _ => return Err(NetlistError::UnsupportedCard { line, card: tokens[0].to_string() }),
        }
    }

    if block.is_some() {
        return Err(parse_err(text.lines().count(), "unterminated .SUBCKT"));
    }
    if !ended {
        return Err(parse_err(text.lines().count(), "missing .END"));
    }
    Ok(skel)
}
