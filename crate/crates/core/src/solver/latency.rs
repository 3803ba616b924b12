//! First-order RC delay of the crossbar wiring.

use crate::circuit::{CircuitGraph, Tile};
use crate::scalar::Scalar;

/// Elmore delay at the far end of an RC ladder. `segments[k] = (R_k, C_k)`
/// lists series resistances from the driving point, each followed by a
/// capacitance to ground: `τ = Σ_k R_k · Σ_{m ≥ k} C_m`.
pub fn elmore_ladder<T: Scalar>(segments: &[(T, T)]) -> T {
    let mut downstream = T::zero();
    let mut tau = T::zero();
    for &(r, c) in segments.iter().rev() {
        downstream += c;
        tau += r * downstream;
    }
    tau
}

/// Delay of the longest column wire of `tile`.
pub fn tile_delay<T: Scalar>(tile: &Tile<T>) -> T {
    let ladder = vec![(tile.r_seg_col, tile.c_seg_col); tile.rows];
    elmore_ladder(&ladder)
}

/// Sum over layers of the slowest tile delay plus a fixed neuron delay.
pub fn estimate_latency<T: Scalar>(graph: &CircuitGraph<T>, neuron_delay: T) -> T {
    graph
        .layers
        .iter()
        .map(|layer| {
            let worst = layer.tiles.iter().map(tile_delay).fold(T::zero(), T::max);
            worst + neuron_delay
        })
        .sum()
}
