//! DC operating point of the crossbar network.
//!
//! Each tile is solved on its own: neurons are ideal buffers and the sense
//! nodes are virtual grounds, so layers decouple into independent linear
//! tile systems joined by pointwise neuron nonlinearities.

mod latency;
pub mod linalg;
mod mna;
mod neuron;

use rayon::prelude::*;
use thiserror::Error;

pub use latency::{elmore_ladder, estimate_latency, tile_delay};
pub use mna::{
    assemble_mna, solve_tile, Branch, MnaSystem, Node, SolveMethod, SolveResult, TileNetwork,
    TileSolver, DIRECT_SOLVE_MAX_DIM,
};
pub use neuron::{neuron_activation, NeuronModel};

use crate::circuit::{CircuitGraph, Polarity};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("linear solve did not converge (iterations {iterations}, relative residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("nodal matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("expected {expected} input voltages, got {found}")]
    InputLength { expected: usize, found: usize },
    #[error("tile L{layer}_H{h}_V{v}_{polarity:?}: {source}")]
    Tile { layer: usize, h: usize, v: usize, polarity: Polarity, source: Box<SolverError> },
}

impl SolverError {
    /// The underlying numerical failure, without tile coordinates.
    pub fn root(&self) -> &SolverError {
        match self {
            SolverError::Tile { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Per-layer record of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace<T> {
    /// Positive-array current summed over horizontal partitions, per neuron.
    pub i_pos: Vec<T>,
    pub i_neg: Vec<T>,
    /// Neuron output voltages.
    pub outputs: Vec<T>,
    /// One result per tile, in the layer's tile order.
    pub tiles: Vec<SolveResult<T>>,
}

impl<T: Scalar> LayerTrace<T> {
    pub fn i_diff(&self) -> Vec<T> {
        self.i_pos.iter().zip(&self.i_neg).map(|(&p, &n)| p - n).collect()
    }

    pub fn tile_power(&self) -> T {
        self.tiles.iter().map(|t| t.power).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub layers: Vec<LayerTrace<T>>,
    /// Crossbar dissipation plus neuron static power, watts.
    pub total_power: T,
    pub latency: T,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Final-layer neuron voltages.
    pub fn outputs(&self) -> &[T] {
        self.layers.last().map_or(&[], |l| &l.outputs)
    }
}

/// A circuit with every tile prepared for repeated forward passes.
pub struct Simulator<T> {
    graph: CircuitGraph<T>,
    solvers: Vec<Vec<TileSolver<T>>>,
    neurons: Vec<NeuronModel<T>>,
    latency: T,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(graph: CircuitGraph<T>, method: SolveMethod) -> Result<Self, SolverError> {
        Self::with_neuron_delay(graph, method, T::zero())
    }

    pub fn with_neuron_delay(
        graph: CircuitGraph<T>,
        method: SolveMethod,
        neuron_delay: T,
    ) -> Result<Self, SolverError> {
        let solvers = graph
            .layers
            .iter()
            .map(|layer| {
                layer
                    .tiles
                    .par_iter()
                    .map(|tile| {
                        TileSolver::new(tile, method).map_err(|e| SolverError::Tile {
                            layer: tile.layer + 1,
                            h: tile.h,
                            v: tile.v,
                            polarity: tile.polarity,
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = &graph.params;
        let neurons = graph
            .layers
            .iter()
            .map(|layer| NeuronModel {
                kind: layer.neuron,
                steepness: layer.steepness,
                gain: layer.gain,
                r_feedback: T::lit(p.r_feedback),
                vdd: T::lit(p.vdd),
                vss: T::lit(p.vss),
            })
            .collect();
        let latency = estimate_latency(&graph, neuron_delay);
        Ok(Simulator { graph, solvers, neurons, latency })
    }

    pub fn graph(&self) -> &CircuitGraph<T> {
        &self.graph
    }

    pub fn latency(&self) -> T {
        self.latency
    }

    /// Drives the first layer with `input_v` and propagates to the outputs.
    pub fn forward(&self, input_v: &[T]) -> Result<ForwardTrace<T>, SolverError> {
        let expected = self.graph.inputs();
        if input_v.len() != expected {
            return Err(SolverError::InputLength { expected, found: input_v.len() });
        }
        let v_bias = T::lit(self.graph.params.v_bias);
        let static_power = T::lit(self.graph.params.neuron.static_power);
        let mut prev: Vec<T> = input_v.to_vec();
        let mut layers = Vec::with_capacity(self.graph.layers.len());
        let mut total_power = T::zero();

        for ((layer, solvers), neuron) in self.graph.layers.iter().zip(&self.solvers).zip(&self.neurons) {
            let tiles = layer
                .tiles
                .par_iter()
                .zip(solvers.par_iter())
                .map(|(tile, solver)| {
                    let mut v_in: Vec<T> =
                        prev[tile.row_offset..tile.row_offset + tile.input_rows()].to_vec();
                    if tile.has_bias {
                        v_in.push(v_bias);
                    }
                    solver.solve(&v_in).map_err(|e| SolverError::Tile {
                        layer: tile.layer + 1,
                        h: tile.h,
                        v: tile.v,
                        polarity: tile.polarity,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;

            // ordered reduction keeps results independent of worker count
            let mut i_pos = vec![T::zero(); layer.outputs];
            let mut i_neg = vec![T::zero(); layer.outputs];
            for (tile, result) in layer.tiles.iter().zip(&tiles) {
                let sink = match tile.polarity {
                    Polarity::Pos => &mut i_pos,
                    Polarity::Neg => &mut i_neg,
                };
                for (c, &i) in result.column_currents.iter().enumerate() {
                    sink[tile.col_offset + c] += i;
                }
            }
            let outputs: Vec<T> =
                i_pos.iter().zip(&i_neg).map(|(&p, &n)| neuron.activate(p, n)).collect();

            let trace = LayerTrace { i_pos, i_neg, outputs, tiles };
            total_power += trace.tile_power() + static_power * T::lit(layer.outputs as f64);
            prev = trace.outputs.clone();
            layers.push(trace);
        }

        Ok(ForwardTrace { layers, total_power, latency: self.latency })
    }
}

/// One-shot forward pass; prefer [`Simulator`] for many inputs.
pub fn forward<T: Scalar>(graph: &CircuitGraph<T>, input_v: &[T]) -> Result<ForwardTrace<T>, SolverError> {
    Simulator::new(graph.clone(), SolveMethod::Auto)?.forward(input_v)
}

#[cfg(test)]
mod tests;
