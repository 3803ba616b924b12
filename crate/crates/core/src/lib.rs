//! Circuit-level simulation of memristive in-memory analog computing (IMAC)
//! accelerators for multilayer perceptrons.
//!
//! The pipeline maps trained weights to differential conductance pairs,
//! partitions each layer into crossbar tiles with wire parasitics, solves
//! the DC operating point of every tile and scores classification accuracy
//! and power over a test set.

pub mod circuit;
pub mod dataio;
pub mod harness;
pub mod mapping;
pub mod params;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type CircuitGraph64 = circuit::CircuitGraph<f64>;
pub type CircuitGraph32 = circuit::CircuitGraph<f32>;
pub type Tile64 = circuit::Tile<f64>;
pub type Tile32 = circuit::Tile<f32>;
pub type MappedLayer64 = mapping::MappedLayer<f64>;
pub type MappedLayer32 = mapping::MappedLayer<f32>;
pub type Simulator64 = solver::Simulator<f64>;
pub type Simulator32 = solver::Simulator<f32>;
pub type ForwardTrace64 = solver::ForwardTrace<f64>;
pub type ForwardTrace32 = solver::ForwardTrace<f32>;
pub type Evaluator64 = harness::Evaluator<f64>;
pub type Evaluator32 = harness::Evaluator<f32>;
