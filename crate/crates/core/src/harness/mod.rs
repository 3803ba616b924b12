//! Evaluation loop, float oracle, design-space sweeps and fixture training.

mod fixture;
mod oracle;
mod sweep;

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use fixture::{blob_dataset, train_fixture, BlobSpec, Fixture, FixtureConfig};
pub use oracle::{argmax, ideal_inference, normalize_pixels, Activation};
pub use sweep::{sweep, SweepAxis, SweepResult, SweepRow};

use crate::circuit::{CircuitError, CircuitGraph};
use crate::dataio::{encode_pixels, DataError, Dataset, WeightsBundle};
use crate::mapping::MappingOptions;
use crate::params::{HyperParams, ParamsError};
use crate::scalar::Scalar;
use crate::solver::{SolveMethod, Simulator, SolverError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("building solvers: {0}")]
    Setup(SolverError),
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: SolverError },
    #[error("requested {requested} samples, dataset has {available}")]
    TooManySamples { requested: usize, available: usize },
    #[error("at least one sample is required")]
    NoSamples,
    #[error("dataset has {found} inputs per sample, network expects {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("training loss became non-finite in epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("invalid fixture: {0}")]
    Fixture(String),
    #[error("sweep axis is empty")]
    EmptyAxis,
}

impl HarnessError {
    /// Failures of the linear solves, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, HarnessError::Setup(_) | HarnessError::Sample { .. } | HarnessError::DivergenceDetected { .. })
    }
}

/// Knobs of a simulation run not carried by the configuration file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub mapping: MappingOptions,
    pub method: SolveMethod,
    /// Seconds added per layer to the wire delay estimate.
    pub neuron_delay: f64,
    /// Keep `(predicted, label, power)` for every sample.
    pub per_sample: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mapping: MappingOptions::default(),
            method: SolveMethod::Auto,
            neuron_delay: 0.0,
            per_sample: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub predicted: usize,
    pub label: u8,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub error_rate: f64,
    pub accuracy: f64,
    #[serde(rename = "p_average_watts")]
    pub p_average: f64,
    #[serde(rename = "energy_joules")]
    pub energy_per_inference: f64,
    #[serde(rename = "latency_seconds")]
    pub latency: f64,
    pub n_samples: usize,
    pub errors: usize,
    #[serde(skip)]
    pub total_power: f64,
    #[serde(skip)]
    pub t_sampling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<SampleOutcome>>,
}

impl EvalReport {
    fn from_totals(
        errors: usize,
        total_power: f64,
        n_samples: usize,
        latency: f64,
        t_sampling: f64,
        per_sample: Option<Vec<SampleOutcome>>,
    ) -> Self {
        let n = n_samples as f64;
        let error_rate = errors as f64 / n;
        let p_average = total_power / n;
        EvalReport {
            error_rate,
            accuracy: 1.0 - error_rate,
            p_average,
            energy_per_inference: p_average * t_sampling,
            latency,
            n_samples,
            errors,
            total_power,
            t_sampling,
            per_sample,
        }
    }

    /// Report over the concatenation of two disjoint runs, `self` first.
    ///
    /// With per-sample records on both sides the power sum is redone in
    /// sample order, so the result is identical to a single run.
    pub fn merge(&self, next: &EvalReport) -> EvalReport {
        let errors = self.errors + next.errors;
        let n = self.n_samples + next.n_samples;
        match (&self.per_sample, &next.per_sample) {
            (Some(a), Some(b)) => {
                let all: Vec<SampleOutcome> = a.iter().chain(b).copied().collect();
                let total = all.iter().fold(0.0, |acc, s| acc + s.power);
                EvalReport::from_totals(errors, total, n, self.latency, self.t_sampling, Some(all))
            }
            _ => EvalReport::from_totals(
                errors,
                self.total_power + next.total_power,
                n,
                self.latency,
                self.t_sampling,
                None,
            ),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let rows = [
            ("samples", self.n_samples.to_string()),
            ("errors", self.errors.to_string()),
            ("error rate", format!("{:.4}", self.error_rate)),
            ("accuracy (%)", format!("{:.2}", 100.0 * self.accuracy)),
            ("P_average (W)", format!("{:.6e}", self.p_average)),
            ("energy (J)", format!("{:.6e}", self.energy_per_inference)),
            ("latency (s)", format!("{:.6e}", self.latency)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>14}");
        }
        out
    }
}

/// A built circuit ready to score dataset samples.
pub struct Evaluator<T> {
    sim: Simulator<T>,
    per_sample: bool,
}

impl<T: Scalar> Evaluator<T> {
    pub fn new(params: &HyperParams, weights: &WeightsBundle, opts: &SimOptions) -> Result<Self, HarnessError> {
        params.validate()?;
        weights.validate()?;
        let graph = CircuitGraph::<T>::build(params, weights, opts.mapping)?;
        let sim = Simulator::with_neuron_delay(graph, opts.method, T::lit(opts.neuron_delay))
            .map_err(HarnessError::Setup)?;
        Ok(Evaluator { sim, per_sample: opts.per_sample })
    }

    pub fn simulator(&self) -> &Simulator<T> {
        &self.sim
    }

    /// Predicted class and DC power for one sample.
    pub fn classify(&self, pixels: &[u8]) -> Result<(usize, f64), SolverError> {
        let params = &self.sim.graph().params;
        let v: Vec<T> = encode_pixels(pixels, &params.input_encoding);
        let trace = self.sim.forward(&v)?;
        Ok((argmax(trace.outputs()), trace.total_power.as_f64()))
    }

    /// Scores `range` of `data`; samples run in parallel and are reduced in index order.
    pub fn evaluate(&self, data: &Dataset, range: Range<usize>) -> Result<EvalReport, HarnessError> {
        if range.is_empty() {
            return Err(HarnessError::NoSamples);
        }
        if range.end > data.n_samples() {
            return Err(HarnessError::TooManySamples { requested: range.end, available: data.n_samples() });
        }
        let expected = self.sim.graph().inputs();
        if data.dim() != expected {
            return Err(HarnessError::InputWidth { expected, found: data.dim() });
        }
        let outcomes = range
            .clone()
            .into_par_iter()
            .map(|index| {
                let (pixels, label) = data.sample(index);
                self.classify(pixels)
                    .map(|(predicted, power)| SampleOutcome { predicted, label, power })
                    .map_err(|source| HarnessError::Sample { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let errors = outcomes.iter().filter(|s| s.predicted != usize::from(s.label)).count();
        let total = outcomes.iter().fold(0.0, |acc, s| acc + s.power);
        let params = &self.sim.graph().params;
        Ok(EvalReport::from_totals(
            errors,
            total,
            outcomes.len(),
            self.sim.latency().as_f64(),
            params.t_sampling,
            self.per_sample.then_some(outcomes),
        ))
    }
}

/// Builds the circuit once and scores the first `n_s` samples of `data`.
pub fn run_eval<T: Scalar>(
    params: &HyperParams,
    weights: &WeightsBundle,
    data: &Dataset,
    n_s: usize,
    opts: &SimOptions,
) -> Result<EvalReport, HarnessError> {
    run_eval_range::<T>(params, weights, data, 0..n_s, opts)
}

pub fn run_eval_range<T: Scalar>(
    params: &HyperParams,
    weights: &WeightsBundle,
    data: &Dataset,
    range: Range<usize>,
    opts: &SimOptions,
) -> Result<EvalReport, HarnessError> {
    if range.is_empty() {
        return Err(HarnessError::NoSamples);
    }
    Evaluator::<T>::new(params, weights, opts)?.evaluate(data, range)
}
