//! Float reference network the circuit is checked against.

use crate::dataio::{encode_pixels, WeightsBundle};
use crate::params::{HyperParams, InputEncoding, NeuronKind};

/// Neuron transfer in units of the bias voltage.
///
/// Dividing every voltage by `v_bias` makes the ideal crossbar compute
/// `act(u·W + b)` on normalized activations `u`, with the bias input fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activation {
    pub kind: NeuronKind,
    pub steepness: f64,
    pub vdd: f64,
    pub vss: f64,
    pub v_bias: f64,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn from_params(params: &HyperParams) -> Self {
        Activation {
            kind: params.neuron.kind,
            steepness: params.neuron.steepness,
            vdd: params.vdd,
            vss: params.vss,
            v_bias: params.v_bias,
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        let kz = self.steepness * z;
        let v = match self.kind {
            NeuronKind::Sigmoid => self.vss + (self.vdd - self.vss) * logistic(kz),
            NeuronKind::Tanh => self.vdd * kz.tanh(),
            NeuronKind::Relu => (kz * self.vdd).clamp(0.0, self.vdd),
        };
        v.clamp(self.vss, self.vdd) / self.v_bias
    }

    /// `d apply / dz`; zero at the relu kinks.
    pub fn derivative(&self, z: f64) -> f64 {
        let k = self.steepness;
        match self.kind {
            NeuronKind::Sigmoid => {
                let s = logistic(k * z);
                (self.vdd - self.vss) * k * s * (1.0 - s) / self.v_bias
            }
            NeuronKind::Tanh => {
                let t = (k * z).tanh();
                self.vdd * k * (1.0 - t * t) / self.v_bias
            }
            NeuronKind::Relu => {
                let kz = k * z;
                if kz > 0.0 && kz < 1.0 {
                    self.vdd * k / self.v_bias
                } else {
                    0.0
                }
            }
        }
    }

    /// Normalized output range `(low, high)`.
    pub fn range(&self) -> (f64, f64) {
        let low = match self.kind {
            NeuronKind::Sigmoid => self.vss,
            NeuronKind::Tanh => self.vss.max(-self.vdd),
            NeuronKind::Relu => 0.0,
        };
        (low / self.v_bias, self.vdd / self.v_bias)
    }
}

/// Index of the largest value; ties and NaNs resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Pixels as the normalized activations the first crossbar layer sees.
pub fn normalize_pixels(pixels: &[u8], enc: &InputEncoding, v_bias: f64) -> Vec<f64> {
    encode_pixels::<f64>(pixels, enc).into_iter().map(|v| v / v_bias).collect()
}

/// Layer-by-layer `act(u·W + b)` in f64, returning the predicted class and
/// every layer's activations (input excluded).
pub fn ideal_inference(weights: &WeightsBundle, input: &[f64], act: &Activation) -> (usize, Vec<Vec<f64>>) {
    let mut u = input.to_vec();
    let mut trace = Vec::with_capacity(weights.layers.len());
    for layer in &weights.layers {
        let mut z: Vec<f64> = layer.b.iter().map(|&b| f64::from(b)).collect();
        for (r, &ur) in u.iter().enumerate().take(layer.inputs) {
            let row = &layer.w[r * layer.outputs..(r + 1) * layer.outputs];
            for (zc, &w) in z.iter_mut().zip(row) {
                *zc += ur * f64::from(w);
            }
        }
        u = z.into_iter().map(|z| act.apply(z)).collect();
        trace.push(u.clone());
    }
    (argmax(&u), trace)
}
