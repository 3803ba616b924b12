//! Behavioral sense stage and neuron.

use crate::params::NeuronKind;
use crate::scalar::Scalar;

/// Transimpedance sense stage followed by a neuron between the supply rails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronModel<T> {
    pub kind: NeuronKind,
    /// Slope in 1/V applied to the sensed voltage.
    pub steepness: T,
    pub gain: T,
    pub r_feedback: T,
    pub vdd: T,
    pub vss: T,
}

fn logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Output voltage for the differential column current `i_pos − i_neg`.
///
/// `x = gain·r_feedback·(i_pos − i_neg)`, then
/// sigmoid `vss + (vdd − vss)·σ(k·x)`, tanh `vdd·tanh(k·x)` or relu
/// `clamp(k·x·vdd, 0, vdd)`. The result is always within `[vss, vdd]`.
pub fn neuron_activation<T: Scalar>(i_pos: T, i_neg: T, m: &NeuronModel<T>) -> T {
    let x = m.gain * m.r_feedback * (i_pos - i_neg);
    let kx = m.steepness * x;
    let v = if kx.is_nan() {
        // ∞ − ∞ style inputs carry no sign; rest at the neutral point
        match m.kind {
            NeuronKind::Sigmoid => (m.vdd + m.vss) / T::lit(2.0),
            NeuronKind::Tanh | NeuronKind::Relu => T::zero(),
        }
    } else {
        match m.kind {
            NeuronKind::Sigmoid => m.vss + (m.vdd - m.vss) * logistic(kx),
            NeuronKind::Tanh => m.vdd * kx.tanh(),
            NeuronKind::Relu => (kx * m.vdd).max(T::zero()).min(m.vdd),
        }
    };
    v.max(m.vss).min(m.vdd)
}

impl<T: Scalar> NeuronModel<T> {
    pub fn activate(&self, i_pos: T, i_neg: T) -> T {
        neuron_activation(i_pos, i_neg, self)
    }
}
