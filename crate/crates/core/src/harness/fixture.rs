//! Small synthetic classification task and a plain SGD trainer for it.
//!
//! Stands in for a trained MNIST model in tests: networks are a few dozen
//! neurons wide and train in milliseconds, deterministically for a seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::oracle::{normalize_pixels, Activation};
use super::HarnessError;
use crate::dataio::{Dataset, LayerWeights, WeightsBundle};
use crate::params::HyperParams;

/// Widest layer the trainer accepts.
pub const MAX_FIXTURE_WIDTH: usize = 64;

/// Gaussian clusters of 8-bit "pixels", one cluster per class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobSpec {
    pub dim: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-pixel standard deviation around the class center.
    pub spread: f64,
}

impl BlobSpec {
    pub fn for_topology(topology: &[usize]) -> Self {
        BlobSpec {
            dim: topology.first().copied().unwrap_or(0),
            classes: topology.last().copied().unwrap_or(0),
            train_per_class: 64,
            test_per_class: 64,
            spread: 12.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixtureConfig {
    pub blobs: BlobSpec,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub weights: WeightsBundle,
    pub train: Dataset,
    pub test: Dataset,
}

const MIN_CENTER_SEPARATION: f64 = 6.0;

/// Draws well-separated class centers, then `(train, test)` samples with
/// classes interleaved.
pub fn blob_dataset(spec: &BlobSpec, rng: &mut ChaCha8Rng) -> Result<(Dataset, Dataset), HarnessError> {
    if spec.dim == 0 || spec.classes < 2 || spec.classes > 256 {
        return Err(HarnessError::Fixture(format!(
            "need dim >= 1 and 2..=256 classes, got dim {} and {} classes",
            spec.dim, spec.classes
        )));
    }
    if !(spec.spread.is_finite() && spec.spread > 0.0) {
        return Err(HarnessError::Fixture("spread must be positive".into()));
    }
    let min_dist = MIN_CENTER_SEPARATION * spec.spread;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while centers.len() < spec.classes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(HarnessError::Fixture("cannot place separated class centers; lower spread".into()));
        }
        let c: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(40.0..215.0)).collect();
        let far = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_dist);
        if far {
            centers.push(c);
        }
    }
    let noise = Normal::new(0.0, spec.spread).expect("positive spread");
    let mut draw = |per_class: usize| -> Result<Dataset, HarnessError> {
        let mut pixels = Vec::with_capacity(per_class * spec.classes * spec.dim);
        let mut labels = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (class, center) in centers.iter().enumerate() {
                pixels.extend(center.iter().map(|&m| (m + noise.sample(rng)).round().clamp(0.0, 255.0) as u8));
                labels.push(class as u8);
            }
        }
        Ok(Dataset::from_rows(spec.dim, pixels, labels)?)
    };
    let train = draw(spec.train_per_class)?;
    let test = draw(spec.test_per_class)?;
    Ok((train, test))
}

struct Net {
    // w[j] is inputs × outputs row-major, as in `LayerWeights`
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    widths: Vec<usize>,
}

impl Net {
    fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        for pair in widths.windows(2) {
            let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            w.push((0..pair[0] * pair[1]).map(|_| rng.random_range(-limit..limit)).collect());
            b.push(vec![0.0; pair[1]]);
        }
        Net { w, b, widths: widths.to_vec() }
    }

    /// Returns pre-activations and activations of every layer, input first in `a`.
    fn forward(&self, x: &[f64], act: &Activation) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.w.len());
        let mut activations = vec![x.to_vec()];
        for j in 0..self.w.len() {
            let (n_in, n_out) = (self.widths[j], self.widths[j + 1]);
            let u = activations.last().expect("input present");
            let mut z = self.b[j].clone();
            for r in 0..n_in {
                for c in 0..n_out {
                    z[c] += u[r] * self.w[j][r * n_out + c];
                }
            }
            activations.push(z.iter().map(|&v| act.apply(v)).collect());
            zs.push(z);
        }
        (zs, activations)
    }

    /// One SGD step on `0.5·‖a − t‖²`; returns the loss before the step.
    fn step(&mut self, x: &[f64], target: &[f64], act: &Activation, lr: f64) -> f64 {
        let (zs, a) = self.forward(x, act);
        let out = a.last().expect("output layer");
        let loss = 0.5 * out.iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        let last = self.w.len() - 1;
        let mut delta: Vec<f64> =
            out.iter().zip(target).zip(&zs[last]).map(|((o, t), &z)| (o - t) * act.derivative(z)).collect();
        for j in (0..self.w.len()).rev() {
            let (n_in, n_out) = (self.widths[j], self.widths[j + 1]);
            let prev_delta = (j > 0).then(|| {
                (0..n_in)
                    .map(|r| {
                        let back: f64 = (0..n_out).map(|c| self.w[j][r * n_out + c] * delta[c]).sum();
                        back * act.derivative(zs[j - 1][r])
                    })
                    .collect::<Vec<f64>>()
            });
            for r in 0..n_in {
                for c in 0..n_out {
                    self.w[j][r * n_out + c] -= lr * a[j][r] * delta[c];
                }
            }
            for c in 0..n_out {
                self.b[j][c] -= lr * delta[c];
            }
            if let Some(d) = prev_delta {
                delta = d;
            }
        }
        loss
    }

    fn bundle(&self) -> Option<WeightsBundle> {
        let layers = self
            .w
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(j, (w, b))| LayerWeights {
                inputs: self.widths[j],
                outputs: self.widths[j + 1],
                w: w.iter().map(|&v| v as f32).collect(),
                b: b.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        // shapes are consistent by construction, so only non-finite values fail
        WeightsBundle::new(self.widths.clone(), layers).ok()
    }
}

/// Trains `params.topology` on blobs with per-sample SGD on mean-squared
/// error against one-hot targets, using the configured neuron as activation.
///
/// Single-threaded; the result depends only on the inputs.
pub fn train_fixture(cfg: &FixtureConfig, params: &HyperParams) -> Result<Fixture, HarnessError> {
    let topology = &params.topology;
    if topology.len() < 2 || topology.iter().any(|&w| w == 0 || w > MAX_FIXTURE_WIDTH) {
        return Err(HarnessError::Fixture(format!(
            "topology {topology:?} needs >= 2 widths in 1..={MAX_FIXTURE_WIDTH}"
        )));
    }
    if cfg.blobs.dim != topology[0] || cfg.blobs.classes != topology[topology.len() - 1] {
        return Err(HarnessError::Fixture(format!(
            "blobs are {}-dimensional with {} classes, topology is {topology:?}",
            cfg.blobs.dim, cfg.blobs.classes
        )));
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(HarnessError::Fixture(format!("learning rate {} must be finite and >= 0", cfg.lr)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train, test) = blob_dataset(&cfg.blobs, &mut rng)?;
    let mut net = Net::init(topology, &mut rng);
    let act = Activation::from_params(params);

    let (lo, hi) = act.range();
    let margin = 0.1 * (hi - lo);
    let (t_lo, t_hi) = (lo + margin, hi - margin);
    let inputs: Vec<Vec<f64>> = (0..train.n_samples())
        .map(|i| normalize_pixels(train.sample(i).0, &params.input_encoding, params.v_bias))
        .collect();
    let targets: Vec<Vec<f64>> = (0..train.n_samples())
        .map(|i| {
            let label = usize::from(train.sample(i).1);
            (0..cfg.blobs.classes).map(|c| if c == label { t_hi } else { t_lo }).collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..train.n_samples()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            loss += net.step(&inputs[i], &targets[i], &act, cfg.lr);
        }
        if !loss.is_finite() {
            return Err(HarnessError::DivergenceDetected { epoch });
        }
    }
    let weights = net
        .bundle()
        .ok_or(HarnessError::DivergenceDetected { epoch: cfg.epochs.saturating_sub(1) })?;
    Ok(Fixture { weights, train, test })
}
