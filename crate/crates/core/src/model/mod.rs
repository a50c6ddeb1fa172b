//! Hybrid classifier: classical affine+tanh encoder, quantum feature layer,
//! classical affine head.
//!
//! The encoder maps an input vector to one rotation angle per data wire,
//! the circuit measures `<Z_j>` on each data wire, and the head maps those
//! features to class logits. Gradients flow analytically through the head
//! and encoder and via the parameter-shift rule through the circuit.

mod optimizer;
mod train;

pub use optimizer::{optimizer_step, AdamWConfig, AdamWState};
pub use train::{backward, local_train, LocalTrainOutcome, TrainSettings};

use rand::Rng;

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::qsim::{AngleSource, CircuitTemplate, Gate, Measurement, ZObservable};

/// Wire counts and layer sizes for one model profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelArchitecture {
    pub n_data_wires: usize,
    pub n_ancilla: usize,
    pub entangling_depth: usize,
    pub n_classes: usize,
    pub input_dim: usize,
}

impl ModelArchitecture {
    /// MNIST profile: 4 data + 1 ancilla wires, entangling depth 6.
    pub fn mnist() -> Self {
        ModelArchitecture {
            n_data_wires: 4,
            n_ancilla: 1,
            entangling_depth: 6,
            n_classes: 10,
            input_dim: 784,
        }
    }

    /// Desk-scale MNIST profile on 8x8 downscaled images.
    pub fn mnist8x8() -> Self {
        ModelArchitecture {
            input_dim: 64,
            ..Self::mnist()
        }
    }

    /// CIFAR-10 profile: 8 data + 1 ancilla wires.
    pub fn cifar10(entangling_depth: usize) -> Self {
        ModelArchitecture {
            n_data_wires: 8,
            n_ancilla: 1,
            entangling_depth,
            n_classes: 10,
            input_dim: 3072,
        }
    }

    pub fn custom(
        n_data_wires: usize,
        entangling_depth: usize,
        n_classes: usize,
        input_dim: usize,
    ) -> Result<Self> {
        let arch = ModelArchitecture {
            n_data_wires,
            n_ancilla: 1,
            entangling_depth,
            n_classes,
            input_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_data_wires == 0 {
            return Err(Error::Config("need at least one data wire".into()));
        }
        if self.n_wires() > crate::qsim::MAX_WIRES {
            return Err(Error::Config(format!(
                "{} wires exceeds the dense backend limit of {}",
                self.n_wires(),
                crate::qsim::MAX_WIRES
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn n_wires(&self) -> usize {
        self.n_data_wires + self.n_ancilla
    }

    pub fn n_quantum_params(&self) -> usize {
        2 * self.n_data_wires * self.entangling_depth
    }

    pub fn total_params(&self) -> usize {
        let encoder = self.n_data_wires * self.input_dim + self.n_data_wires;
        let head = self.n_classes * self.n_data_wires + self.n_classes;
        encoder + self.n_quantum_params() + head
    }

    /// Per-data-wire Z observables, the model's measurement features.
    pub fn feature_observables(&self) -> Vec<ZObservable> {
        (0..self.n_data_wires).map(ZObservable::single).collect()
    }
}

/// Byte ranges of each block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub encoder_w: std::ops::Range<usize>,
    pub encoder_b: std::ops::Range<usize>,
    pub quantum: std::ops::Range<usize>,
    pub head_w: std::ops::Range<usize>,
    pub head_b: std::ops::Range<usize>,
}

impl ParamLayout {
    pub fn of(arch: &ModelArchitecture) -> Self {
        let ew = arch.n_data_wires * arch.input_dim;
        let eb = arch.n_data_wires;
        let q = arch.n_quantum_params();
        let hw = arch.n_classes * arch.n_data_wires;
        let hb = arch.n_classes;
        let mut at = 0;
        let mut next = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        ParamLayout {
            encoder_w: next(ew),
            encoder_b: next(eb),
            quantum: next(q),
            head_w: next(hw),
            head_b: next(hb),
        }
    }

    pub fn total(&self) -> usize {
        self.head_b.end
    }
}

/// Flat parameter vector plus its block manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    flat: Vec<f64>,
    layout: ParamLayout,
}

impl ModelParams {
    pub fn zeros(arch: &ModelArchitecture) -> Self {
        let layout = ParamLayout::of(arch);
        ModelParams {
            flat: vec![0.0; layout.total()],
            layout,
        }
    }

    /// Seeded initialization: uniform fan-balanced ranges for the affine
    /// blocks, small uniform angles for the quantum block.
    pub fn init(arch: &ModelArchitecture, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(arch);
        let enc_scale = (6.0 / (arch.input_dim + arch.n_data_wires) as f64).sqrt();
        for i in params.layout.encoder_w.clone() {
            params.flat[i] = (rng.random::<f64>() * 2.0 - 1.0) * enc_scale;
        }
        let head_scale = (6.0 / (arch.n_data_wires + arch.n_classes) as f64).sqrt();
        for i in params.layout.head_w.clone() {
            params.flat[i] = (rng.random::<f64>() * 2.0 - 1.0) * head_scale;
        }
        let angle_scale = 0.1 * std::f64::consts::PI;
        for i in params.layout.quantum.clone() {
            params.flat[i] = (rng.random::<f64>() * 2.0 - 1.0) * angle_scale;
        }
        params
    }

    pub fn from_flat(arch: &ModelArchitecture, flat: Vec<f64>) -> Result<Self> {
        let layout = ParamLayout::of(arch);
        if flat.len() != layout.total() {
            return Err(Error::Shape(format!(
                "parameter vector length {} does not match architecture total {}",
                flat.len(),
                layout.total()
            )));
        }
        Ok(ModelParams { flat, layout })
    }

    pub fn dim(&self) -> usize {
        self.flat.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn encoder_w(&self) -> &[f64] {
        &self.flat[self.layout.encoder_w.clone()]
    }

    pub fn encoder_b(&self) -> &[f64] {
        &self.flat[self.layout.encoder_b.clone()]
    }

    pub fn quantum(&self) -> &[f64] {
        &self.flat[self.layout.quantum.clone()]
    }

    pub fn head_w(&self) -> &[f64] {
        &self.flat[self.layout.head_w.clone()]
    }

    pub fn head_b(&self) -> &[f64] {
        &self.flat[self.layout.head_b.clone()]
    }
}

/// The clean circuit: per data wire an angle-encoding RX, then
/// `entangling_depth` repetitions of [trainable RX, trainable RY per data
/// wire; CNOT ring over the data wires]. The ancilla idles in the clean
/// circuit; attack blocks may recruit it.
pub fn clean_template(arch: &ModelArchitecture) -> CircuitTemplate {
    let n = arch.n_data_wires;
    let mut gates = Vec::new();
    for j in 0..n {
        gates.push(Gate::Rx {
            wire: j,
            angle: AngleSource::Input(j),
        });
    }
    let mut before_final = gates.len();
    for d in 0..arch.entangling_depth {
        if d == arch.entangling_depth - 1 {
            before_final = gates.len();
        }
        for j in 0..n {
            let base = 2 * (d * n + j);
            gates.push(Gate::Rx {
                wire: j,
                angle: AngleSource::Param(base),
            });
            gates.push(Gate::Ry {
                wire: j,
                angle: AngleSource::Param(base + 1),
            });
        }
        if n >= 2 {
            for j in 0..n {
                gates.push(Gate::Cnot {
                    control: j,
                    target: (j + 1) % n,
                });
            }
        }
    }
    CircuitTemplate::new(arch.n_wires(), gates, 0, before_final)
        .expect("clean template construction is internally consistent")
}

/// Encoder: `angles = pi * tanh(W x + b)`, one angle per data wire,
/// each strictly inside (-pi, pi).
pub fn encode(input: &[f64], params: &ModelParams, arch: &ModelArchitecture) -> Result<Vec<f64>> {
    if input.len() != arch.input_dim {
        return Err(Error::Shape(format!(
            "input dimension {} does not match architecture input_dim {}",
            input.len(),
            arch.input_dim
        )));
    }
    let w = params.encoder_w();
    let b = params.encoder_b();
    let mut angles = Vec::with_capacity(arch.n_data_wires);
    for j in 0..arch.n_data_wires {
        let row = &w[j * arch.input_dim..(j + 1) * arch.input_dim];
        let pre: f64 = crate::linalg::dot(row, input) + b[j];
        angles.push(std::f64::consts::PI * pre.tanh());
    }
    Ok(angles)
}

/// Full forward pass: returns `(logits, features)` where features are the
/// per-data-wire Z expectations in [-1, 1].
pub fn forward(
    input: &[f64],
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
) -> Result<(Vec<f64>, Vec<f64>)> {
    forward_with(input, params, arch, circuit, Measurement::Exact)
}

/// Forward pass under an explicit measurement mode (exact or shot-sampled).
pub fn forward_with(
    input: &[f64],
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    measurement: Measurement,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let angles = encode(input, params, arch)?;
    let state = circuit.run(params.quantum(), &angles)?;
    let features = measurement.features(&state, &arch.feature_observables())?;
    let logits = head_logits(&features, params, arch);
    Ok((logits, features))
}

pub(crate) fn head_logits(
    features: &[f64],
    params: &ModelParams,
    arch: &ModelArchitecture,
) -> Vec<f64> {
    let w = params.head_w();
    let b = params.head_b();
    (0..arch.n_classes)
        .map(|c| {
            let row = &w[c * arch.n_data_wires..(c + 1) * arch.n_data_wires];
            crate::linalg::dot(row, features) + b[c]
        })
        .collect()
}

/// Numerically stable cross-entropy of one sample.
pub fn loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Data(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// Cross-entropy with the poisoned-round amplification hook: exactly
/// `scale * loss`.
pub fn scaled_loss(logits: &[f64], label: usize, scale: f64) -> Result<f64> {
    Ok(scale * loss(logits, label)?)
}

pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Accuracy (percent) and mean loss of `params` on a dataset.
pub fn evaluate(
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    data: &crate::data::Dataset,
) -> Result<(f64, f64)> {
    evaluate_with(params, arch, circuit, data, Measurement::Exact)
}

pub fn evaluate_with(
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    data: &crate::data::Dataset,
    measurement: Measurement,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let mut loss_acc = 0.0;
    for i in 0..data.len() {
        let (logits, _) = forward_with(data.input(i), params, arch, circuit, measurement)?;
        let label = data.label(i) as usize;
        loss_acc += loss(&logits, label)?;
        let pred = argmax(&logits);
        if pred == label {
            correct += 1;
        }
    }
    Ok((
        100.0 * correct as f64 / data.len() as f64,
        loss_acc / data.len() as f64,
    ))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean loss of a batch under a given circuit and loss scaling. Used by the
/// finite-difference oracles.
pub fn batch_loss(
    batch: &Batch,
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    loss_scale: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..batch.len() {
        let (logits, _) = forward(batch.input(i), params, arch, circuit)?;
        acc += scaled_loss(&logits, batch.labels[i] as usize, loss_scale)?;
    }
    Ok(acc / batch.len() as f64)
}
