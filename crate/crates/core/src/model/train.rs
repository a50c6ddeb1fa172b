use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{
    head_logits, optimizer_step, softmax, AdamWConfig, AdamWState, ModelArchitecture, ModelParams,
};
use crate::qsim::{shift_jacobian_with, CircuitTemplate, Measurement, ZObservable};

/// Gradient of the mean batch loss times `loss_scale`, over the full flat
/// parameter vector.
///
/// Head and encoder blocks are differentiated analytically; the quantum
/// block and the encoder angles go through the parameter-shift rule.
pub fn backward(
    batch: &Batch,
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    loss_scale: f64,
) -> Result<Vec<f64>> {
    backward_with(batch, params, arch, circuit, loss_scale, Measurement::Exact)
}

/// Batch gradient under an explicit measurement mode.
pub fn backward_with(
    batch: &Batch,
    params: &ModelParams,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    loss_scale: f64,
    measurement: Measurement,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Data("cannot take gradients of an empty batch".into()));
    }
    if loss_scale <= 0.0 {
        return Err(Error::Config(format!(
            "loss_scale must be positive, got {loss_scale}"
        )));
    }
    if batch.input_dim != arch.input_dim {
        return Err(Error::Shape(format!(
            "batch input_dim {} does not match architecture {}",
            batch.input_dim, arch.input_dim
        )));
    }
    let layout = params.layout().clone();
    let mut grad = vec![0.0; params.dim()];
    let observables: Vec<ZObservable> = arch.feature_observables();
    let n = arch.n_data_wires;
    let quantum = params.quantum();
    let enc_w = params.encoder_w();
    let enc_b = params.encoder_b();

    for s in 0..batch.len() {
        let x = batch.input(s);
        let label = batch.labels[s] as usize;
        if label >= arch.n_classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {} classes",
                arch.n_classes
            )));
        }

        // forward pieces we need again on the backward path
        let mut pre = Vec::with_capacity(n);
        for j in 0..n {
            let row = &enc_w[j * arch.input_dim..(j + 1) * arch.input_dim];
            pre.push(crate::linalg::dot(row, x) + enc_b[j]);
        }
        let angles: Vec<f64> = pre
            .iter()
            .map(|p| std::f64::consts::PI * p.tanh())
            .collect();
        let state = circuit.run(quantum, &angles)?;
        let features = measurement.features(&state, &observables)?;
        let logits = head_logits(&features, params, arch);

        // d(mean CE)/d(logits) for this sample, before the 1/B factor
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;

        // head block: dW[c,j] = dlogit_c * feature_j ; db[c] = dlogit_c
        for c in 0..arch.n_classes {
            let w_row = layout.head_w.start + c * n;
            for j in 0..n {
                grad[w_row + j] += dlogits[c] * features[j];
            }
            grad[layout.head_b.start + c] += dlogits[c];
        }

        // feature gradient back through the head
        let head_w = params.head_w();
        let mut dfeatures = vec![0.0; n];
        for c in 0..arch.n_classes {
            for j in 0..n {
                dfeatures[j] += head_w[c * n + j] * dlogits[c];
            }
        }

        // quantum block via parameter shift
        let jac_q = shift_jacobian_with(circuit, quantum, &angles, &observables, true, measurement)?;
        for (j, row) in jac_q.iter().enumerate() {
            for (k, dq) in row.iter().enumerate() {
                grad[layout.quantum.start + k] += dfeatures[j] * dq;
            }
        }

        // encoder angles via parameter shift on the input slots, then the
        // analytic tanh chain: d(angle)/d(pre) = pi * (1 - tanh^2)
        let jac_in =
            shift_jacobian_with(circuit, quantum, &angles, &observables, false, measurement)?;
        let mut dangles = vec![0.0; n];
        for (j, row) in jac_in.iter().enumerate() {
            for (l, da) in row.iter().enumerate() {
                dangles[l] += dfeatures[j] * da;
            }
        }
        for l in 0..n {
            let t = pre[l].tanh();
            let dpre = dangles[l] * std::f64::consts::PI * (1.0 - t * t);
            let w_row = layout.encoder_w.start + l * arch.input_dim;
            for (m, &xm) in x.iter().enumerate() {
                grad[w_row + m] += dpre * xm;
            }
            grad[layout.encoder_b.start + l] += dpre;
        }
    }

    let factor = loss_scale / batch.len() as f64;
    for g in &mut grad {
        *g *= factor;
    }
    Ok(grad)
}

/// Knobs for one client's local optimization.
#[derive(Debug, Clone, Copy)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub measurement: Measurement,
}

#[derive(Debug, Clone)]
pub struct LocalTrainOutcome {
    /// `theta_after - theta_before` over the flat vector.
    pub delta: Vec<f64>,
    /// Mean training loss over all processed batches.
    pub mean_loss: f64,
}

/// Local training: clones the broadcast parameters, runs `epochs` passes of
/// shuffled mini-batches with a fresh optimizer state, and returns the
/// parameter delta. The broadcast parameters are never mutated.
pub fn local_train(
    params: &ModelParams,
    data: &Dataset,
    settings: &TrainSettings,
    arch: &ModelArchitecture,
    circuit: &CircuitTemplate,
    loss_scale: f64,
    rng: &mut impl Rng,
) -> Result<LocalTrainOutcome> {
    if settings.epochs == 0 {
        return Err(Error::Config("local epochs must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Data("client has no training data".into()));
    }
    let mut theta = params.clone();
    let mut opt_state = AdamWState::new(theta.dim());
    let mut loss_acc = 0.0;
    let mut n_batches = 0usize;
    let batch_size = settings.batch_size.max(1);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for _ in 0..settings.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(batch_size) {
            let batch = data.batch(chunk);
            let grad = backward_with(
                &batch,
                &theta,
                arch,
                circuit,
                loss_scale,
                settings.measurement,
            )?;
            loss_acc += crate::model::batch_loss(&batch, &theta, arch, circuit, loss_scale)?;
            n_batches += 1;
            optimizer_step(&mut theta, &grad, &mut opt_state, &settings.optimizer)?;
        }
    }
    let delta: Vec<f64> = theta
        .flat()
        .iter()
        .zip(params.flat())
        .map(|(a, b)| a - b)
        .collect();
    Ok(LocalTrainOutcome {
        delta,
        mean_loss: loss_acc / n_batches as f64,
    })
}
