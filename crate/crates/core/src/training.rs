//! Mini-batch SGD with cross-entropy loss, optional quadratic weight decay,
//! and per-epoch metric capture (accuracy, certified accuracy, Lipschitz
//! estimates) for training-dynamics analysis.

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lipschitz::{self, InputSampler};
use crate::network::{self, activation_derivative, MlpNetwork, NetworkSpec};
use crate::robustness::{self, CertificationMethod, PerturbationSpec};
use crate::rng::Pcg32;

/// Early stop: training ends once the trailing mean of the loss over this
/// window improves by less than [`EARLY_STOP_MIN_DELTA`] across the window.
pub const EARLY_STOP_WINDOW: usize = 5;
pub const EARLY_STOP_MIN_DELTA: f64 = 1e-4;

/// Standard-normal probes per epoch for the empirical Lipschitz metric.
/// Kept modest so metric capture stays cheap next to the epoch itself.
pub const EPOCH_METRIC_SAMPLES: usize = 16;

/// Training hyperparameters. `eval_epsilon` drives the per-epoch certified
/// accuracy column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_epsilon: PerturbationSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid(format!(
                "weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One row of the training-dynamics record. `epoch` 0 is the freshly
/// initialized network; epoch k is the state after k passes over the data.
/// `lipschitz_analytical` is the closed-form estimate re-evaluated with the
/// effective post-training weight multiplier; NaN when the architecture has
/// no hidden layer.
#[derive(Debug, Clone, Copy)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub certified_accuracy: f64,
    pub lipschitz_empirical: f64,
    pub lipschitz_spectral: f64,
    pub lipschitz_analytical: f64,
}

/// Numerically stable cross-entropy of logits against an integer label.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    -(logits[label] - max - log_sum)
}

/// Per-layer parameter gradients plus the mean loss of the batch that
/// produced them.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub mean_loss: f64,
}

/// Mean cross-entropy gradients over a batch via backpropagation.
pub fn gradients(net: &MlpNetwork, inputs: &[Vec<f64>], labels: &[usize]) -> Result<Gradients> {
    if inputs.is_empty() {
        return Err(Error::invalid("gradient batch must be nonempty"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let n = net.spec().input_dim;
    if inputs.iter().any(|x| x.len() != n) {
        return Err(Error::dim(format!("every input must have length {n}")));
    }
    let mut batch = Matrix::zeros(inputs.len(), n);
    for (i, x) in inputs.iter().enumerate() {
        batch.row_mut(i).copy_from_slice(x);
    }
    gradients_from_batch(net, &batch, labels)
}

/// Batched backpropagation. Rows of `batch` are samples.
fn gradients_from_batch(net: &MlpNetwork, batch: &Matrix, labels: &[usize]) -> Result<Gradients> {
    let depth = net.depth();
    let batch_len = batch.rows();
    let m = net.spec().output_dim;
    if labels.iter().any(|&l| l >= m) {
        return Err(Error::invalid(format!("label out of range for {m} outputs")));
    }
    let kind = net.spec().activation;

    // Forward, keeping pre- and post-activations per layer (rows = samples).
    let mut pres: Vec<Matrix> = Vec::with_capacity(depth);
    let mut posts: Vec<Matrix> = Vec::with_capacity(depth);
    for (l, layer) in net.layers().iter().enumerate() {
        let upstream = if l == 0 { batch } else { &posts[l - 1] };
        let mut pre = upstream.matmul_nt(&layer.weight)?;
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let post = if l + 1 == depth {
            pre.clone()
        } else {
            let mut p = pre.clone();
            for x in p.data_mut() {
                *x = kind.apply(*x);
            }
            p
        };
        pres.push(pre);
        posts.push(post);
    }

    // Output delta: (softmax - onehot) / batch, and the mean loss.
    let logits = posts.last().expect("depth >= 1");
    let mut delta = Matrix::zeros(batch_len, m);
    let mut loss_sum = 0.0;
    let inv_batch = 1.0 / batch_len as f64;
    for i in 0..batch_len {
        let row = logits.row(i);
        loss_sum += cross_entropy(row, labels[i]);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let out = delta.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            out[j] = ((v - max).exp() / exp_sum) * inv_batch;
        }
        out[labels[i]] -= inv_batch;
    }

    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    for l in (0..depth).rev() {
        let upstream = if l == 0 { batch } else { &posts[l - 1] };
        weights.push(delta.matmul_tn(upstream)?);
        let mut bias = vec![0.0; delta.cols()];
        for i in 0..delta.rows() {
            for (b, &d) in bias.iter_mut().zip(delta.row(i)) {
                *b += d;
            }
        }
        biases.push(bias);
        if l > 0 {
            let mut back = delta.matmul(&net.layers()[l].weight)?;
            for i in 0..back.rows() {
                let derivs = activation_derivative(kind, pres[l - 1].row(i));
                for (v, d) in back.row_mut(i).iter_mut().zip(&derivs) {
                    *v *= d;
                }
            }
            delta = back;
        }
    }
    weights.reverse();
    biases.reverse();

    Ok(Gradients {
        weights,
        biases,
        mean_loss: loss_sum * inv_batch,
    })
}

/// One SGD update: `W <- W - lr (grad + decay W)`; biases update without
/// decay.
pub fn sgd_step(
    net: &mut MlpNetwork,
    grads: &Gradients,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.weights.len() != net.depth() || grads.biases.len() != net.depth() {
        return Err(Error::dim("gradient layer count mismatch".to_string()));
    }
    for (layer, (gw, gb)) in net
        .layers_mut()
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
    {
        if gw.rows() != layer.weight.rows()
            || gw.cols() != layer.weight.cols()
            || gb.len() != layer.bias.len()
        {
            return Err(Error::dim("gradient shape mismatch".to_string()));
        }
        for (w, &g) in layer.weight.data_mut().iter_mut().zip(gw.data()) {
            *w -= learning_rate * (g + weight_decay * *w);
        }
        for (b, &g) in layer.bias.iter_mut().zip(gb) {
            *b -= learning_rate * g;
        }
    }
    Ok(())
}

/// Mean training loss of the current parameters over a dataset, batched.
fn full_loss(net: &MlpNetwork, dataset: &Dataset, batch_size: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut seen = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let batch = gather(dataset, chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.labels[i]).collect();
        let mut logits = batch.clone();
        let mut current = batch;
        for (l, layer) in net.layers().iter().enumerate() {
            let mut pre = current.matmul_nt(&layer.weight)?;
            for i in 0..pre.rows() {
                for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if l + 1 == net.depth() {
                logits = pre;
                break;
            }
            for x in pre.data_mut() {
                *x = net.spec().activation.apply(*x);
            }
            current = pre;
        }
        for (i, &label) in labels.iter().enumerate() {
            sum += cross_entropy(logits.row(i), label);
        }
        seen += chunk.len();
    }
    Ok(sum / seen as f64)
}

fn gather(dataset: &Dataset, indices: &[usize]) -> Matrix {
    let mut batch = Matrix::zeros(indices.len(), dataset.input_dim);
    for (row, &i) in indices.iter().enumerate() {
        batch.row_mut(row).copy_from_slice(&dataset.inputs[i]);
    }
    batch
}

/// Train a freshly initialized network with mini-batch SGD, recording
/// metrics before training (epoch 0) and after every epoch. Deterministic
/// for a fixed config: initialization, shuffling, and metric probes all run
/// on streams derived from `config.seed`. Stops early once the smoothed
/// loss plateaus; aborts with a diagnostic if the loss leaves the reals.
pub fn train(
    spec: &NetworkSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpNetwork, Vec<EpochMetrics>)> {
    config.validate()?;
    spec.validate()?;
    if train_set.input_dim != spec.input_dim || test_set.input_dim != spec.input_dim {
        return Err(Error::dim(format!(
            "dataset dimension {} does not match network input {}",
            train_set.input_dim, spec.input_dim
        )));
    }
    if train_set.num_classes > spec.output_dim || test_set.num_classes > spec.output_dim {
        return Err(Error::invalid(format!(
            "dataset has more classes than the network's {} outputs",
            spec.output_dim
        )));
    }

    let mut init_rng = Pcg32::derived(config.seed, 0);
    let mut shuffle_rng = Pcg32::derived(config.seed, 1);
    let mut net = network::xavier_init(spec, &mut init_rng)?;

    let mut metrics = Vec::with_capacity(config.epochs + 1);
    let initial_loss = full_loss(&net, train_set, config.batch_size.max(64))?;
    metrics.push(evaluate_epoch(&net, test_set, config, 0, initial_loss)?);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch_indices in data::batches(train_set, config.batch_size, &mut shuffle_rng)? {
            let batch = gather(train_set, &batch_indices);
            let labels: Vec<usize> =
                batch_indices.iter().map(|&i| train_set.labels[i]).collect();
            let grads = gradients_from_batch(&net, &batch, &labels)?;
            if !grads.mean_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: grads.mean_loss,
                });
            }
            loss_sum += grads.mean_loss * batch_indices.len() as f64;
            seen += batch_indices.len();
            sgd_step(&mut net, &grads, config.learning_rate, config.weight_decay)?;
        }
        let epoch_loss = loss_sum / seen as f64;
        epoch_losses.push(epoch_loss);
        metrics.push(evaluate_epoch(&net, test_set, config, epoch, epoch_loss)?);

        if plateaued(&epoch_losses) {
            break;
        }
    }
    Ok((net, metrics))
}

/// Trailing-window plateau test on the raw epoch losses.
fn plateaued(losses: &[f64]) -> bool {
    let w = EARLY_STOP_WINDOW;
    if losses.len() < 2 * w {
        return false;
    }
    let recent: f64 = losses[losses.len() - w..].iter().sum::<f64>() / w as f64;
    let prior: f64 =
        losses[losses.len() - 2 * w..losses.len() - w].iter().sum::<f64>() / w as f64;
    prior - recent < EARLY_STOP_MIN_DELTA
}

fn evaluate_epoch(
    net: &MlpNetwork,
    test_set: &Dataset,
    config: &TrainConfig,
    epoch: usize,
    train_loss: f64,
) -> Result<EpochMetrics> {
    let test_accuracy = robustness::accuracy(net, test_set)?;
    let certified = robustness::certified_accuracy(
        net,
        test_set,
        &config.eval_epsilon,
        CertificationMethod::Ibp,
    )?;
    let mut probe_rng = Pcg32::derived(config.seed, 1000 + epoch as u64);
    let empirical = lipschitz::empirical_lipschitz(
        net,
        InputSampler::StandardNormal,
        EPOCH_METRIC_SAMPLES,
        &mut probe_rng,
    )?;
    let spectral = lipschitz::spectral_product_bound(net)?;
    let analytical = if net.spec().depth >= 2 {
        let alpha_tilde = network::weight_std_multiplier(net)?;
        let q = net.spec().activation.q_squared().sqrt();
        lipschitz::analytical_lipschitz(net.spec(), alpha_tilde, q)?.value
    } else {
        f64::NAN
    };
    Ok(EpochMetrics {
        epoch,
        train_loss,
        test_accuracy,
        certified_accuracy: certified,
        lipschitz_empirical: empirical.value,
        lipschitz_spectral: spectral.value,
        lipschitz_analytical: analytical,
    })
}
