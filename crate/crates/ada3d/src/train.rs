//! Deterministic gradient training of the fusion network.
//!
//! One optimization step per mini-batch: each sample contributes the
//! gradient of `mean |Õ − O| + λ·ERGAS(Õ, O)`, gradients are averaged over
//! the batch, and Adam applies the update. Samples are visited in dataset
//! order, so a fixed seed makes the whole run — initialization included —
//! bit-reproducible.

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::metrics::ErgasConvention;
use crate::net::{loss_graph, FusionNet, FusionSample};
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Training-loop hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// 1-based epochs at whose start the learning rate is halved
    /// (cumulative: an epoch past two halving points runs at lr/4).
    pub halving_epochs: Vec<usize>,
    /// Weight of the relative-global-error term in the objective.
    pub lambda_ergas: f64,
    pub convention: ErgasConvention,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            initial_lr: 1e-3,
            halving_epochs: vec![],
            lambda_ergas: 1e-4,
            convention: ErgasConvention::SquaredMean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs and batch size must be positive, got {} / {}",
                self.epochs, self.batch_size
            )));
        }
        if !(self.initial_lr >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be nonnegative, got {}",
                self.initial_lr
            )));
        }
        if self.lambda_ergas < 0.0 {
            return Err(Error::Config(format!(
                "λ must be nonnegative, got {}",
                self.lambda_ergas
            )));
        }
        Ok(())
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = self.halving_epochs.iter().filter(|&&e| e <= epoch).count();
        self.initial_lr * 0.5f64.powi(halvings as i32)
    }
}

/// Adam optimizer state over a flat list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Standard moment coefficients (0.9, 0.999) and epsilon 1e-8.
    pub fn new(params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let v = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    /// Applies one update with the given gradients (one per parameter, in
    /// registry order).
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Shape {
                op: "adam",
                detail: format!("{} gradients for {} parameters", grads.len(), self.m.len()),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (_, t)) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let x = t.data_mut();
            for j in 0..x.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                x[j] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Per-epoch trace of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean sample loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Learning rate in effect per epoch.
    pub lr_trace: Vec<f64>,
    /// Total number of guarded relative-error bands seen across the run.
    pub guarded_bands: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().expect("at least one epoch")
    }
}

/// Trains `net` in place. Every sample must carry a ground-truth volume.
pub fn train(
    net: &mut FusionNet,
    dataset: &[FusionSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    for (i, s) in dataset.iter().enumerate() {
        s.validate(net.config().ratio)?;
        if s.gt.is_none() {
            return Err(Error::Config(format!(
                "training sample {i} has no ground truth"
            )));
        }
    }
    let ratio = net.config().ratio as u32;
    let mut adam = Adam::new(net.params());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut lr_trace = Vec::with_capacity(cfg.epochs);
    let mut guarded_bands = 0usize;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0f64;
        for batch in dataset.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = net
                .params()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect();
            let mut batch_loss = 0.0f64;
            for sample in batch {
                let mut g = Graph::new();
                let bp = net.bind_params(&mut g, true);
                let nodes = net.forward_graph(&mut g, sample, &bp)?;
                let gt_t = sample.gt.as_ref().expect("checked above");
                let gt = g.constant(gt_t.clone());
                let loss = loss_graph(
                    &mut g,
                    nodes.output,
                    gt,
                    ratio,
                    cfg.lambda_ergas,
                    cfg.convention,
                )?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::Divergence { epoch, loss: value });
                }
                batch_loss += value;
                guarded_bands += crate::metrics::ergas_parts(
                    g.value(nodes.output),
                    gt_t,
                    ratio,
                    cfg.convention,
                )?
                .guarded;
                let mut gradients = g.backward(loss)?;
                for (i, id) in bp.node_ids().iter().enumerate() {
                    if let Some(grad) = gradients.take(*id) {
                        grads[i] = grads[i].add(&grad)?;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for grad in &mut grads {
                *grad = grad.scale(scale);
            }
            adam.step(net.params_mut(), &grads, lr)?;
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / dataset.len() as f64);
        lr_trace.push(lr);
    }
    Ok(TrainReport {
        epoch_losses,
        lr_trace,
        guarded_bands,
    })
}
