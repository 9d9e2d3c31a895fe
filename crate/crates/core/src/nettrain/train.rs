use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitIndices};
use crate::dynamics::DynamicsLog;
use crate::error::{Error, Result};
use crate::nettrain::model::{cross_entropy, predict_labels, row_f64, softmax, Model};
use crate::nettrain::schedule::cosine_lr;
use crate::seed;

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Keep a parameter snapshot every `checkpoint_stride` epochs (and always
    /// after the last one).
    pub checkpoint_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            lr_init: 0.1,
            lr_min: 1e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            checkpoint_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        // lr_init = lr_min = 0 is allowed: it freezes the parameters.
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_init && self.lr_init.is_finite()) {
            return bad(format!(
                "learning rates need 0 <= lr_min ({}) <= lr_init ({})",
                self.lr_min, self.lr_init
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if self.checkpoint_stride == 0 {
            return bad("checkpoint_stride must be at least 1".into());
        }
        Ok(())
    }
}

/// Parameter snapshots keyed by the (1-indexed) epoch they were taken after.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoints {
    snapshots: BTreeMap<usize, Model>,
}

impl Checkpoints {
    pub fn insert(&mut self, epoch: usize, model: Model) {
        self.snapshots.insert(epoch, model);
    }

    /// The model as it was after `epoch`.
    pub fn at(&self, epoch: usize) -> Result<&Model> {
        self.snapshots
            .get(&epoch)
            .ok_or(Error::CheckpointNotFound(epoch))
    }

    pub fn epochs(&self) -> impl Iterator<Item = usize> + '_ {
        self.snapshots.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Model)> {
        self.snapshots.iter().map(|(&e, m)| (e, m))
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub checkpoints: Checkpoints,
}

/// One SGD-with-momentum update with weight decay folded into the gradient:
/// `v <- mu * v + (g + lambda * theta)`, `theta <- theta - lr * v`.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + (g + weight_decay * *p);
        *p -= lr * *v;
    }
}

/// Train on `split.train` with the observed labels for `cfg.epochs` epochs.
///
/// After every epoch the predictions for every training sample (in
/// `split.train` order) and the noisy-label validation accuracy are appended
/// to `recorder`.
pub fn train(
    model: Model,
    ds: &Dataset,
    split: &SplitIndices,
    cfg: &TrainConfig,
    recorder: &mut DynamicsLog,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.arch().input_dim != ds.dim() || model.arch().num_classes != ds.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "model {:?} does not fit dataset with d = {}, K = {}",
            model.arch(),
            ds.dim(),
            ds.num_classes()
        )));
    }
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if recorder.num_samples() != split.train.len() || recorder.num_classes() != ds.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "recorder sized for n = {}, K = {} but training on n = {}, K = {}",
            recorder.num_samples(),
            recorder.num_classes(),
            split.train.len(),
            ds.num_classes()
        )));
    }

    let d = ds.dim();
    let train_x = ds.gather_features(&split.train);
    let train_y = ds.gather_noisy(&split.train);
    let val_x = ds.gather_features(&split.validation);
    let val_y = ds.gather_noisy(&split.validation);

    let mut model = model;
    let start_stamp = model.epoch_stamp;
    let n_params = model.params().len();
    let mut velocity = vec![0.0; n_params];
    let mut grads = vec![0.0; n_params];
    let mut checkpoints = Checkpoints::default();
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr(epoch - 1, cfg)?;
        order.shuffle(&mut seed::rng(seed::derive_indexed(
            cfg.seed,
            seed::SHUFFLE,
            epoch as u64,
        )));
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            // Fixed reduction order: batch positions ascending.
            for &j in batch {
                let trace = model.forward_trace(&row_f64(&train_x, d, j));
                let logits = trace.last().expect("logits");
                let label = usize::from(train_y[j]);
                batch_loss += cross_entropy(logits, label);
                let mut delta = softmax(logits);
                delta[label] -= 1.0;
                model.backward(&trace, delta, Some(&mut grads));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch loss {batch_loss}"),
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            sgd_step(
                model.params_mut(),
                &grads,
                &mut velocity,
                lr,
                cfg.momentum,
                cfg.weight_decay,
            );
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                message: "non-finite parameters".into(),
            });
        }
        model.epoch_stamp = start_stamp + epoch;

        let preds = predict_labels(&model, &train_x)?;
        let val_acc = if val_y.is_empty() {
            0.0
        } else {
            let val_pred = predict_labels(&model, &val_x)?;
            val_pred.iter().zip(&val_y).filter(|(p, y)| p == y).count() as f64 / val_y.len() as f64
        };
        recorder.push_epoch(preds, val_acc)?;

        if epoch % cfg.checkpoint_stride == 0 || epoch == cfg.epochs {
            checkpoints.insert(epoch, model.clone());
        }
    }
    Ok(TrainOutcome { model, checkpoints })
}
