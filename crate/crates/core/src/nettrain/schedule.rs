use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nettrain::TrainConfig;

/// Cosine annealing without restarts:
/// `lr(t) = lr_min + (lr_init - lr_min) * (1 + cos(pi * t / T)) / 2`.
pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch > cfg.epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} past the schedule end {}",
            cfg.epochs
        )));
    }
    let progress = epoch as f64 / cfg.epochs as f64;
    Ok(cfg.lr_min + (cfg.lr_init - cfg.lr_min) * (1.0 + (PI * progress).cos()) / 2.0)
}
