use crate::dynamics::{rank_by_learning_time, LearningTimes};
use crate::error::{Error, Result};

/// `ceil(x)` that ignores float dust just above an integer, so that e.g.
/// `0.6 * 3600` keeps 2160 samples rather than 2161.
pub(crate) fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Per-round retention that compounds to `target_retain` after `rounds`
/// rounds: `target_retain^(1 / rounds)`.
pub fn retention_per_round(target_retain: f64, rounds: usize) -> Result<f64> {
    if !(target_retain > 0.0 && target_retain <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target retention {target_retain} outside (0, 1]"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidConfig(
            "at least one round is required".into(),
        ));
    }
    Ok(target_retain.powf(1.0 / rounds as f64))
}

/// Positions of the `ceil(retain_fraction * n)` earliest-learned samples, in
/// learning-time order.
pub fn base_select(lt: &LearningTimes, retain_fraction: f64) -> Result<Vec<usize>> {
    if lt.is_empty() {
        return Err(Error::InvalidArgument(
            "no learning times to select from".into(),
        ));
    }
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "retain fraction {retain_fraction} outside (0, 1]"
        )));
    }
    let keep = ceil_count(retain_fraction * lt.len() as f64).min(lt.len());
    let mut order = rank_by_learning_time(lt);
    order.truncate(keep);
    Ok(order)
}

/// The first `ceil(|D^s| / gamma)` entries of a learning-time ordered subset.
pub fn candidate_subset<T: Clone>(ordered_subset: &[T], gamma: f64) -> Result<Vec<T>> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "early cutting rate {gamma} must be >= 1"
        )));
    }
    let keep = ceil_count(ordered_subset.len() as f64 / gamma).min(ordered_subset.len());
    Ok(ordered_subset[..keep].to_vec())
}

/// Epoch (1-indexed) of peak validation accuracy; the earliest wins ties.
pub fn pick_early_stop_epoch(val_curve: &[f64]) -> Result<usize> {
    if val_curve.is_empty() {
        return Err(Error::InvalidArgument("empty validation curve".into()));
    }
    let mut best = 0;
    for (i, &v) in val_curve.iter().enumerate() {
        if v > val_curve[best] {
            best = i;
        }
    }
    Ok(best + 1)
}
