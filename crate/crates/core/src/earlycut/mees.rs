use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::earlycut::{CutConfig, SelectionMetrics};

/// Outcome of the three-way rank intersection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeeSelection {
    /// Sample ids flagged as mislabeled easy examples, ascending.
    pub mees: Vec<usize>,
    /// High loss and high confidence (before the gradient filter), ascending.
    pub suspicious: Vec<usize>,
    pub loss_rank_size: usize,
    pub conf_rank_size: usize,
    pub grad_rank_size: usize,
    /// Smallest loss inside the loss rank set.
    pub loss_cutoff: Option<f64>,
    /// Smallest confidence inside the confidence rank set.
    pub conf_cutoff: Option<f64>,
    /// Largest gradient norm inside the gradient rank set.
    pub grad_cutoff: Option<f64>,
}

/// `round(frac * m)`.
pub fn rank_count(frac: f64, m: usize) -> usize {
    ((frac * m as f64).round() as usize).min(m)
}

/// Table positions of the `count` extreme values. Equal values are resolved
/// by ascending sample id, so the result does not depend on row order.
fn rank_set(values: &[f64], ids: &[usize], count: usize, largest: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = if largest {
            values[b].total_cmp(&values[a])
        } else {
            values[a].total_cmp(&values[b])
        };
        match by_value {
            Ordering::Equal => ids[a].cmp(&ids[b]),
            other => other,
        }
    });
    order.truncate(count);
    order
}

/// Samples that are simultaneously among the highest losses, the highest
/// confidences and the lowest input-gradient norms of the table.
pub fn identify_mees(m: &SelectionMetrics, cfg: &CutConfig) -> MeeSelection {
    let n = m.len();
    let loss_k = rank_count(cfg.loss_top_frac, n);
    let conf_k = rank_count(cfg.conf_top_frac, n);
    let grad_k = rank_count(cfg.grad_bottom_frac, n);
    let loss_set = rank_set(&m.loss, &m.ids, loss_k, true);
    let conf_set = rank_set(&m.confidence, &m.ids, conf_k, true);
    let grad_set = rank_set(&m.grad_norm, &m.ids, grad_k, false);

    let in_conf: BTreeSet<usize> = conf_set.iter().copied().collect();
    let in_grad: BTreeSet<usize> = grad_set.iter().copied().collect();
    let mut suspicious: Vec<usize> = loss_set
        .iter()
        .copied()
        .filter(|p| in_conf.contains(p))
        .collect();
    let mut mees: Vec<usize> = suspicious
        .iter()
        .copied()
        .filter(|p| in_grad.contains(p))
        .collect();
    suspicious.iter_mut().for_each(|p| *p = m.ids[*p]);
    mees.iter_mut().for_each(|p| *p = m.ids[*p]);
    suspicious.sort_unstable();
    mees.sort_unstable();

    MeeSelection {
        mees,
        suspicious,
        loss_rank_size: loss_k,
        conf_rank_size: conf_k,
        grad_rank_size: grad_k,
        loss_cutoff: loss_set.last().map(|&p| m.loss[p]),
        conf_cutoff: conf_set.last().map(|&p| m.confidence[p]),
        grad_cutoff: grad_set.last().map(|&p| m.grad_norm[p]),
    }
}
