//! Learning-order experiments: does the stage at which a mislabeled sample
//! is learned predict how much it hurts, and how fast it is re-learned?

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, SplitIndices};
use crate::dynamics::{learning_times, rank_by_learning_time, DynamicsLog};
use crate::earlycut::train_fresh;
use crate::error::{Error, Result};
use crate::nettrain::{evaluate_accuracy, train, Arch, TrainConfig};
use crate::seed;

/// Split an ordered list into `groups` consecutive chunks whose sizes differ
/// by at most one (earlier chunks take the remainder).
pub fn partition_groups<T: Clone>(ordered: &[T], groups: usize) -> Vec<Vec<T>> {
    let base = ordered.len() / groups;
    let extra = ordered.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let size = base + usize::from(g < extra);
        out.push(ordered[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Mislabeled training samples split into `groups` by the order in which a
/// model trained on the full noisy set learned them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningOrderGroups {
    /// Correctly labeled training ids, ascending.
    pub clean: Vec<usize>,
    /// Mislabeled ids per group, earliest-learned group first.
    pub groups: Vec<Vec<usize>>,
    /// `(min, max)` learning time within each group.
    pub lt_ranges: Vec<(usize, usize)>,
}

pub fn learning_order_groups(
    ds: &Dataset,
    split: &SplitIndices,
    arch: &Arch,
    cfg: &TrainConfig,
    groups: usize,
    window: usize,
) -> Result<LearningOrderGroups> {
    if groups == 0 {
        return Err(Error::InvalidConfig("need at least one group".into()));
    }
    let mut ids = split.train.clone();
    ids.sort_unstable();
    let mislabeled_count = ids.iter().filter(|&&i| ds.is_mislabeled(i)).count();
    if mislabeled_count < groups {
        return Err(Error::InvalidConfig(format!(
            "{mislabeled_count} mislabeled samples cannot fill {groups} groups"
        )));
    }
    let (_, log) = train_fresh(
        ds,
        &ids,
        &split.validation,
        arch,
        cfg,
        seed::derive(cfg.seed, "order-initial"),
    )?;
    let lt = learning_times(&log, &ds.gather_noisy(&ids), window)?;
    let ordered: Vec<usize> = rank_by_learning_time(&lt)
        .into_iter()
        .filter(|&p| ds.is_mislabeled(ids[p]))
        .collect();
    let grouped = partition_groups(&ordered, groups);
    let lt_ranges = grouped
        .iter()
        .map(|g| (lt.lt[g[0]], lt.lt[*g.last().expect("non-empty group")]))
        .collect();
    Ok(LearningOrderGroups {
        clean: ids
            .iter()
            .copied()
            .filter(|&i| !ds.is_mislabeled(i))
            .collect(),
        groups: grouped
            .into_iter()
            .map(|g| g.into_iter().map(|p| ids[p]).collect())
            .collect(),
        lt_ranges,
    })
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub group: usize,
    pub size: usize,
    pub lt_range: (usize, usize),
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over repeats (zero for a single run).
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderHarmResult {
    pub clean_size: usize,
    pub groups: Vec<GroupAccuracy>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train on the clean samples plus one learning-order group at a time and
/// measure clean test accuracy. Repeat `r` uses the same seed for every group.
pub fn order_harm_experiment(
    ds: &Dataset,
    split: &SplitIndices,
    test: &Dataset,
    arch: &Arch,
    cfg: &TrainConfig,
    groups: usize,
    repeats: usize,
    window: usize,
) -> Result<OrderHarmResult> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("need at least one repeat".into()));
    }
    let order = learning_order_groups(ds, split, arch, cfg, groups, window)?;
    let jobs: Vec<(usize, usize)> = (0..groups)
        .flat_map(|g| (0..repeats).map(move |r| (g, r)))
        .collect();
    let accs = jobs
        .par_iter()
        .map(|&(g, r)| {
            let ids = union_sorted(&order.clean, &order.groups[g]);
            let (outcome, _) = train_fresh(
                ds,
                &ids,
                &split.validation,
                arch,
                cfg,
                seed::derive_indexed(cfg.seed, "order-repeat", r as u64),
            )?;
            evaluate_accuracy(&outcome.model, test.features(), test.true_labels())
        })
        .collect::<Result<Vec<f64>>>()?;
    let groups = (0..groups)
        .map(|g| {
            let runs = accs[g * repeats..(g + 1) * repeats].to_vec();
            let (mean, std) = mean_std(&runs);
            GroupAccuracy {
                group: g,
                size: order.groups[g].len(),
                lt_range: order.lt_ranges[g],
                runs,
                mean,
                std,
            }
        })
        .collect();
    Ok(OrderHarmResult {
        clean_size: order.clean.len(),
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedCurve {
    pub group: usize,
    pub size: usize,
    /// Entry `e - 1`: group samples learned (window criterion, observed
    /// labels) by epoch `e` of the continued training.
    pub learned: Vec<usize>,
    /// `(fraction, first epoch reaching it)`; `None` if never reached.
    pub epochs_to: Vec<(f64, Option<usize>)>,
}

impl SpeedCurve {
    pub fn epochs_to_fraction(&self, fraction: f64) -> Option<usize> {
        let need = ((fraction * self.size as f64) - 1e-9).ceil() as usize;
        self.learned.iter().position(|&c| c >= need).map(|e| e + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainedSpeedResult {
    pub clean_size: usize,
    pub groups: Vec<SpeedCurve>,
}

/// Fractions reported by default.
pub const SPEED_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

/// Pretrain on the clean samples, then continue training on clean plus one
/// group at a time and track how quickly the group's noisy labels are fitted.
pub fn pretrained_speed_experiment(
    ds: &Dataset,
    split: &SplitIndices,
    arch: &Arch,
    cfg: &TrainConfig,
    groups: usize,
    window: usize,
) -> Result<PretrainedSpeedResult> {
    let order = learning_order_groups(ds, split, arch, cfg, groups, window)?;
    let (pretrained, _) = train_fresh(
        ds,
        &order.clean,
        &split.validation,
        arch,
        cfg,
        seed::derive(cfg.seed, "pretrain"),
    )?;
    let curves = (0..groups)
        .into_par_iter()
        .map(|g| {
            let ids = union_sorted(&order.clean, &order.groups[g]);
            let run_cfg = TrainConfig {
                seed: seed::derive_indexed(cfg.seed, "continue", g as u64),
                ..cfg.clone()
            };
            let mut log = DynamicsLog::new(ids.len(), ds.num_classes());
            let run_split = SplitIndices {
                train: ids.clone(),
                validation: split.validation.clone(),
            };
            train(pretrained.model.clone(), ds, &run_split, &run_cfg, &mut log)?;
            let lt = learning_times(&log, &ds.gather_noisy(&ids), window)?;
            let group_lt: Vec<usize> = order.groups[g]
                .iter()
                .map(|id| lt.lt[ids.binary_search(id).expect("group id in union")])
                .collect();
            let learned = (1..=cfg.epochs)
                .map(|e| group_lt.iter().filter(|&&t| t <= e).count())
                .collect();
            let mut curve = SpeedCurve {
                group: g,
                size: group_lt.len(),
                learned,
                epochs_to: Vec::new(),
            };
            curve.epochs_to = SPEED_FRACTIONS
                .iter()
                .map(|&f| (f, curve.epochs_to_fraction(f)))
                .collect();
            Ok(curve)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PretrainedSpeedResult {
        clean_size: order.clean.len(),
        groups: curves,
    })
}
