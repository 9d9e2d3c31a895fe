use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::dataset::{Dataset, SplitIndices};
use crate::dynamics::{learning_times, DynamicsLog, LearningTimes};
use crate::earlycut::{
    base_select, candidate_subset, compute_metrics, identify_mees, pick_early_stop_epoch,
    retention_per_round, CutConfig, MeeSelection, PercentilePopulation, SelectionMetrics,
};
use crate::error::{Error, Result};
use crate::nettrain::{evaluate_accuracy, init_model, train, Arch, TrainConfig, TrainOutcome};
use crate::seed;

/// Index sets produced by one selection round. All entries are dataset ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionState {
    pub round: usize,
    /// Confident subset, in learning-time order.
    pub d_s: Vec<usize>,
    /// Candidate pool, in learning-time order.
    pub d_s_prime: Vec<usize>,
    pub suspicious: Vec<usize>,
    pub mees: Vec<usize>,
    /// `d_s` minus `mees`, ascending.
    pub refined: Vec<usize>,
}

/// Per-round numbers for the pipeline report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub input_size: usize,
    pub input_noise_rate: f64,
    pub retain_fraction: f64,
    pub confident_size: usize,
    pub confident_noise_rate: f64,
    pub candidate_size: usize,
    pub candidate_noise_rate: f64,
    pub epoch_t: usize,
    pub mee_count: usize,
    pub mee_mislabeled: usize,
    /// Mislabeled fraction of the removed set; absent when nothing was removed.
    pub mee_purity: Option<f64>,
    pub refined_size: usize,
    pub refined_noise_rate: f64,
    pub loss_cutoff: Option<f64>,
    pub conf_cutoff: Option<f64>,
    pub grad_cutoff: Option<f64>,
}

/// Everything a round produced, including the trajectory it trained.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub state: SelectionState,
    pub report: RoundReport,
    /// Training ids of this round, aligned with `log` and `learning_times`.
    pub train_ids: Vec<usize>,
    pub log: DynamicsLog,
    pub learning_times: LearningTimes,
    pub metrics: SelectionMetrics,
    pub selection: MeeSelection,
    pub training: TrainOutcome,
}

impl RoundOutcome {
    pub fn write_candidate_csv<W: Write>(&self, ds: &Dataset, out: W) -> Result<()> {
        write_candidate_csv(
            ds,
            &self.train_ids,
            &self.learning_times,
            &self.metrics,
            &self.state.mees,
            out,
        )
    }
}

/// One row per candidate:
/// `sample_id,lt,loss,confidence,grad_norm,is_mee,is_truly_mislabeled`.
///
/// `train_ids` (ascending) align with the entries of `lt`.
pub fn write_candidate_csv<W: Write>(
    ds: &Dataset,
    train_ids: &[usize],
    lt: &LearningTimes,
    metrics: &SelectionMetrics,
    mees: &[usize],
    out: W,
) -> Result<()> {
    let lt_of = |id: usize| {
        train_ids
            .binary_search(&id)
            .map(|pos| lt.lt[pos])
            .map_err(|_| Error::InvalidArgument(format!("sample {id} is not a training id")))
    };
    let mees: BTreeSet<usize> = mees.iter().copied().collect();
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record([
        "sample_id",
        "lt",
        "loss",
        "confidence",
        "grad_norm",
        "is_mee",
        "is_truly_mislabeled",
    ])
    .map_err(io)?;
    for (i, &id) in metrics.ids.iter().enumerate() {
        w.write_record([
            id.to_string(),
            lt_of(id)?.to_string(),
            metrics.loss[i].to_string(),
            metrics.confidence[i].to_string(),
            metrics.grad_norm[i].to_string(),
            u8::from(mees.contains(&id)).to_string(),
            u8::from(ds.is_mislabeled(id)).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<candidate csv>", e))
}

/// Seed of the training run in `round` (1-based; `i_rate + 1` is the final
/// training phase).
pub fn round_seed(root: u64, round: usize) -> u64 {
    seed::derive_indexed(root, seed::ROUND, round as u64)
}

/// Train from scratch on `ids` and record the trajectory.
pub fn train_fresh(
    ds: &Dataset,
    ids: &[usize],
    validation: &[usize],
    arch: &Arch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(TrainOutcome, DynamicsLog)> {
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let model = init_model(arch, seed)?;
    let split = SplitIndices {
        train: ids.to_vec(),
        validation: validation.to_vec(),
    };
    let mut log = DynamicsLog::new(ids.len(), ds.num_classes());
    let outcome = train(model, ds, &split, &cfg, &mut log)?;
    Ok((outcome, log))
}

/// Selection outputs shared by every entry point.
pub type Selection = (
    SelectionState,
    RoundReport,
    LearningTimes,
    SelectionMetrics,
    MeeSelection,
);

/// Selection given an already-trained trajectory on `train_ids`.
///
/// `train_ids` must be ascending; `log` and `checkpoints` must come from
/// training on exactly those ids.
pub fn select_from_trajectory(
    ds: &Dataset,
    train_ids: &[usize],
    log: &DynamicsLog,
    training: &TrainOutcome,
    cut: &CutConfig,
    round: usize,
) -> Result<Selection> {
    select_with_metrics(ds, train_ids, log, cut, round, |ids, epoch_t| {
        compute_metrics(training.checkpoints.at(epoch_t)?, ds, ids, epoch_t)
    })
}

/// Selection where the per-sample metrics at the early-stopping epoch come
/// from `metrics_for(ids, epoch_t)`, e.g. a table computed by another tool.
pub fn select_with_metrics<F>(
    ds: &Dataset,
    train_ids: &[usize],
    log: &DynamicsLog,
    cut: &CutConfig,
    round: usize,
    metrics_for: F,
) -> Result<Selection>
where
    F: FnOnce(&[usize], usize) -> Result<SelectionMetrics>,
{
    cut.validate()?;
    if log.num_samples() != train_ids.len() {
        return Err(Error::InvalidInput(format!(
            "dynamics log covers {} samples but {} training ids were given",
            log.num_samples(),
            train_ids.len()
        )));
    }
    let labels = ds.gather_noisy(train_ids);
    let lt = learning_times(log, &labels, cut.window)?;
    let retain = retention_per_round(cut.target_retain()?, cut.i_rate)?;
    let d_s: Vec<usize> = base_select(&lt, retain)?
        .into_iter()
        .map(|p| train_ids[p])
        .collect();
    let d_s_prime = candidate_subset(&d_s, cut.gamma)?;
    let epoch_t = pick_early_stop_epoch(log.val_curve())?;

    let (metrics, selection) = match cut.population {
        PercentilePopulation::Candidates => {
            let metrics = metrics_for(&d_s_prime, epoch_t)?;
            let selection = identify_mees(&metrics, cut);
            (metrics, selection)
        }
        PercentilePopulation::ConfidentSubset => {
            let all = metrics_for(&d_s, epoch_t)?;
            let mut selection = identify_mees(&all, cut);
            let pool: BTreeSet<usize> = d_s_prime.iter().copied().collect();
            selection.mees.retain(|id| pool.contains(id));
            selection.suspicious.retain(|id| pool.contains(id));
            (all.restrict(&d_s_prime)?, selection)
        }
    };

    let removed: BTreeSet<usize> = selection.mees.iter().copied().collect();
    let mut refined: Vec<usize> = d_s
        .iter()
        .copied()
        .filter(|id| !removed.contains(id))
        .collect();
    refined.sort_unstable();
    let mee_mislabeled = selection
        .mees
        .iter()
        .filter(|&&i| ds.is_mislabeled(i))
        .count();

    let report = RoundReport {
        round,
        input_size: train_ids.len(),
        input_noise_rate: ds.noise_rate_of(train_ids),
        retain_fraction: retain,
        confident_size: d_s.len(),
        confident_noise_rate: ds.noise_rate_of(&d_s),
        candidate_size: d_s_prime.len(),
        candidate_noise_rate: ds.noise_rate_of(&d_s_prime),
        epoch_t,
        mee_count: selection.mees.len(),
        mee_mislabeled,
        mee_purity: (!selection.mees.is_empty())
            .then(|| mee_mislabeled as f64 / selection.mees.len() as f64),
        refined_size: refined.len(),
        refined_noise_rate: ds.noise_rate_of(&refined),
        loss_cutoff: selection.loss_cutoff,
        conf_cutoff: selection.conf_cutoff,
        grad_cutoff: selection.grad_cutoff,
    };
    let state = SelectionState {
        round,
        d_s,
        d_s_prime,
        suspicious: selection.suspicious.clone(),
        mees: selection.mees.clone(),
        refined,
    };
    Ok((state, report, lt, metrics, selection))
}

/// One round: train from scratch on `split.train`, select the confident
/// subset by learning time, then cut the flagged easy examples from it.
pub fn run_round(
    ds: &Dataset,
    split: &SplitIndices,
    arch: &Arch,
    train_cfg: &TrainConfig,
    cut_cfg: &CutConfig,
    round: usize,
) -> Result<RoundOutcome> {
    let mut train_ids = split.train.clone();
    train_ids.sort_unstable();
    train_ids.dedup();
    let (training, log) = train_fresh(
        ds,
        &train_ids,
        &split.validation,
        arch,
        train_cfg,
        round_seed(train_cfg.seed, round),
    )?;
    let (state, report, learning_times, metrics, selection) =
        select_from_trajectory(ds, &train_ids, &log, &training, cut_cfg, round)?;
    Ok(RoundOutcome {
        state,
        report,
        train_ids,
        log,
        learning_times,
        metrics,
        selection,
        training,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub rounds: Vec<RoundReport>,
    pub train_size: usize,
    pub final_subset_size: usize,
    pub final_noise_rate: f64,
    /// Clean-label accuracy of the final model on the held-out test set.
    pub final_test_accuracy: Option<f64>,
    /// Same pipeline with every cut fraction at zero, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<PipelineReport>>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub final_subset: Vec<usize>,
    pub final_model: crate::nettrain::Model,
    pub rounds: Vec<RoundOutcome>,
    pub report: PipelineReport,
}

/// Iterative selection for `cut_cfg.i_rate` rounds followed by a final model
/// trained from scratch on the last refined subset.
pub fn run_pipeline(
    ds: &Dataset,
    split: &SplitIndices,
    test: Option<&Dataset>,
    arch: &Arch,
    train_cfg: &TrainConfig,
    cut_cfg: &CutConfig,
) -> Result<PipelineOutcome> {
    cut_cfg.validate()?;
    let mut subset = split.train.clone();
    subset.sort_unstable();
    let mut rounds = Vec::with_capacity(cut_cfg.i_rate);
    for round in 1..=cut_cfg.i_rate {
        if subset.len() < ds.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "pipeline aborted before round {round}: subset of {} samples is below K = {}",
                subset.len(),
                ds.num_classes()
            )));
        }
        let round_split = SplitIndices {
            train: subset,
            validation: split.validation.clone(),
        };
        let outcome = run_round(ds, &round_split, arch, train_cfg, cut_cfg, round)?;
        log::info!(
            "round {round}: |D| = {} -> |D^s| = {} ({:.4} noisy), removed {} -> {} ({:.4} noisy)",
            outcome.report.input_size,
            outcome.report.confident_size,
            outcome.report.confident_noise_rate,
            outcome.report.mee_count,
            outcome.report.refined_size,
            outcome.report.refined_noise_rate
        );
        subset = outcome.state.refined.clone();
        rounds.push(outcome);
    }
    if subset.len() < ds.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "pipeline aborted before final training: subset of {} samples is below K = {}",
            subset.len(),
            ds.num_classes()
        )));
    }

    let (final_training, _) = train_fresh(
        ds,
        &subset,
        &split.validation,
        arch,
        train_cfg,
        round_seed(train_cfg.seed, cut_cfg.i_rate + 1),
    )?;
    let final_model = final_training.model;
    let final_test_accuracy = match test {
        Some(t) => Some(evaluate_accuracy(
            &final_model,
            t.features(),
            t.true_labels(),
        )?),
        None => None,
    };

    let base = if cut_cfg.compare_base {
        let base = run_pipeline(ds, split, test, arch, train_cfg, &cut_cfg.without_cutting())?;
        Some(Box::new(base.report))
    } else {
        None
    };

    let report = PipelineReport {
        rounds: rounds.iter().map(|r| r.report.clone()).collect(),
        train_size: split.train.len(),
        final_subset_size: subset.len(),
        final_noise_rate: ds.noise_rate_of(&subset),
        final_test_accuracy,
        base,
    };
    Ok(PipelineOutcome {
        final_subset: subset,
        final_model,
        rounds,
        report,
    })
}
