use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    class_centroids, distance_ratios, order_harm_experiment, pretrained_speed_experiment,
    selection_report, RatioGroup, SelectionReport,
};
use crate::dataset::{
    encode_dataset, inject_noise, load_dataset, make_blob_test_set, make_blobs, split_validation,
    Dataset, SplitIndices,
};
use crate::dynamics::{first_correct_histogram, DynamicsLog};
use crate::earlycut::{
    compute_metrics, round_seed, run_pipeline, run_round, select_with_metrics, train_fresh,
    write_candidate_csv, CutConfig, RoundReport, SelectionMetrics, SelectionState,
};
use crate::error::{Error, Result};
use crate::nettrain::{
    encode_checkpoint, evaluate_accuracy, load_checkpoint, penultimate_features,
};

use super::config::{ExperimentConfig, SeedSet};

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.ecck")
}

/// Output directory that records a digest of every file it writes, so the
/// manifest can list them.
struct OutDir {
    root: PathBuf,
    files: BTreeMap<String, (String, usize)>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let digest = format!("{:x}", Sha256::digest(bytes));
        self.files.insert(rel.to_string(), (digest, bytes.len()));
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| Error::InvalidInput(format!("serializing {rel}: {e}")))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn csv<I, R>(&mut self, rel: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidInput(format!("writing {rel}: {e}"));
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("writing {rel}: {e}")))?;
        self.write(rel, &bytes)
    }

    fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> Result<()> {
        #[derive(Serialize)]
        struct Entry<'a> {
            path: &'a str,
            sha256: &'a str,
            bytes: usize,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            toolkit: &'a str,
            version: &'a str,
            command: &'a str,
            config_sha256: String,
            seeds: SeedSet,
            config: &'a ExperimentConfig,
            outputs: Vec<Entry<'a>>,
        }
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            toolkit: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: cfg.hash(),
            seeds: cfg.seeds(),
            config: cfg,
            outputs: files
                .iter()
                .map(|(path, (sha256, bytes))| Entry {
                    path,
                    sha256,
                    bytes: *bytes,
                })
                .collect(),
        };
        self.json("manifest.json", &manifest)
    }
}

/// Dataset, held-out set and split shared by every command.
struct Inputs {
    ds: Dataset,
    test: Option<Dataset>,
    split: SplitIndices,
    cut: CutConfig,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Inputs> {
    let d = &cfg.dataset;
    let seeds = cfg.seeds();
    let (ds, test, default_retain) = match &d.path {
        Some(path) => {
            let ds = load_dataset(path)?;
            let test = d.test_path.as_deref().map(load_dataset).transpose()?;
            if let Some(t) = &test {
                if t.dim() != ds.dim() || t.num_classes() != ds.num_classes() {
                    return Err(Error::InvalidInput(format!(
                        "test set shape {}x{} does not match dataset {}x{}",
                        t.dim(),
                        t.num_classes(),
                        ds.dim(),
                        ds.num_classes()
                    )));
                }
            }
            let retain = 1.0 - ds.noise_rate();
            (ds, test, retain)
        }
        None => {
            let clean = make_blobs(
                d.n,
                d.dim,
                d.num_classes,
                d.separation,
                d.within_std,
                seeds.dataset,
            )?;
            let ds = inject_noise(&clean, &cfg.noise_spec())?;
            let test = (d.test_size > 0)
                .then(|| {
                    make_blob_test_set(
                        d.test_size,
                        d.dim,
                        d.num_classes,
                        d.separation,
                        d.within_std,
                        seeds.dataset,
                    )
                })
                .transpose()?;
            (ds, test, 1.0 - d.noise.rate)
        }
    };
    let mut split = split_validation(&ds, d.validation_fraction, seeds.split)?;
    split.train.sort_unstable();
    split.validation.sort_unstable();
    let mut cut = cfg.cut.clone();
    cut.target_retain.get_or_insert(default_retain);
    Ok(Inputs {
        ds,
        test,
        split,
        cut,
    })
}

fn require_test(inputs: &Inputs) -> Result<&Dataset> {
    inputs.test.as_ref().ok_or_else(|| {
        Error::InvalidConfig(
            "this command needs a test set (dataset.test_size or test_path)".into(),
        )
    })
}

fn ids_rows(ids: &[usize]) -> impl Iterator<Item = Vec<String>> + '_ {
    ids.iter().map(|id| vec![id.to_string()])
}

fn opt_string<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn gen(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let mut out = OutDir::create(&cfg.output_dir)?;
    out.write("dataset.ecds", &encode_dataset(&inputs.ds))?;
    if let Some(t) = &inputs.test {
        out.write("test.ecds", &encode_dataset(t))?;
    }
    out.json("split.json", &inputs.split)?;
    #[derive(Serialize)]
    struct Report {
        n: usize,
        dim: usize,
        num_classes: usize,
        mislabeled: usize,
        noise_rate: f64,
        train_size: usize,
        train_noise_rate: f64,
        validation_size: usize,
        test_size: usize,
    }
    let ds = &inputs.ds;
    out.json(
        "report.json",
        &Report {
            n: ds.len(),
            dim: ds.dim(),
            num_classes: ds.num_classes(),
            mislabeled: (0..ds.len()).filter(|&i| ds.is_mislabeled(i)).count(),
            noise_rate: ds.noise_rate(),
            train_size: inputs.split.train.len(),
            train_noise_rate: ds.noise_rate_of(&inputs.split.train),
            validation_size: inputs.split.validation.len(),
            test_size: inputs.test.as_ref().map_or(0, Dataset::len),
        },
    )?;
    out.finish("gen", cfg)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let ds = &inputs.ds;
    let arch = cfg.arch(ds.dim(), ds.num_classes());
    // Same seed as the first pipeline round, so `select` on this output
    // reproduces that round.
    let (training, log) = train_fresh(
        ds,
        &inputs.split.train,
        &inputs.split.validation,
        &arch,
        &cfg.train,
        round_seed(cfg.train.seed, 1),
    )?;
    let mut out = OutDir::create(&cfg.output_dir)?;
    let mut jsonl = Vec::new();
    log.write_jsonl(&mut jsonl)
        .map_err(|e| Error::io("dynlog.jsonl", e))?;
    out.write("dynlog.jsonl", &jsonl)?;
    for (epoch, model) in training.checkpoints.iter() {
        out.write(
            &format!("checkpoints/{}", checkpoint_file_name(epoch)),
            &encode_checkpoint(model),
        )?;
    }
    out.write("model.ecck", &encode_checkpoint(&training.model))?;
    out.json("split.json", &inputs.split)?;

    #[derive(Serialize)]
    struct Report<'a> {
        train_size: usize,
        validation_size: usize,
        epochs: usize,
        val_curve: &'a [f64],
        final_train_accuracy: f64,
        test_accuracy: Option<f64>,
    }
    let train_feats = ds.gather_features(&inputs.split.train);
    let report = Report {
        train_size: inputs.split.train.len(),
        validation_size: inputs.split.validation.len(),
        epochs: log.epochs_recorded(),
        val_curve: log.val_curve(),
        final_train_accuracy: evaluate_accuracy(
            &training.model,
            &train_feats,
            &ds.gather_noisy(&inputs.split.train),
        )?,
        test_accuracy: inputs
            .test
            .as_ref()
            .map(|t| evaluate_accuracy(&training.model, t.features(), t.true_labels()))
            .transpose()?,
    };
    out.json("report.json", &report)?;
    out.finish("train", cfg)
}

#[derive(Serialize)]
struct SelectionOutput<'a> {
    report: &'a RoundReport,
    confident: SelectionReport,
    refined: SelectionReport,
    state: &'a SelectionState,
}

pub fn select(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let ds = &inputs.ds;
    let exp = &cfg.experiment;
    let log_path = exp
        .dynlog
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("select needs experiment.dynlog".into()))?;
    let log = DynamicsLog::load(log_path)?;
    let train_ids = &inputs.split.train;

    let (state, report, lt, metrics, _) = match (&exp.metrics, &exp.checkpoints) {
        (Some(table_path), _) => {
            let table = SelectionMetrics::load(table_path)?;
            select_with_metrics(ds, train_ids, &log, &inputs.cut, 1, |ids, epoch_t| {
                if !table.is_empty() && table.epoch_t != epoch_t {
                    return Err(Error::InvalidInput(format!(
                        "{} holds metrics for epoch {} but the log peaks at epoch {epoch_t}",
                        table_path.display(),
                        table.epoch_t
                    )));
                }
                let mut m = table.restrict(ids)?;
                m.epoch_t = epoch_t;
                Ok(m)
            })?
        }
        (None, Some(dir)) => {
            select_with_metrics(ds, train_ids, &log, &inputs.cut, 1, |ids, epoch_t| {
                let model = load_checkpoint(&dir.join(checkpoint_file_name(epoch_t)))?;
                if model.arch().input_dim != ds.dim()
                    || model.arch().num_classes != ds.num_classes()
                {
                    return Err(Error::InvalidInput(
                        "checkpoint shape does not match the dataset".into(),
                    ));
                }
                compute_metrics(&model, ds, ids, epoch_t)
            })?
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "select needs experiment.checkpoints or experiment.metrics".into(),
            ))
        }
    };

    let mut out = OutDir::create(&cfg.output_dir)?;
    out.json(
        "selection.json",
        &SelectionOutput {
            report: &report,
            confident: selection_report(&state.d_s, &[], ds),
            refined: selection_report(&state.refined, &state.mees, ds),
            state: &state,
        },
    )?;
    let mut csv = Vec::new();
    write_candidate_csv(ds, train_ids, &lt, &metrics, &state.mees, &mut csv)?;
    out.write("candidates.csv", &csv)?;
    out.csv("refined.csv", &["sample_id"], ids_rows(&state.refined))?;
    out.finish("select", cfg)
}

pub fn pipeline(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let ds = &inputs.ds;
    let arch = cfg.arch(ds.dim(), ds.num_classes());
    let outcome = run_pipeline(
        ds,
        &inputs.split,
        inputs.test.as_ref(),
        &arch,
        &cfg.train,
        &inputs.cut,
    )?;
    let mut out = OutDir::create(&cfg.output_dir)?;
    out.json("report.json", &outcome.report)?;
    out.csv(
        "subset.csv",
        &["sample_id"],
        ids_rows(&outcome.final_subset),
    )?;
    for r in &outcome.rounds {
        let dir = format!("rounds/round-{}", r.state.round);
        out.json(
            &format!("{dir}/selection.json"),
            &SelectionOutput {
                report: &r.report,
                confident: selection_report(&r.state.d_s, &[], ds),
                refined: selection_report(&r.state.refined, &r.state.mees, ds),
                state: &r.state,
            },
        )?;
        let mut csv = Vec::new();
        r.write_candidate_csv(ds, &mut csv)?;
        out.write(&format!("{dir}/candidates.csv"), &csv)?;
    }
    out.write("final_model.ecck", &encode_checkpoint(&outcome.final_model))?;
    out.finish("pipeline", cfg)
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let ds = &inputs.ds;
    let arch = cfg.arch(ds.dim(), ds.num_classes());
    let round = run_round(ds, &inputs.split, &arch, &cfg.train, &inputs.cut, 1)?;
    let ids = &round.train_ids;
    let mut out = OutDir::create(&cfg.output_dir)?;

    // When samples are first predicted as their observed label, split by
    // whether that label is correct.
    let (clean_pos, noisy_pos): (Vec<usize>, Vec<usize>) =
        (0..ids.len()).partition(|&p| !ds.is_mislabeled(ids[p]));
    let pick =
        |pos: &[usize], labels: &[u16]| -> Vec<u16> { pos.iter().map(|&p| labels[p]).collect() };
    let noisy = ds.gather_noisy(ids);
    let truth = ds.gather_true(ids);
    let clean_hist =
        first_correct_histogram(&round.log.rows(&clean_pos)?, &pick(&clean_pos, &noisy))?;
    let noisy_log = round.log.rows(&noisy_pos)?;
    let fit_hist = first_correct_histogram(&noisy_log, &pick(&noisy_pos, &noisy))?;
    let true_hist = first_correct_histogram(&noisy_log, &pick(&noisy_pos, &truth))?;
    let epochs = round.log.epochs_recorded();
    out.csv(
        "histogram.csv",
        &["epoch", "clean", "mislabeled_given", "mislabeled_true"],
        (0..=epochs).map(|b| {
            let label = if b == epochs {
                "never".to_string()
            } else {
                (b + 1).to_string()
            };
            vec![
                label,
                clean_hist[b].to_string(),
                fit_hist[b].to_string(),
                true_hist[b].to_string(),
            ]
        }),
    )?;

    // Distance ratios in the feature space of an early checkpoint.
    let epoch = cfg.experiment.feature_epoch;
    let model = round.training.checkpoints.at(epoch)?;
    let features = penultimate_features(model, &ds.gather_features(ids))?;
    let width = features.len() / ids.len();
    let k = ds.num_classes();
    let true_centroids = class_centroids(&features, width, &truth, k)?;
    let noisy_centroids = class_centroids(&features, width, &noisy, k)?;
    let mees: std::collections::BTreeSet<usize> = round.state.mees.iter().copied().collect();
    let rows: Vec<f64> = noisy_pos
        .iter()
        .flat_map(|&p| features[p * width..(p + 1) * width].iter().copied())
        .collect();
    let ratios = distance_ratios(
        &rows,
        width,
        &pick(&noisy_pos, &truth),
        &pick(&noisy_pos, &noisy),
        &true_centroids,
        &noisy_centroids,
        &noisy_pos
            .iter()
            .map(|&p| mees.contains(&ids[p]))
            .collect::<Vec<_>>(),
    )?;
    out.csv(
        "ratios.csv",
        &["sample_id", "d_true", "d_mislabeled", "ratio", "is_mee"],
        ratios.samples.iter().map(|s| {
            vec![
                ids[noisy_pos[s.position]].to_string(),
                s.d_true.to_string(),
                s.d_mislabeled.to_string(),
                s.ratio.to_string(),
                u8::from(s.is_mee).to_string(),
            ]
        }),
    )?;
    let feature_ds = Dataset::new(
        features.iter().map(|&v| v as f32).collect(),
        width,
        truth.clone(),
        noisy.clone(),
        k,
        cfg.seed,
    )?;
    out.write("features.ecds", &encode_dataset(&feature_ds))?;

    #[derive(Serialize)]
    struct DistanceSummary {
        feature_epoch: usize,
        mee: RatioGroup,
        other: RatioGroup,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        round: &'a RoundReport,
        confident: SelectionReport,
        refined: SelectionReport,
        mee_removal: String,
        distance_ratio: DistanceSummary,
        /// Dataset ids of the rows of `features.ecds`.
        feature_ids: &'a [usize],
    }
    let refined = selection_report(&round.state.refined, &round.state.mees, ds);
    out.json(
        "report.json",
        &Report {
            round: &round.report,
            confident: selection_report(&round.state.d_s, &[], ds),
            mee_removal: refined.removal_summary(),
            refined,
            distance_ratio: DistanceSummary {
                feature_epoch: epoch,
                mee: ratios.mee,
                other: ratios.other,
            },
            feature_ids: ids,
        },
    )?;
    out.finish("report", cfg)
}

pub fn order_harm(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let test = require_test(&inputs)?;
    let ds = &inputs.ds;
    let exp = &cfg.experiment;
    let result = order_harm_experiment(
        ds,
        &inputs.split,
        test,
        &cfg.arch(ds.dim(), ds.num_classes()),
        &cfg.train,
        exp.groups,
        exp.repeats,
        inputs.cut.window,
    )?;
    let mut out = OutDir::create(&cfg.output_dir)?;
    out.json("report.json", &result)?;
    out.csv(
        "order_harm.csv",
        &[
            "group",
            "size",
            "lt_min",
            "lt_max",
            "mean_accuracy",
            "std_accuracy",
        ],
        result.groups.iter().map(|g| {
            vec![
                g.group.to_string(),
                g.size.to_string(),
                g.lt_range.0.to_string(),
                g.lt_range.1.to_string(),
                g.mean.to_string(),
                g.std.to_string(),
            ]
        }),
    )?;
    out.csv(
        "order_harm_runs.csv",
        &["group", "repeat", "accuracy"],
        result.groups.iter().flat_map(|g| {
            g.runs
                .iter()
                .enumerate()
                .map(move |(r, a)| vec![g.group.to_string(), r.to_string(), a.to_string()])
        }),
    )?;
    out.finish("exp-order-harm", cfg)
}

pub fn pretrained_speed(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = prepare(cfg)?;
    let ds = &inputs.ds;
    let result = pretrained_speed_experiment(
        ds,
        &inputs.split,
        &cfg.arch(ds.dim(), ds.num_classes()),
        &cfg.train,
        cfg.experiment.groups,
        inputs.cut.window,
    )?;
    let mut out = OutDir::create(&cfg.output_dir)?;
    out.json("report.json", &result)?;
    out.csv(
        "speed_curves.csv",
        &["group", "epoch", "learned", "fraction"],
        result.groups.iter().flat_map(|g| {
            g.learned.iter().enumerate().map(move |(e, &c)| {
                vec![
                    g.group.to_string(),
                    (e + 1).to_string(),
                    c.to_string(),
                    (c as f64 / g.size as f64).to_string(),
                ]
            })
        }),
    )?;
    out.csv(
        "speed.csv",
        &["group", "size", "fraction", "epochs"],
        result.groups.iter().flat_map(|g| {
            g.epochs_to.iter().map(move |&(f, e)| {
                vec![
                    g.group.to_string(),
                    g.size.to_string(),
                    f.to_string(),
                    opt_string(e),
                ]
            })
        }),
    )?;
    out.finish("exp-pretrained-speed", cfg)
}
