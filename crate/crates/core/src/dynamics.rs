//! Per-epoch prediction logs and the learning-time statistics built on them.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DYNLOG_SCHEMA: &str = "ec-dynlog/1";

/// Default stability window: three consecutive matching epochs.
pub const DEFAULT_WINDOW: usize = 3;

/// Predicted label of every tracked sample after every epoch, plus the
/// validation-accuracy curve. Epochs are 1-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsLog {
    num_samples: usize,
    num_classes: usize,
    /// Epoch-major `T x n`.
    preds: Vec<u16>,
    val_curve: Vec<f64>,
}

impl DynamicsLog {
    pub fn new(num_samples: usize, num_classes: usize) -> Self {
        Self {
            num_samples,
            num_classes,
            preds: Vec::new(),
            val_curve: Vec::new(),
        }
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn epochs_recorded(&self) -> usize {
        self.val_curve.len()
    }

    pub fn val_curve(&self) -> &[f64] {
        &self.val_curve
    }

    /// Predictions after `epoch` (1-indexed).
    pub fn preds_at(&self, epoch: usize) -> &[u16] {
        assert!(
            epoch >= 1 && epoch <= self.epochs_recorded(),
            "epoch {epoch} not recorded"
        );
        &self.preds[(epoch - 1) * self.num_samples..epoch * self.num_samples]
    }

    /// The same trajectory restricted to the given sample positions.
    pub fn rows(&self, positions: &[usize]) -> Result<Self> {
        if let Some(&p) = positions.iter().find(|&&p| p >= self.num_samples) {
            return Err(Error::InvalidArgument(format!(
                "position {p} outside a log of {} samples",
                self.num_samples
            )));
        }
        let mut out = Self::new(positions.len(), self.num_classes);
        for epoch in 1..=self.epochs_recorded() {
            let preds = self.preds_at(epoch);
            out.preds.extend(positions.iter().map(|&p| preds[p]));
        }
        out.val_curve = self.val_curve.clone();
        Ok(out)
    }

    pub fn push_epoch(&mut self, preds: Vec<u16>, val_acc: f64) -> Result<()> {
        if preds.len() != self.num_samples {
            return Err(Error::InvalidInput(format!(
                "epoch {} has {} predictions for {} samples",
                self.epochs_recorded() + 1,
                preds.len(),
                self.num_samples
            )));
        }
        if let Some(&y) = preds.iter().find(|&&y| usize::from(y) >= self.num_classes) {
            return Err(Error::InvalidInput(format!(
                "predicted label {y} >= K = {}",
                self.num_classes
            )));
        }
        if !val_acc.is_finite() {
            return Err(Error::NumericInput("validation accuracy".into()));
        }
        self.preds.extend(preds);
        self.val_curve.push(val_acc);
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = LogHeader {
            schema: DYNLOG_SCHEMA.to_string(),
            n: self.num_samples,
            k: self.num_classes,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for epoch in 1..=self.epochs_recorded() {
            let rec = EpochRecord {
                epoch,
                preds: self.preds_at(epoch).to_vec(),
                val_acc: self.val_curve[epoch - 1],
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?
            .map_err(|e| Error::io(origin, e))?;
        let header: LogHeader =
            serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
        if header.schema != DYNLOG_SCHEMA {
            return Err(parse_err(1, format!("unknown schema {:?}", header.schema)));
        }
        let mut log = DynamicsLog::new(header.n, header.k);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EpochRecord =
                serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
            if rec.epoch != log.epochs_recorded() + 1 {
                return Err(parse_err(
                    line_no,
                    format!(
                        "epoch {} out of sequence, expected {}",
                        rec.epoch,
                        log.epochs_recorded() + 1
                    ),
                ));
            }
            log.push_epoch(rec.preds, rec.val_acc)
                .map_err(|e| parse_err(line_no, e.to_string()))?;
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(BufReader::new(file), path)
    }
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    schema: String,
    n: usize,
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct EpochRecord {
    epoch: usize,
    preds: Vec<u16>,
    val_acc: f64,
}

/// First epoch at which each sample's prediction has matched its label for
/// `window` consecutive epochs, or `epochs + 1` if that never happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LearningTimes {
    pub lt: Vec<usize>,
    pub window: usize,
    pub epochs: usize,
}

impl LearningTimes {
    pub fn sentinel(&self) -> usize {
        self.epochs + 1
    }

    pub fn len(&self) -> usize {
        self.lt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lt.is_empty()
    }

    pub fn is_learned(&self, i: usize) -> bool {
        self.lt[i] <= self.epochs
    }
}

/// Learning time of every logged sample against `labels`.
pub fn learning_times(log: &DynamicsLog, labels: &[u16], window: usize) -> Result<LearningTimes> {
    if !(2..=3).contains(&window) {
        return Err(Error::InvalidConfig(format!(
            "stability window {window} must be 2 or 3"
        )));
    }
    let epochs = log.epochs_recorded();
    if window > epochs {
        return Err(Error::InvalidConfig(format!(
            "stability window {window} exceeds the {epochs} recorded epochs"
        )));
    }
    if labels.len() != log.num_samples() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a log of {} samples",
            labels.len(),
            log.num_samples()
        )));
    }
    let mut lt = vec![epochs + 1; labels.len()];
    let mut run = vec![0usize; labels.len()];
    for epoch in 1..=epochs {
        for (i, &p) in log.preds_at(epoch).iter().enumerate() {
            if lt[i] <= epochs {
                continue;
            }
            if p == labels[i] {
                run[i] += 1;
                if run[i] >= window {
                    lt[i] = epoch;
                }
            } else {
                run[i] = 0;
            }
        }
    }
    Ok(LearningTimes { lt, window, epochs })
}

/// Sample positions sorted by ascending learning time; ties keep index order.
pub fn rank_by_learning_time(lt: &LearningTimes) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lt.len()).collect();
    order.sort_by_key(|&i| lt.lt[i]);
    order
}

/// Count of samples first predicted as their true label at each epoch.
///
/// Entry `e - 1` holds epoch `e`; the final entry counts samples that were
/// never predicted correctly.
pub fn first_correct_histogram(log: &DynamicsLog, true_labels: &[u16]) -> Result<Vec<usize>> {
    if true_labels.len() != log.num_samples() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a log of {} samples",
            true_labels.len(),
            log.num_samples()
        )));
    }
    let epochs = log.epochs_recorded();
    let mut first = vec![None; true_labels.len()];
    for epoch in 1..=epochs {
        for (i, &p) in log.preds_at(epoch).iter().enumerate() {
            if first[i].is_none() && p == true_labels[i] {
                first[i] = Some(epoch);
            }
        }
    }
    let mut hist = vec![0usize; epochs + 1];
    for f in first {
        hist[f.map_or(epochs, |e| e - 1)] += 1;
    }
    Ok(hist)
}
