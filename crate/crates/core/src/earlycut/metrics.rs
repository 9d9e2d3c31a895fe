use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nettrain::{input_gradient_norms, predict_batch, Model};

/// Loss, confidence and input-gradient norm of a set of samples under the
/// model at `epoch_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMetrics {
    pub ids: Vec<usize>,
    pub loss: Vec<f64>,
    pub confidence: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub epoch_t: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricsRow {
    sample_id: usize,
    loss: f64,
    confidence: f64,
    grad_norm: f64,
    epoch_t: usize,
}

impl SelectionMetrics {
    pub fn empty(epoch_t: usize) -> Self {
        Self {
            ids: Vec::new(),
            loss: Vec::new(),
            confidence: Vec::new(),
            grad_norm: Vec::new(),
            epoch_t,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if self.loss.len() != n || self.confidence.len() != n || self.grad_norm.len() != n {
            return Err(Error::InvalidInput(format!(
                "metric columns differ in length: {} ids, {} losses, {} confidences, {} grad norms",
                n,
                self.loss.len(),
                self.confidence.len(),
                self.grad_norm.len()
            )));
        }
        let all = self
            .loss
            .iter()
            .chain(&self.confidence)
            .chain(&self.grad_norm);
        if all.into_iter().any(|v| v.is_nan()) {
            return Err(Error::NumericInput("selection metrics".into()));
        }
        Ok(())
    }

    /// Rows restricted to `ids` (kept in the order given).
    pub fn restrict(&self, ids: &[usize]) -> Result<Self> {
        let index: BTreeMap<usize, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(p, &id)| (id, p))
            .collect();
        let mut out = Self::empty(self.epoch_t);
        for &id in ids {
            let pos = *index
                .get(&id)
                .ok_or_else(|| Error::InvalidArgument(format!("no metrics for sample {id}")))?;
            out.ids.push(id);
            out.loss.push(self.loss[pos]);
            out.confidence.push(self.confidence[pos]);
            out.grad_norm.push(self.grad_norm[pos]);
        }
        Ok(out)
    }

    /// CSV with header `sample_id,loss,confidence,grad_norm,epoch_t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.is_empty() {
            w.write_record(["sample_id", "loss", "confidence", "grad_norm", "epoch_t"])
                .map_err(csv_err)?;
        }
        for i in 0..self.len() {
            w.serialize(MetricsRow {
                sample_id: self.ids[i],
                loss: self.loss[i],
                confidence: self.confidence[i],
                grad_norm: self.grad_norm[i],
                epoch_t: self.epoch_t,
            })
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<metrics csv>", e))
    }

    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut out = Self::empty(0);
        for (i, row) in rdr.deserialize::<MetricsRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
            if i == 0 {
                out.epoch_t = row.epoch_t;
            } else if row.epoch_t != out.epoch_t {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    message: format!(
                        "row {} mixes epoch {} with {}",
                        i + 1,
                        row.epoch_t,
                        out.epoch_t
                    ),
                });
            }
            out.ids.push(row.sample_id);
            out.loss.push(row.loss);
            out.confidence.push(row.confidence);
            out.grad_norm.push(row.grad_norm);
        }
        out.validate()?;
        Ok(out)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

/// Evaluate the epoch-`t` model on dataset rows `ids` against their
/// observed labels.
pub fn compute_metrics(
    model_at_t: &Model,
    ds: &Dataset,
    ids: &[usize],
    epoch_t: usize,
) -> Result<SelectionMetrics> {
    if ids.is_empty() {
        return Ok(SelectionMetrics::empty(epoch_t));
    }
    let x = ds.gather_features(ids);
    let y = ds.gather_noisy(ids);
    let batch = predict_batch(model_at_t, &x, &y)?;
    let grad_norm = input_gradient_norms(model_at_t, &x, &y)?;
    Ok(SelectionMetrics {
        ids: ids.to_vec(),
        loss: batch.loss,
        confidence: batch.confidence,
        grad_norm,
        epoch_t,
    })
}
