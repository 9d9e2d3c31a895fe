//! Synthetic blob datasets, label-noise injection, validation splits and the
//! `ECDS` binary container.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::seed;

pub const DATASET_MAGIC: &[u8; 4] = b"ECDS";
pub const DATASET_VERSION: u32 = 1;

/// Features plus true and observed (noisy) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f32>,
    true_labels: Vec<u16>,
    noisy_labels: Vec<u16>,
    seed: u64,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        dim: usize,
        true_labels: Vec<u16>,
        noisy_labels: Vec<u16>,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = true_labels.len();
        if n == 0 || dim == 0 {
            return Err(Error::InvalidInput(
                "dataset needs n >= 1 and d >= 1".into(),
            ));
        }
        if num_classes < 2 || num_classes > usize::from(u16::MAX) {
            return Err(Error::InvalidInput(format!(
                "class count {num_classes} outside [2, 65535]"
            )));
        }
        if features.len() != n * dim || noisy_labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "shape mismatch: {} features, {} true labels, {} noisy labels for d = {dim}",
                features.len(),
                n,
                noisy_labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!(
                "feature of sample {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        for (name, labels) in [("true", &true_labels), ("noisy", &noisy_labels)] {
            if let Some(i) = labels.iter().position(|&y| usize::from(y) >= num_classes) {
                return Err(Error::InvalidInput(format!(
                    "{name} label {} of sample {i} >= K = {num_classes}",
                    labels[i]
                )));
            }
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            true_labels,
            noisy_labels,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn true_labels(&self) -> &[u16] {
        &self.true_labels
    }

    pub fn noisy_labels(&self) -> &[u16] {
        &self.noisy_labels
    }

    pub fn is_mislabeled(&self, i: usize) -> bool {
        self.true_labels[i] != self.noisy_labels[i]
    }

    /// Fraction of `indices` whose observed label differs from the truth.
    pub fn noise_rate_of(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let bad = indices.iter().filter(|&&i| self.is_mislabeled(i)).count();
        bad as f64 / indices.len() as f64
    }

    pub fn noise_rate(&self) -> f64 {
        let bad = (0..self.len()).filter(|&i| self.is_mislabeled(i)).count();
        bad as f64 / self.len() as f64
    }

    /// Rows `indices` as a dense matrix.
    pub fn gather_features(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn gather_noisy(&self, indices: &[usize]) -> Vec<u16> {
        indices.iter().map(|&i| self.noisy_labels[i]).collect()
    }

    pub fn gather_true(&self, indices: &[usize]) -> Vec<u16> {
        indices.iter().map(|&i| self.true_labels[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    Pairflip,
    InstanceDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    /// `(source, target)` pairs for asymmetric noise. Classes without an
    /// entry are never corrupted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_map: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Self {
        Self {
            kind,
            rate,
            class_map: None,
            seed,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "noise rate {} outside [0, 1)",
                self.rate
            )));
        }
        if self.kind == NoiseKind::Asymmetric {
            let map = self.class_map.as_ref().ok_or_else(|| {
                Error::InvalidConfig("asymmetric noise requires a class_map".into())
            })?;
            for &(src, dst) in map {
                if src == dst {
                    return Err(Error::InvalidConfig(format!(
                        "class_map maps class {src} to itself"
                    )));
                }
                if src >= num_classes || dst >= num_classes {
                    return Err(Error::InvalidConfig(format!(
                        "class_map entry ({src}, {dst}) outside K = {num_classes}"
                    )));
                }
            }
            let mut sources: Vec<usize> = map.iter().map(|p| p.0).collect();
            sources.sort_unstable();
            if sources.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig(
                    "class_map lists a source class twice".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Train/validation index partition, both lists ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Class centroids used by [`make_blobs`].
///
/// With `K <= d` the centroids sit on scaled orthonormal directions, so every
/// pair is exactly `separation` apart. With `K > d` the directions are random
/// unit vectors and pairwise distances only average out near `separation`.
pub fn blob_centroids(dim: usize, num_classes: usize, separation: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed::derive(seed, "centroids"));
    let scale = separation / std::f64::consts::SQRT_2;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if basis.len() < dim {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= proj * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|a| a * scale).collect())
        .collect()
}

/// Isotropic Gaussian blobs around [`blob_centroids`]. Sample `i` belongs to
/// class `i mod K`, so class counts differ by at most one.
pub fn make_blobs(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    within_std: f64,
    seed: u64,
) -> Result<Dataset> {
    sample_blobs(n, dim, num_classes, separation, within_std, seed, "samples")
}

/// Fresh clean draws from the same blob distribution as
/// `make_blobs(_, dim, num_classes, separation, within_std, seed)`, for
/// held-out evaluation.
pub fn make_blob_test_set(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    within_std: f64,
    seed: u64,
) -> Result<Dataset> {
    sample_blobs(
        n,
        dim,
        num_classes,
        separation,
        within_std,
        seed,
        "test-samples",
    )
}

fn sample_blobs(
    n: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    within_std: f64,
    seed: u64,
    stream: &str,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::InvalidConfig("need at least 2 classes".into()));
    }
    if n < num_classes {
        return Err(Error::InvalidConfig(format!(
            "n = {n} is smaller than K = {num_classes}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidConfig(format!(
            "d = {dim} must be at least 2"
        )));
    }
    if !(within_std > 0.0 && within_std.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "within_std = {within_std} must be positive"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "separation = {separation} must be non-negative"
        )));
    }
    let centroids = blob_centroids(dim, num_classes, separation, seed);
    let mut rng = seed::rng(seed::derive(seed, stream));
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % num_classes;
        for &c in &centroids[class] {
            let z: f64 = rng.sample(StandardNormal);
            features.push((c + within_std * z) as f32);
        }
        labels.push(class as u16);
    }
    Dataset::new(features, dim, labels.clone(), labels, num_classes, seed)
}

/// Number of samples a noise spec corrupts: `round(rate * n)`, except that
/// fewer than one expected flip means none.
pub fn flip_count(rate: f64, n: usize) -> usize {
    let expected = rate * n as f64;
    if expected < 1.0 {
        0
    } else {
        expected.round() as usize
    }
}

/// Corrupt exactly [`flip_count`] labels of a clean dataset.
pub fn inject_noise(clean: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    if clean.true_labels != clean.noisy_labels {
        return Err(Error::InvalidInput(
            "dataset already carries label noise".into(),
        ));
    }
    let k = clean.num_classes;
    spec.validate(k)?;
    let n = clean.len();
    let flips = flip_count(spec.rate, n);
    if spec.rate > 0.0 && flips == 0 {
        log::warn!(
            "noise rate {} on {n} samples yields less than one flip; no labels changed",
            spec.rate
        );
    }
    let mut noisy = clean.true_labels.clone();
    let mut rng = seed::rng(seed::derive(spec.seed, seed::NOISE));

    match spec.kind {
        NoiseKind::Symmetric => {
            let mut chosen = index::sample(&mut rng, n, flips).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                let y = usize::from(noisy[i]);
                let draw = rng.random_range(0..k - 1);
                noisy[i] = if draw < y { draw } else { draw + 1 } as u16;
            }
        }
        NoiseKind::Pairflip => {
            let mut chosen = index::sample(&mut rng, n, flips).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                noisy[i] = ((usize::from(noisy[i]) + 1) % k) as u16;
            }
        }
        NoiseKind::Asymmetric => {
            let map = spec.class_map.as_deref().unwrap_or_default();
            let target = |y: u16| map.iter().find(|p| p.0 == usize::from(y)).map(|p| p.1);
            let eligible: Vec<usize> = (0..n).filter(|&i| target(noisy[i]).is_some()).collect();
            if eligible.len() < flips {
                return Err(Error::InvalidConfig(format!(
                    "asymmetric noise needs {flips} flips but only {} samples have mapped classes",
                    eligible.len()
                )));
            }
            let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), flips)
                .into_iter()
                .map(|j| eligible[j])
                .collect();
            chosen.sort_unstable();
            for i in chosen {
                noisy[i] = target(noisy[i]).expect("eligible") as u16;
            }
        }
        NoiseKind::InstanceDependent => {
            let (scores, targets) = corruption_scores(clean, &mut rng);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for &i in &order[..flips] {
                noisy[i] = targets[i];
            }
        }
    }

    Ok(Dataset {
        noisy_labels: noisy,
        ..clean.clone()
    })
}

/// Per-sample corruption score and the wrong class it would be sent to.
///
/// Each ordered class pair `(y, j)` gets a seeded random unit direction; a
/// sample of class `y` scores `max_j <w_yj, x>` and targets the maximizing `j`.
fn corruption_scores(ds: &Dataset, rng: &mut impl Rng) -> (Vec<f64>, Vec<u16>) {
    let k = ds.num_classes;
    let d = ds.dim;
    let directions: Vec<Vec<f64>> = (0..k * k)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / norm).collect()
        })
        .collect();
    let mut scores = Vec::with_capacity(ds.len());
    let mut targets = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let y = usize::from(ds.true_labels[i]);
        let x = ds.row(i);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for j in (0..k).filter(|&j| j != y) {
            let w = &directions[y * k + j];
            let s: f64 = w.iter().zip(x).map(|(a, &b)| a * f64::from(b)).sum();
            if s > best.0 {
                best = (s, j);
            }
        }
        scores.push(best.0);
        targets.push(best.1 as u16);
    }
    (scores, targets)
}

/// Seeded shuffle putting `floor(fraction * n)` indices in validation.
pub fn split_validation(ds: &Dataset, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    let n = ds.len();
    let n_val = (fraction * n as f64).floor() as usize;
    if n_val < ds.num_classes {
        return Err(Error::InvalidConfig(format!(
            "validation split of {n_val} samples is smaller than K = {}",
            ds.num_classes
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, seed::SPLIT)));
    let mut validation = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, validation })
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(ds.len() as u32);
    w.u32(ds.dim as u32);
    w.u32(ds.num_classes as u32);
    w.u64(ds.seed);
    for &v in &ds.features {
        w.f32(v);
    }
    for &y in &ds.true_labels {
        w.u16(y);
    }
    for &y in &ds.noisy_labels {
        w.u16(y);
    }
    w.buf
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.expect_magic(DATASET_MAGIC)?;
    r.expect_version(DATASET_VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let seed = r.u64()?;
    if n == 0 || d == 0 || !(2..=usize::from(u16::MAX)).contains(&k) {
        return Err(Error::format(
            8,
            format!("bad header n = {n}, d = {d}, K = {k}"),
        ));
    }
    r.require((n as u64) * (d as u64), 4)?;
    let features = (0..n * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
    let mut labels = [Vec::new(), Vec::new()];
    for slot in &mut labels {
        r.require(n as u64, 2)?;
        for _ in 0..n {
            let at = r.offset();
            let y = r.u16()?;
            if usize::from(y) >= k {
                return Err(Error::format(at, format!("label {y} >= K = {k}")));
            }
            slot.push(y);
        }
    }
    r.finish()?;
    let [true_labels, noisy_labels] = labels;
    Dataset::new(features, d, true_labels, noisy_labels, k, seed)
}

pub fn store_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?)
}
