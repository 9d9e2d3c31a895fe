#![allow(dead_code)]

use earlycut::dataset::{
    inject_noise, make_blob_test_set, make_blobs, split_validation, Dataset, NoiseKind, NoiseSpec,
    SplitIndices,
};
use std::collections::BTreeSet;

use earlycut::dynamics::DynamicsLog;
use earlycut::earlycut::SelectionMetrics;
use earlycut::nettrain::{Arch, Model, TrainConfig};
use earlycut::seed;

/// Blobs with label noise, a validation split and a clean test set.
pub struct Fixture {
    pub ds: Dataset,
    pub split: SplitIndices,
    pub test: Dataset,
    pub arch: Arch,
    pub train: TrainConfig,
}

pub struct FixtureSpec {
    pub n: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub separation: f64,
    pub within_std: f64,
    pub noise: NoiseKind,
    pub rate: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub test_size: usize,
}

impl FixtureSpec {
    /// n = 4000, d = 32, K = 4, 40% instance-dependent noise, one hidden
    /// layer, 60 epochs.
    pub fn desk() -> Self {
        Self {
            n: 4000,
            dim: 32,
            num_classes: 4,
            separation: 3.0,
            within_std: 1.0,
            noise: NoiseKind::InstanceDependent,
            rate: 0.4,
            hidden: vec![12],
            epochs: 60,
            test_size: 2000,
        }
    }

    pub fn small() -> Self {
        Self {
            n: 400,
            dim: 8,
            num_classes: 3,
            separation: 3.0,
            within_std: 1.0,
            noise: NoiseKind::Symmetric,
            rate: 0.3,
            hidden: vec![8],
            epochs: 12,
            test_size: 200,
        }
    }

    pub fn build(&self, root: u64) -> Fixture {
        let clean = make_blobs(
            self.n,
            self.dim,
            self.num_classes,
            self.separation,
            self.within_std,
            seed::derive(root, seed::DATASET),
        )
        .unwrap();
        let spec = NoiseSpec::new(self.noise, self.rate, seed::derive(root, seed::NOISE));
        let ds = inject_noise(&clean, &spec).unwrap();
        let test = make_blob_test_set(
            self.test_size,
            self.dim,
            self.num_classes,
            self.separation,
            self.within_std,
            seed::derive(root, seed::DATASET),
        )
        .unwrap();
        let split = split_validation(&ds, 0.1, seed::derive(root, seed::SPLIT)).unwrap();
        Fixture {
            ds,
            split,
            test,
            arch: Arch::new(self.dim, self.hidden.clone(), self.num_classes),
            train: TrainConfig {
                epochs: self.epochs,
                seed: root,
                ..TrainConfig::default()
            },
        }
    }
}

/// Largest componentwise relative error between `a` and `b`, with
/// magnitudes below `floor` treated as `floor`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central finite differences of the loss with respect to parameters and
/// input.
pub fn numeric_gradients(model: &Model, x: &[f64], label: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut m = model.clone();
    let mut dp = vec![0.0; m.params().len()];
    for i in 0..dp.len() {
        let orig = m.params()[i];
        m.params_mut()[i] = orig + h;
        let up = m.loss(x, label);
        m.params_mut()[i] = orig - h;
        let down = m.loss(x, label);
        m.params_mut()[i] = orig;
        dp[i] = (up - down) / (2.0 * h);
    }
    let mut xv = x.to_vec();
    let mut dx = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xv[i];
        xv[i] = orig + h;
        let up = model.loss(&xv, label);
        xv[i] = orig - h;
        let down = model.loss(&xv, label);
        xv[i] = orig;
        dx[i] = (up - down) / (2.0 * h);
    }
    (dp, dx)
}

/// Learning time by direct search: the first epoch `e` such that the
/// predictions at `e - window + 1 ..= e` all equal the label.
pub fn lt_oracle(seq: &[u16], label: u16, window: usize) -> usize {
    (window..=seq.len())
        .find(|&e| seq[e - window..e].iter().all(|&p| p == label))
        .unwrap_or(seq.len() + 1)
}

/// Three-way intersection by sorting `(value, id)` keys.
pub fn mee_oracle(m: &SelectionMetrics, lf: f64, cf: f64, gf: f64) -> Vec<usize> {
    let n = m.len();
    let top = |vals: &[f64], count: usize, largest: bool| -> BTreeSet<usize> {
        let mut keyed: Vec<(f64, usize)> = vals
            .iter()
            .zip(&m.ids)
            .map(|(&v, &id)| (if largest { -v } else { v }, id))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().take(count).map(|k| k.1).collect()
    };
    let count = |f: f64| ((f * n as f64).round() as usize).min(n);
    let l = top(&m.loss, count(lf), true);
    let c = top(&m.confidence, count(cf), true);
    let g = top(&m.grad_norm, count(gf), false);
    l.into_iter()
        .filter(|i| c.contains(i) && g.contains(i))
        .collect()
}

pub fn log_from(seqs: &[Vec<u16>], k: usize) -> DynamicsLog {
    let epochs = seqs.first().map_or(0, Vec::len);
    let mut log = DynamicsLog::new(seqs.len(), k);
    for e in 0..epochs {
        log.push_epoch(seqs.iter().map(|s| s[e]).collect(), 0.5)
            .unwrap();
    }
    log
}
