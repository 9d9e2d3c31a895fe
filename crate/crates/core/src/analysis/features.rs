use serde::Serialize;

use crate::error::{Error, Result};

/// Per-class mean of feature rows (`n x h`, row-major). Returns `K x h`.
pub fn class_centroids(
    features: &[f64],
    dim: usize,
    labels: &[u16],
    num_classes: usize,
) -> Result<Vec<f64>> {
    if features.len() != labels.len() * dim {
        return Err(Error::InvalidArgument(format!(
            "{} feature values for {} rows of width {dim}",
            features.len(),
            labels.len()
        )));
    }
    let mut sums = vec![0.0; num_classes * dim];
    let mut counts = vec![0usize; num_classes];
    for (row, &y) in features.chunks(dim).zip(labels) {
        let y = usize::from(y);
        if y >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {y} >= K = {num_classes}"
            )));
        }
        counts[y] += 1;
        sums[y * dim..(y + 1) * dim]
            .iter_mut()
            .zip(row)
            .for_each(|(s, v)| *s += v);
    }
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::DegenerateClass(k));
        }
        sums[k * dim..(k + 1) * dim]
            .iter_mut()
            .for_each(|s| *s /= c as f64);
    }
    Ok(sums)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Median of the finite entries, `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSample {
    pub position: usize,
    pub d_true: f64,
    pub d_mislabeled: f64,
    /// `d_mislabeled / d_true`; infinite when `d_true` is zero.
    pub ratio: f64,
    pub is_mee: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioGroup {
    pub count: usize,
    /// Over finite ratios only.
    pub median_ratio: Option<f64>,
    /// Share of the group with `r < 1`.
    pub frac_below_one: Option<f64>,
}

impl RatioGroup {
    fn from_ratios(ratios: &[f64]) -> Self {
        let below = ratios.iter().filter(|&&r| r < 1.0).count();
        Self {
            count: ratios.len(),
            median_ratio: median(ratios),
            frac_below_one: (!ratios.is_empty()).then(|| below as f64 / ratios.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRatioReport {
    pub samples: Vec<RatioSample>,
    pub mee: RatioGroup,
    pub other: RatioGroup,
}

/// Distances of mislabeled samples to their true-class and observed-class
/// centers in feature space, split into the flagged group and the rest.
///
/// `true_centroids` are averaged with true labels, `noisy_centroids` with
/// observed labels; both are `K x dim`.
pub fn distance_ratios(
    features: &[f64],
    dim: usize,
    true_labels: &[u16],
    noisy_labels: &[u16],
    true_centroids: &[f64],
    noisy_centroids: &[f64],
    is_mee: &[bool],
) -> Result<DistanceRatioReport> {
    let n = true_labels.len();
    if features.len() != n * dim || noisy_labels.len() != n || is_mee.len() != n {
        return Err(Error::InvalidArgument(
            "distance ratio inputs differ in length".into(),
        ));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let (y, noisy) = (usize::from(true_labels[i]), usize::from(noisy_labels[i]));
        if y == noisy {
            return Err(Error::InvalidInput(format!(
                "sample at position {i} is correctly labeled"
            )));
        }
        let row = &features[i * dim..(i + 1) * dim];
        let d_true = distance(row, &true_centroids[y * dim..(y + 1) * dim]);
        let d_mislabeled = distance(row, &noisy_centroids[noisy * dim..(noisy + 1) * dim]);
        let ratio = if d_true == 0.0 {
            f64::INFINITY
        } else {
            d_mislabeled / d_true
        };
        samples.push(RatioSample {
            position: i,
            d_true,
            d_mislabeled,
            ratio,
            is_mee: is_mee[i],
        });
    }
    let group = |flag: bool| {
        let r: Vec<f64> = samples
            .iter()
            .filter(|s| s.is_mee == flag)
            .map(|s| s.ratio)
            .collect();
        RatioGroup::from_ratios(&r)
    };
    Ok(DistanceRatioReport {
        mee: group(true),
        other: group(false),
        samples,
    })
}
