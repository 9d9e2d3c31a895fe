use serde::Serialize;

use crate::dataset::Dataset;

/// Noise level of a selected subset and quality of a removed set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub selected_size: usize,
    pub selected_mislabeled: usize,
    pub noise_rate: f64,
    pub removed_count: usize,
    pub removed_mislabeled: usize,
    /// Mislabeled share of the removed set; absent when nothing was removed.
    pub purity: Option<f64>,
}

impl SelectionReport {
    /// `"<removed> (<purity>%)"`, e.g. `300 (91.33%)`.
    pub fn removal_summary(&self) -> String {
        match self.purity {
            Some(p) => format!("{} ({:.2}%)", self.removed_count, p * 100.0),
            None => format!("{} (-)", self.removed_count),
        }
    }
}

pub fn selection_report(selected: &[usize], removed: &[usize], ds: &Dataset) -> SelectionReport {
    let selected_mislabeled = selected.iter().filter(|&&i| ds.is_mislabeled(i)).count();
    let removed_mislabeled = removed.iter().filter(|&&i| ds.is_mislabeled(i)).count();
    SelectionReport {
        selected_size: selected.len(),
        selected_mislabeled,
        noise_rate: if selected.is_empty() {
            0.0
        } else {
            selected_mislabeled as f64 / selected.len() as f64
        },
        removed_count: removed.len(),
        removed_mislabeled,
        purity: (!removed.is_empty()).then(|| removed_mislabeled as f64 / removed.len() as f64),
    }
}
