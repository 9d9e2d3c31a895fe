mod common;

use common::FixtureSpec;
use earlycut::analysis::{
    class_centroids, distance_ratios, learning_order_groups, partition_groups, selection_report,
};
use earlycut::dataset::Dataset;
use earlycut::nettrain::TrainConfig;
use proptest::prelude::*;

fn labelled_rows() -> impl Strategy<Value = (Vec<f64>, Vec<u16>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n * 2),
            prop::collection::vec(0u16..3, n).prop_map(|mut v| {
                v[0] = 0;
                v[1] = 1;
                v[2] = 2;
                v
            }),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ratio_below_one_iff_closer_to_observed((feats, labels) in labelled_rows(), shift in 1u16..3) {
        let noisy: Vec<u16> = labels.iter().map(|&y| (y + shift) % 3).collect();
        let tc = class_centroids(&feats, 2, &labels, 3).unwrap();
        let nc = class_centroids(&feats, 2, &noisy, 3).unwrap();
        let flags = vec![false; labels.len()];
        let rep = distance_ratios(&feats, 2, &labels, &noisy, &tc, &nc, &flags).unwrap();
        for s in &rep.samples {
            if s.d_true > 0.0 {
                prop_assert_eq!(s.ratio < 1.0, s.d_mislabeled < s.d_true);
            }
        }
        prop_assert_eq!(rep.other.count, labels.len());
        prop_assert_eq!(rep.mee.count, 0);
    }

    #[test]
    fn centroids_ignore_row_order((feats, labels) in labelled_rows(), rot in 0usize..40) {
        let n = labels.len();
        let r = rot % n;
        let rl: Vec<u16> = labels[r..].iter().chain(&labels[..r]).copied().collect();
        let rf: Vec<f64> = feats[r * 2..].iter().chain(&feats[..r * 2]).copied().collect();
        let a = class_centroids(&feats, 2, &labels, 3).unwrap();
        let b = class_centroids(&rf, 2, &rl, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn report_matches_recount(
        flags in prop::collection::vec(any::<bool>(), 1..60),
        picks in prop::collection::vec(0u8..3, 60),
    ) {
        let n = flags.len();
        let truth = vec![0u16; n];
        let noisy: Vec<u16> = flags.iter().map(|&f| u16::from(f)).collect();
        let ds = Dataset::new(vec![0.0; n], 1, truth, noisy, 2, 0).unwrap();
        let selected: Vec<usize> = (0..n).filter(|&i| picks[i] == 1).collect();
        let removed: Vec<usize> = (0..n).filter(|&i| picks[i] == 2).collect();
        let rep = selection_report(&selected, &removed, &ds);
        let bad_sel = selected.iter().filter(|&&i| flags[i]).count();
        let bad_rem = removed.iter().filter(|&&i| flags[i]).count();
        prop_assert_eq!(rep.selected_mislabeled, bad_sel);
        prop_assert_eq!(rep.removed_mislabeled, bad_rem);
        if !selected.is_empty() {
            prop_assert!((rep.noise_rate - bad_sel as f64 / selected.len() as f64).abs() < 1e-12);
        }
        prop_assert_eq!(rep.purity.is_some(), !removed.is_empty());
    }

    #[test]
    fn partition_preserves_order(len in 0usize..100, groups in 1usize..10) {
        let v: Vec<usize> = (0..len).collect();
        let parts = partition_groups(&v, groups);
        prop_assert_eq!(parts.len(), groups);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(parts.concat(), v);
    }
}

#[test]
fn order_groups_cover_mislabeled_once() {
    let fx = FixtureSpec::small().build(4);
    let cfg = TrainConfig {
        epochs: 6,
        ..fx.train.clone()
    };
    let order = learning_order_groups(&fx.ds, &fx.split, &fx.arch, &cfg, 5, 3).unwrap();
    let mut grouped: Vec<usize> = order.groups.concat();
    grouped.sort_unstable();
    let expected: Vec<usize> = fx
        .split
        .train
        .iter()
        .copied()
        .filter(|&i| fx.ds.is_mislabeled(i))
        .collect();
    assert_eq!(grouped, expected);
    assert!(order.clean.iter().all(|&i| !fx.ds.is_mislabeled(i)));
    assert_eq!(order.clean.len() + grouped.len(), fx.split.train.len());
    assert!(order.lt_ranges.windows(2).all(|w| w[0].1 <= w[1].0));
}

#[test]
fn correctly_labelled_sample_rejected_by_ratios() {
    let feats = vec![0.0, 0.0, 1.0, 1.0];
    let labels = vec![0u16, 1];
    let c = class_centroids(&feats, 2, &labels, 2).unwrap();
    assert!(distance_ratios(&feats, 2, &labels, &labels, &c, &c, &[false, false]).is_err());
}
