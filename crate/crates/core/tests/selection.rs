use std::collections::BTreeSet;

use earlycut::dataset::Dataset;
use earlycut::dynamics::{first_correct_histogram, learning_times, rank_by_learning_time};
use earlycut::earlycut::{
    base_select, candidate_subset, identify_mees, rank_count, retention_per_round,
    select_with_metrics, CutConfig, PercentilePopulation, SelectionMetrics,
};
use proptest::prelude::*;

mod common;

use common::{log_from, lt_oracle, mee_oracle};

fn trajectories() -> impl Strategy<Value = (Vec<Vec<u16>>, Vec<u16>)> {
    (1usize..30, 3usize..12).prop_flat_map(|(n, t)| {
        (
            prop::collection::vec(prop::collection::vec(0u16..3, t), n),
            prop::collection::vec(0u16..3, n),
        )
    })
}

/// Metrics with coarse values so that ties are common.
fn metrics_table() -> impl Strategy<Value = SelectionMetrics> {
    (0usize..60).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0u8..8, n),
            prop::collection::vec(0u8..8, n),
            prop::collection::vec(0u8..8, n),
            Just(()).prop_perturb(move |_, mut rng| {
                let mut ids: Vec<usize> = (0..n * 3).collect();
                for i in (1..ids.len()).rev() {
                    ids.swap(i, rng.random_range(0..=i));
                }
                ids.truncate(n);
                ids
            }),
        )
            .prop_map(|(_, l, c, g, ids)| SelectionMetrics {
                ids,
                loss: l.into_iter().map(|v| f64::from(v) * 0.5).collect(),
                confidence: c.into_iter().map(|v| f64::from(v) / 8.0).collect(),
                grad_norm: g.into_iter().map(f64::from).collect(),
                epoch_t: 1,
            })
    })
}

fn fracs() -> impl Strategy<Value = f64> {
    (0u32..=20).prop_map(|v| f64::from(v) / 20.0)
}

fn cfg_with(lf: f64, cf: f64, gf: f64) -> CutConfig {
    CutConfig {
        loss_top_frac: lf,
        conf_top_frac: cf,
        grad_bottom_frac: gf,
        ..CutConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn learning_times_match_oracle((seqs, labels) in trajectories(), window in 2usize..=3) {
        let log = log_from(&seqs, 3);
        let lt = learning_times(&log, &labels, window).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            prop_assert_eq!(lt.lt[i], lt_oracle(s, labels[i], window));
        }
    }

    #[test]
    fn longer_window_never_learns_earlier((seqs, labels) in trajectories()) {
        let log = log_from(&seqs, 3);
        let two = learning_times(&log, &labels, 2).unwrap();
        let three = learning_times(&log, &labels, 3).unwrap();
        prop_assert!(two.lt.iter().zip(&three.lt).all(|(a, b)| b >= a));
    }

    #[test]
    fn ranking_is_a_sorted_permutation((seqs, labels) in trajectories()) {
        let lt = learning_times(&log_from(&seqs, 3), &labels, 3).unwrap();
        let order = rank_by_learning_time(&lt);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..lt.len()).collect::<Vec<_>>());
        prop_assert!(order.windows(2).all(|w| lt.lt[w[0]] <= lt.lt[w[1]]));
    }

    #[test]
    fn histogram_partitions_samples((seqs, labels) in trajectories()) {
        let hist = first_correct_histogram(&log_from(&seqs, 3), &labels).unwrap();
        prop_assert_eq!(hist.len(), seqs[0].len() + 1);
        prop_assert_eq!(hist.iter().sum::<usize>(), seqs.len());
    }

    #[test]
    fn mees_match_oracle(m in metrics_table(), lf in fracs(), cf in fracs(), gf in fracs()) {
        let sel = identify_mees(&m, &cfg_with(lf, cf, gf));
        prop_assert_eq!(sel.mees, mee_oracle(&m, lf, cf, gf));
    }

    #[test]
    fn mees_shrink_with_fractions(m in metrics_table(), lf in fracs(), cf in fracs(), gf in fracs(), bump in 1u32..5) {
        let base: BTreeSet<usize> = identify_mees(&m, &cfg_with(lf, cf, gf)).mees.into_iter().collect();
        let up = |f: f64| (f + f64::from(bump) / 20.0).min(1.0);
        for cfg in [cfg_with(up(lf), cf, gf), cfg_with(lf, up(cf), gf), cfg_with(lf, cf, up(gf))] {
            let grown: BTreeSet<usize> = identify_mees(&m, &cfg).mees.into_iter().collect();
            prop_assert!(base.is_subset(&grown));
        }
        prop_assert!(base.len() <= rank_count(lf, m.len()));
    }

    #[test]
    fn row_order_does_not_matter(m in metrics_table(), seed in any::<u64>()) {
        let n = m.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = SelectionMetrics {
            ids: perm.iter().map(|&p| m.ids[p]).collect(),
            loss: perm.iter().map(|&p| m.loss[p]).collect(),
            confidence: perm.iter().map(|&p| m.confidence[p]).collect(),
            grad_norm: perm.iter().map(|&p| m.grad_norm[p]).collect(),
            epoch_t: m.epoch_t,
        };
        let cfg = CutConfig::default();
        prop_assert_eq!(identify_mees(&m, &cfg).mees, identify_mees(&shuffled, &cfg).mees);
    }

    #[test]
    fn retention_compounds(x in 0.05f64..=1.0, k in 1usize..8) {
        let r = retention_per_round(x, k).unwrap();
        prop_assert!((r.powi(k as i32) - x).abs() < 1e-9);
    }

    #[test]
    fn base_and_candidate_sizes((seqs, labels) in trajectories(), retain in 0.05f64..=1.0, gamma in 1.0f64..4.0) {
        let lt = learning_times(&log_from(&seqs, 3), &labels, 3).unwrap();
        let d_s = base_select(&lt, retain).unwrap();
        let n = lt.len() as f64;
        prop_assert!(d_s.len() as f64 >= retain * n - 1e-6);
        prop_assert!((d_s.len() as f64) < retain * n + 1.0);
        let pool = candidate_subset(&d_s, gamma).unwrap();
        prop_assert_eq!(&d_s[..pool.len()], &pool[..]);
        prop_assert!(pool.len() as f64 >= d_s.len() as f64 / gamma - 1e-6);
    }

    #[test]
    fn round_sets_nest(
        (seqs, labels) in trajectories(),
        noisy_mask in prop::collection::vec(any::<bool>(), 30),
        raw in prop::collection::vec((0u8..8, 0u8..8, 0u8..8), 30),
        retain in 0.2f64..=1.0,
        full_population in any::<bool>(),
    ) {
        let n = seqs.len();
        let ds = dataset_for(&labels, &noisy_mask[..n]);
        let ids: Vec<usize> = (0..n).collect();
        let log = log_from(&seqs, 3);
        let cut = CutConfig {
            target_retain: Some(retain),
            i_rate: 1,
            loss_top_frac: 0.3,
            conf_top_frac: 0.5,
            grad_bottom_frac: 0.5,
            population: if full_population {
                PercentilePopulation::ConfidentSubset
            } else {
                PercentilePopulation::Candidates
            },
            ..CutConfig::default()
        };
        let (state, report, _, _, _) = select_with_metrics(&ds, &ids, &log, &cut, 1, |rows, t| {
            Ok(SelectionMetrics {
                ids: rows.to_vec(),
                loss: rows.iter().map(|&i| f64::from(raw[i].0)).collect(),
                confidence: rows.iter().map(|&i| f64::from(raw[i].1)).collect(),
                grad_norm: rows.iter().map(|&i| f64::from(raw[i].2)).collect(),
                epoch_t: t,
            })
        })
        .unwrap();
        let d_s: BTreeSet<usize> = state.d_s.iter().copied().collect();
        let pool: BTreeSet<usize> = state.d_s_prime.iter().copied().collect();
        let mees: BTreeSet<usize> = state.mees.iter().copied().collect();
        let refined: BTreeSet<usize> = state.refined.iter().copied().collect();
        prop_assert!(pool.is_subset(&d_s));
        prop_assert!(mees.is_subset(&pool));
        prop_assert!(refined.is_disjoint(&mees));
        prop_assert_eq!(refined.union(&mees).copied().collect::<BTreeSet<_>>(), d_s);
        let ranked = if full_population { state.d_s.len() } else { state.d_s_prime.len() };
        prop_assert!(state.mees.len() <= rank_count(0.3, ranked));
        if let Some(purity) = report.mee_purity {
            if purity > report.confident_noise_rate {
                prop_assert!(report.refined_noise_rate <= report.confident_noise_rate + 1e-12);
            }
        }
    }
}

fn dataset_for(noisy: &[u16], flipped: &[bool]) -> Dataset {
    let truth: Vec<u16> = noisy
        .iter()
        .zip(flipped)
        .map(|(&y, &f)| if f { (y + 1) % 3 } else { y })
        .collect();
    Dataset::new(vec![0.0; noisy.len()], 1, truth, noisy.to_vec(), 3, 0).unwrap()
}

#[test]
fn retention_for_three_rounds() {
    let r = retention_per_round(0.6, 3).unwrap();
    assert!((r - 0.8434).abs() < 5e-5);
}

#[test]
fn window_outside_two_or_three_rejected() {
    let log = log_from(&[vec![0, 0, 0, 0]], 2);
    assert!(learning_times(&log, &[0], 1).is_err());
    assert!(learning_times(&log, &[0], 4).is_err());
    let short = log_from(&[vec![0, 0]], 2);
    assert!(learning_times(&short, &[0], 3).is_err());
}
