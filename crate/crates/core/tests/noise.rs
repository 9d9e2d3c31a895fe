use earlycut::dataset::{
    decode_dataset, encode_dataset, flip_count, inject_noise, make_blobs, split_validation,
    NoiseKind, NoiseSpec,
};
use proptest::prelude::*;

fn kinds() -> impl Strategy<Value = NoiseKind> {
    prop_oneof![
        Just(NoiseKind::Symmetric),
        Just(NoiseKind::Asymmetric),
        Just(NoiseKind::Pairflip),
        Just(NoiseKind::InstanceDependent),
    ]
}

fn spec(kind: NoiseKind, rate: f64, k: usize, seed: u64) -> NoiseSpec {
    let mut s = NoiseSpec::new(kind, rate, seed);
    if kind == NoiseKind::Asymmetric {
        s.class_map = Some((0..k).map(|c| (c, (c + 1) % k)).collect());
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flip_count_is_exact(
        kind in kinds(),
        n in 4usize..300,
        k in 2usize..6,
        rate in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        prop_assume!(n >= k);
        let clean = make_blobs(n, 3, k, 2.0, 1.0, seed).unwrap();
        let noisy = inject_noise(&clean, &spec(kind, rate, k, seed)).unwrap();
        let flipped: Vec<usize> = (0..n).filter(|&i| noisy.is_mislabeled(i)).collect();
        prop_assert_eq!(flipped.len(), flip_count(rate, n));
        for &i in &flipped {
            prop_assert_ne!(noisy.noisy_labels()[i], noisy.true_labels()[i]);
            if kind == NoiseKind::Pairflip {
                prop_assert_eq!(
                    usize::from(noisy.noisy_labels()[i]),
                    (usize::from(noisy.true_labels()[i]) + 1) % k
                );
            }
        }
        prop_assert_eq!(noisy.true_labels(), clean.true_labels());
        prop_assert_eq!(noisy.features(), clean.features());
    }

    #[test]
    fn generation_is_deterministic(kind in kinds(), seed in any::<u64>()) {
        let a = inject_noise(&make_blobs(120, 4, 3, 3.0, 1.0, seed).unwrap(), &spec(kind, 0.3, 3, seed)).unwrap();
        let b = inject_noise(&make_blobs(120, 4, 3, 3.0, 1.0, seed).unwrap(), &spec(kind, 0.3, 3, seed)).unwrap();
        prop_assert_eq!(encode_dataset(&a), encode_dataset(&b));
    }

    #[test]
    fn split_partitions_indices(n in 20usize..400, fraction in 0.05f64..0.5, seed in any::<u64>()) {
        let ds = make_blobs(n, 2, 2, 1.0, 1.0, 0).unwrap();
        prop_assume!((fraction * n as f64).floor() as usize >= 2);
        let split = split_validation(&ds, fraction, seed).unwrap();
        prop_assert_eq!(split.validation.len(), (fraction * n as f64).floor() as usize);
        let mut all: Vec<usize> = split.train.iter().chain(&split.validation).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn container_round_trip(n in 2usize..100, seed in any::<u64>()) {
        let ds = inject_noise(
            &make_blobs(n, 3, 2, 2.0, 1.0, seed).unwrap(),
            &NoiseSpec::new(NoiseKind::Symmetric, 0.25, seed),
        )
        .unwrap();
        prop_assert_eq!(decode_dataset(&encode_dataset(&ds)).unwrap(), ds);
    }
}

#[test]
fn tiny_rates_flip_nothing() {
    let clean = make_blobs(10, 2, 2, 1.0, 1.0, 0).unwrap();
    let noisy = inject_noise(&clean, &NoiseSpec::new(NoiseKind::Symmetric, 0.05, 1)).unwrap();
    assert_eq!(noisy.noise_rate(), 0.0);
}

#[test]
fn instance_dependent_rate_is_exact_on_fixture_size() {
    let clean = make_blobs(4000, 32, 4, 3.0, 1.0, 7).unwrap();
    let noisy = inject_noise(
        &clean,
        &NoiseSpec::new(NoiseKind::InstanceDependent, 0.4, 7),
    )
    .unwrap();
    assert_eq!(noisy.noise_rate(), 0.4);
}

#[test]
fn asymmetric_without_map_rejected() {
    let clean = make_blobs(10, 2, 2, 1.0, 1.0, 0).unwrap();
    assert!(inject_noise(&clean, &NoiseSpec::new(NoiseKind::Asymmetric, 0.2, 0)).is_err());
}
