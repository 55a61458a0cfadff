use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::dataset::SplitMode;
use crate::synth::{SynthConfig, SynthStudy};

struct Fixture {
    _dir: tempfile::TempDir,
    study: Study,
    rows: Vec<FeatureRow>,
    splits: BTreeMap<String, SplitSpec>,
    settings: TrainSettings,
}

fn fixture(mode: SplitMode) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthStudy::generate(SynthConfig {
        readers: 4,
        abstracts: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut config = synth.write_to(dir.path()).unwrap();
    config.split.mode = mode;
    config.model.lambda_grid = vec![0.01];
    let study = crate::pipeline::load_study(&config).unwrap();
    let rows = crate::pipeline::featurize(&study, vec![]).unwrap();
    let splits = splits_for(&study.records, mode, 0.8, config.seed).unwrap();
    let settings = TrainSettings::new(study.schema(), &config.model);
    Fixture {
        _dir: dir,
        study,
        rows,
        splits,
        settings,
    }
}

#[test]
fn mixed_matches_individual_size_without_leakage() {
    for mode in [SplitMode::Shared, SplitMode::PerAnnotator] {
        let f = fixture(mode);
        let run = evaluate_target(&f.rows, &f.splits, Target::Familiarity, &f.settings, 3, true).unwrap();
        assert_eq!(run.results.len(), 2 * f.splits.len());
        for pair in run.results.chunks(2) {
            assert_eq!(pair[0].configuration, INDIVIDUAL);
            assert_eq!(pair[1].configuration, MIXED);
            assert_eq!(pair[0].train_size, pair[1].train_size);
            assert_eq!(pair[0].test_size, pair[1].test_size);
            assert!((0.0..=1.0).contains(&pair[0].f1));
        }
        for (a, m) in &run.individual_models {
            leakage_guard(&m.train_keys, &f.splits[a]).unwrap();
            assert_eq!(m.train_keys.len(), individual_pool(a, &f.rows, &f.splits[a]).len());
        }
    }
}

#[test]
fn mixed_draws_only_other_annotators_and_is_seeded() {
    let f = fixture(SplitMode::Shared);
    let (a, split) = f.splits.iter().next().unwrap();
    let m1 = train_mixed(a, &f.rows, split, Target::Familiarity, 50, &f.settings, 9).unwrap();
    let m2 = train_mixed(a, &f.rows, split, Target::Familiarity, 50, &f.settings, 9).unwrap();
    assert_eq!(m1, m2);
    assert!(m1.train_keys.iter().all(|k| split.is_train(k)));
    let pool = mixed_pool(a, &f.rows, split);
    assert!(pool.iter().all(|r| &r.example.annotator_id != a));
    let err = train_mixed(a, &f.rows, split, Target::Familiarity, pool.len() + 1, &f.settings, 9).unwrap_err();
    assert!(matches!(err, Error::InsufficientRows { .. }));
}

#[test]
fn leakage_is_detected() {
    let f = fixture(SplitMode::Shared);
    let split = f.splits.values().next().unwrap();
    let planted: BTreeSet<TermKey> = split.test_terms.iter().take(1).cloned().collect();
    assert!(matches!(leakage_guard(&planted, split), Err(Error::Leakage(_))));
}

#[test]
fn coefficient_frequency_counts_and_checks_names() {
    let f = fixture(SplitMode::Shared);
    let run = evaluate_target(&f.rows, &f.splits, Target::Familiarity, &f.settings, 3, false).unwrap();
    let models: Vec<&TrainedModel> = run.individual_models.iter().map(|(_, m)| &m.model).collect();
    let freq = coefficient_frequency(&models, 1e-8).unwrap();
    assert_eq!(freq.len(), f.settings.feature_names.len());
    for (j, (name, count)) in freq.iter().enumerate() {
        assert_eq!(name, &f.settings.feature_names[j]);
        let expected = models.iter().filter(|m| m.weights[j].abs() > 1e-8).count();
        assert_eq!(*count, expected);
    }
    let mut renamed = models[0].clone();
    renamed.feature_names[0] = "other".into();
    let mixed = vec![models[0], &renamed];
    assert!(matches!(
        coefficient_frequency(&mixed, 1e-8),
        Err(Error::FeatureMismatch { .. })
    ));
    assert!(coefficient_frequency(&[], 1e-8).unwrap().is_empty());
}

#[test]
fn sweep_validates_sizes() {
    let f = fixture(SplitMode::Shared);
    let t = Target::Familiarity;
    assert!(training_size_sweep(&f.rows, &f.splits, t, &[0], 5, &f.settings, 1, true).is_err());
    let too_big = f.rows.len();
    assert!(matches!(
        training_size_sweep(&f.rows, &f.splits, t, &[too_big], 5, &f.settings, 1, true),
        Err(Error::InsufficientRows { .. })
    ));
    let points = training_size_sweep(&f.rows, &f.splits, t, &[20, 40], 5, &f.settings, 1, true).unwrap();
    assert_eq!(points.len(), 4);
    for p in &points {
        assert_eq!(p.per_repeat.len(), 5);
        assert!(p.std_f1 >= 0.0 && (0.0..=1.0).contains(&p.mean_f1));
    }
    let again = training_size_sweep(&f.rows, &f.splits, t, &[20, 40], 5, &f.settings, 1, true).unwrap();
    assert_eq!(points, again);
}

#[test]
fn report_is_deterministic_across_workers() {
    let f = fixture(SplitMode::Shared);
    let mut config = f.study.config.clone();
    config.eval.sweep_sizes = vec![20];
    let mut reports = Vec::new();
    for workers in [1, 3] {
        config.workers = workers;
        let study = crate::pipeline::load_study(&config).unwrap();
        let rows = crate::pipeline::featurize(&study, vec![]).unwrap();
        assert_eq!(rows, f.rows);
        reports.push(evaluate_all(&study, &rows, None).unwrap());
    }
    assert_eq!(reports[0].results_csv(), reports[1].results_csv());
    assert_eq!(reports[0].sweep_csv(), reports[1].sweep_csv());
    assert!(reports[0].macro_f1(&Target::Familiarity.name(), INDIVIDUAL).is_some());
}

#[test]
fn f1_recount_rejects_inconsistent_value() {
    assert!(check_f1(&[true, false], &[true, true], 2.0 / 3.0).is_ok());
    assert!(check_f1(&[true, false], &[true, true], 0.5).is_err());
}

proptest! {
    #[test]
    fn stratified_sample_keeps_classes(labels in prop::collection::vec(any::<bool>(), 2..60), frac in 0.05f64..1.0, seed: u64) {
        let size = ((labels.len() as f64 * frac).ceil() as usize).clamp(1, labels.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = stratified_sample(&labels, size, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), size);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let pos = labels.iter().filter(|&&l| l).count();
        let picked = idx.iter().filter(|&&i| labels[i]).count();
        if size >= 2 && pos > 0 && pos < labels.len() {
            prop_assert!(picked >= 1 && picked < size);
        }
        let expected = size as f64 * pos as f64 / labels.len() as f64;
        prop_assert!((picked as f64 - expected).abs() <= 1.0 + 1e-9);
    }
}
