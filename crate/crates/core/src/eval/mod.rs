//! Experiment harness: individual and mixed (leave-one-annotator-out) models,
//! F1 on the held-out terms, coefficient frequencies, and training-size sweeps.

mod llm_eval;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use llm_eval::{evaluate_llm, reader_domain, select_examples, select_publications};
pub use report::{AnnotatorResult, CoefficientCount, EvalReport, MacroF1, SweepPoint};

pub use crate::metrics::f1_score;

use crate::config::ModelSettings;
use crate::dataset::{derive_seed, splits_for, SplitSpec, Target, TermKey};
use crate::error::{Error, Result};
use crate::features::{FeatureRow, FeatureSchema};
use crate::llm::ChatClient;
use crate::metrics::Confusion;
use crate::model::{fit_model, CdOptions, CvSummary, LambdaPolicy, TrainedModel};
use crate::pipeline::Study;

pub const INDIVIDUAL: &str = "individual";
pub const MIXED: &str = "mixed";

/// Everything needed to fit one model apart from its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub feature_names: Vec<String>,
    pub passthrough: Vec<bool>,
    pub policy: LambdaPolicy,
    pub cd: CdOptions,
    pub threshold: f64,
    pub eps: f64,
}

impl TrainSettings {
    pub fn new(schema: &FeatureSchema, m: &ModelSettings) -> Self {
        Self {
            feature_names: schema.names(),
            passthrough: schema.passthrough_mask(),
            policy: m.policy(),
            cd: m.cd_options(0),
            threshold: m.threshold,
            eps: m.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: TrainedModel,
    pub cv: Option<CvSummary>,
    /// (abstract, term) keys of the training rows.
    pub train_keys: BTreeSet<TermKey>,
}

fn fit_rows(
    rows: &[&FeatureRow],
    target: Target,
    settings: &TrainSettings,
    seed: u64,
    who: &str,
) -> Result<FittedModel> {
    if rows.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.example.is_positive(target) as u8 as f64)
        .collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SingleClass(who.to_string()));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    let opts = CdOptions { seed, ..settings.cd };
    let (model, cv) = fit_model(
        &settings.feature_names,
        &x,
        &y,
        &settings.passthrough,
        &settings.policy,
        &opts,
    )?;
    Ok(FittedModel {
        model,
        cv,
        train_keys: rows.iter().map(|r| r.example.key()).collect(),
    })
}

/// The annotator's own rows on training-split terms.
pub fn individual_pool<'a>(annotator: &str, rows: &'a [FeatureRow], split: &SplitSpec) -> Vec<&'a FeatureRow> {
    rows.iter()
        .filter(|r| r.example.annotator_id == annotator && split.is_train(&r.example.key()))
        .collect()
}

/// Other annotators' rows on training-split terms.
pub fn mixed_pool<'a>(annotator: &str, rows: &'a [FeatureRow], split: &SplitSpec) -> Vec<&'a FeatureRow> {
    rows.iter()
        .filter(|r| r.example.annotator_id != annotator && split.is_train(&r.example.key()))
        .collect()
}

/// The annotator's rows on test-split terms.
pub fn test_rows<'a>(annotator: &str, rows: &'a [FeatureRow], split: &SplitSpec) -> Vec<&'a FeatureRow> {
    rows.iter()
        .filter(|r| r.example.annotator_id == annotator && split.is_test(&r.example.key()))
        .collect()
}

/// Model trained only on the annotator's training-split rows.
pub fn train_individual(
    annotator: &str,
    rows: &[FeatureRow],
    split: &SplitSpec,
    target: Target,
    settings: &TrainSettings,
    seed: u64,
) -> Result<FittedModel> {
    let pool = individual_pool(annotator, rows, split);
    fit_rows(
        &pool,
        target,
        settings,
        derive_seed(seed, &format!("cv:{INDIVIDUAL}:{annotator}")),
        annotator,
    )
}

/// Model trained on exactly `size` rows drawn uniformly without replacement
/// from the other annotators' training-split rows.
pub fn train_mixed(
    annotator: &str,
    rows: &[FeatureRow],
    split: &SplitSpec,
    target: Target,
    size: usize,
    settings: &TrainSettings,
    seed: u64,
) -> Result<FittedModel> {
    let pool = mixed_pool(annotator, rows, split);
    if pool.is_empty() {
        return Err(Error::Validation(format!(
            "no other annotator has training rows for {annotator}"
        )));
    }
    if pool.len() < size {
        return Err(Error::InsufficientRows {
            required: size,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{MIXED}:{annotator}")));
    let mut idx = sample(&mut rng, pool.len(), size).into_vec();
    idx.sort_unstable();
    let chosen: Vec<&FeatureRow> = idx.into_iter().map(|i| pool[i]).collect();
    let fitted = fit_rows(
        &chosen,
        target,
        settings,
        derive_seed(seed, &format!("cv:{MIXED}:{annotator}")),
        annotator,
    )?;
    if fitted.train_keys.len() > size || chosen.len() != size {
        return Err(Error::Validation("mixed subsample has the wrong size".into()));
    }
    Ok(fitted)
}

/// Fails if any training key is a test-split key.
pub fn leakage_guard(train_keys: &BTreeSet<TermKey>, split: &SplitSpec) -> Result<()> {
    match train_keys.iter().find(|k| split.is_test(k)) {
        Some(k) => Err(Error::Leakage(format!(
            "({}, {}) is in both train and test",
            k.abstract_id, k.term
        ))),
        None => Ok(()),
    }
}

/// Confusion counts of `model` on `rows`, with F1 cross-checked against a
/// second, independent tally.
pub fn score_model(
    model: &TrainedModel,
    rows: &[&FeatureRow],
    target: Target,
    settings: &TrainSettings,
) -> Result<Confusion> {
    let pred: Vec<bool> = rows
        .iter()
        .map(|r| model.predict_positive(&settings.feature_names, &r.values, settings.threshold))
        .collect::<Result<_>>()?;
    let gold: Vec<bool> = rows.iter().map(|r| r.example.is_positive(target)).collect();
    let c = Confusion::tally(&pred, &gold, &true)?;
    check_f1(&pred, &gold, c.f1())?;
    Ok(c)
}

pub(crate) fn check_f1(pred: &[bool], gold: &[bool], f1: f64) -> Result<()> {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count();
    let predicted = pred.iter().filter(|p| **p).count();
    let actual = gold.iter().filter(|g| **g).count();
    let recount = if predicted + actual == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (predicted + actual) as f64
    };
    if (recount - f1).abs() > 1e-12 || !(0.0..=1.0).contains(&f1) {
        return Err(Error::Validation(format!("F1 {f1} disagrees with recount {recount}")));
    }
    Ok(())
}

/// Per feature, the number of models with `|weight| > eps`, in feature order.
pub fn coefficient_frequency(models: &[&TrainedModel], eps: f64) -> Result<Vec<(String, usize)>> {
    let Some(first) = models.first() else {
        return Ok(vec![]);
    };
    if let Some(m) = models.iter().find(|m| m.feature_names != first.feature_names) {
        return Err(Error::FeatureMismatch {
            expected: first.feature_names.clone(),
            actual: m.feature_names.clone(),
        });
    }
    Ok(first
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), models.iter().filter(|m| m.weights[j].abs() > eps).count()))
        .collect())
}

/// `size` indices from `labels`, allocated to classes in proportion to their
/// frequency, keeping at least one of each class when `size >= 2`.
pub fn stratified_sample(labels: &[bool], size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::Validation("sample size must be positive".into()));
    }
    if size > labels.len() {
        return Err(Error::InsufficientRows {
            required: size,
            available: labels.len(),
        });
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let mut k_pos = (size as f64 * pos.len() as f64 / labels.len() as f64).round() as usize;
    if size >= 2 && !pos.is_empty() && !neg.is_empty() {
        k_pos = k_pos.clamp(1, size - 1);
    }
    k_pos = k_pos.min(pos.len()).max(size.saturating_sub(neg.len()));
    let mut out: Vec<usize> = sample(rng, pos.len(), k_pos).into_iter().map(|i| pos[i]).collect();
    out.extend(sample(rng, neg.len(), size - k_pos).into_iter().map(|i| neg[i]));
    out.sort_unstable();
    Ok(out)
}

struct SweepJob<'a> {
    annotator: &'a str,
    configuration: &'static str,
    size: usize,
    repeat: usize,
}

/// Mean and standard deviation of macro F1 (over annotators) across
/// `repeats` seeded subsamples per size, for individual and mixed training.
#[allow(clippy::too_many_arguments)]
pub fn training_size_sweep(
    rows: &[FeatureRow],
    splits: &BTreeMap<String, SplitSpec>,
    target: Target,
    sizes: &[usize],
    repeats: usize,
    settings: &TrainSettings,
    seed: u64,
    mixed: bool,
) -> Result<Vec<SweepPoint>> {
    if sizes.contains(&0) {
        return Err(Error::Validation("training size 0 is not allowed".into()));
    }
    if repeats == 0 {
        return Err(Error::Validation("sweep needs at least one seed".into()));
    }
    let configurations: &[&'static str] = if mixed { &[INDIVIDUAL, MIXED] } else { &[INDIVIDUAL] };
    for (a, split) in splits {
        let own = individual_pool(a, rows, split).len();
        if let Some(&s) = sizes.iter().find(|&&s| s > own) {
            return Err(Error::InsufficientRows {
                required: s,
                available: own,
            });
        }
    }
    let mut jobs = Vec::new();
    for &size in sizes {
        for &configuration in configurations {
            for repeat in 0..repeats {
                for a in splits.keys() {
                    jobs.push(SweepJob {
                        annotator: a,
                        configuration,
                        size,
                        repeat,
                    });
                }
            }
        }
    }
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|j| {
            let split = &splits[j.annotator];
            let pool = if j.configuration == INDIVIDUAL {
                individual_pool(j.annotator, rows, split)
            } else {
                mixed_pool(j.annotator, rows, split)
            };
            let label = format!("sweep:{}:{}:{}:{}", j.configuration, j.size, j.repeat, j.annotator);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &label));
            let labels: Vec<bool> = pool.iter().map(|r| r.example.is_positive(target)).collect();
            let chosen: Vec<&FeatureRow> = stratified_sample(&labels, j.size, &mut rng)?
                .into_iter()
                .map(|i| pool[i])
                .collect();
            let test = test_rows(j.annotator, rows, split);
            match fit_rows(
                &chosen,
                target,
                settings,
                derive_seed(seed, &format!("cv:{label}")),
                j.annotator,
            ) {
                Ok(m) => Ok(score_model(&m.model, &test, target, settings)?.f1()),
                // a pool with one class has nothing to learn: predict that class
                Err(Error::SingleClass(_)) => {
                    let constant = chosen[0].example.is_positive(target);
                    let gold: Vec<bool> = test.iter().map(|r| r.example.is_positive(target)).collect();
                    Ok(Confusion::tally(&vec![constant; gold.len()], &gold, &true)?.f1())
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let n_annotators = splits.len();
    let mut points = Vec::new();
    let mut k = 0;
    for &size in sizes {
        for &configuration in configurations {
            let per_repeat: Vec<f64> = (0..repeats)
                .map(|_| {
                    let m = scores[k..k + n_annotators].iter().sum::<f64>() / n_annotators as f64;
                    k += n_annotators;
                    m
                })
                .collect();
            let mean = per_repeat.iter().sum::<f64>() / repeats as f64;
            let var = if repeats > 1 {
                per_repeat.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64
            } else {
                0.0
            };
            points.push(SweepPoint {
                target: target.name(),
                configuration: configuration.into(),
                size,
                mean_f1: mean,
                std_f1: var.sqrt(),
                repeats,
                per_repeat,
            });
        }
    }
    Ok(points)
}

/// Supervised results for one target, plus the fitted individual models.
#[derive(Debug, Clone)]
pub struct TargetRun {
    pub results: Vec<AnnotatorResult>,
    pub individual_models: Vec<(String, FittedModel)>,
}

/// Individual and (optionally) mixed models for every annotator.
pub fn evaluate_target(
    rows: &[FeatureRow],
    splits: &BTreeMap<String, SplitSpec>,
    target: Target,
    settings: &TrainSettings,
    seed: u64,
    mixed: bool,
) -> Result<TargetRun> {
    let per: Vec<(Vec<AnnotatorResult>, (String, FittedModel))> = splits
        .par_iter()
        .map(|(a, split)| {
            let test = test_rows(a, rows, split);
            if test.is_empty() {
                return Err(Error::Validation(format!("annotator {a} has no test rows")));
            }
            let ind = train_individual(a, rows, split, target, settings, seed)?;
            leakage_guard(&ind.train_keys, split)?;
            let size = individual_pool(a, rows, split).len();
            let mut out = vec![AnnotatorResult::new(
                target,
                a,
                INDIVIDUAL,
                size,
                &test,
                &ind,
                score_model(&ind.model, &test, target, settings)?,
                settings.eps,
            )];
            if mixed {
                let mx = train_mixed(a, rows, split, target, size, settings, seed)?;
                leakage_guard(&mx.train_keys, split)?;
                let c = score_model(&mx.model, &test, target, settings)?;
                let r = AnnotatorResult::new(target, a, MIXED, size, &test, &mx, c, settings.eps);
                if r.train_size != out[0].train_size {
                    return Err(Error::Validation(format!(
                        "mixed size {} differs from individual size {}",
                        r.train_size, out[0].train_size
                    )));
                }
                out.push(r);
            }
            Ok((out, (a.clone(), ind)))
        })
        .collect::<Result<_>>()?;
    let mut results = Vec::new();
    let mut individual_models = Vec::new();
    for (r, m) in per {
        results.extend(r);
        individual_models.push(m);
    }
    Ok(TargetRun {
        results,
        individual_models,
    })
}

/// The full protocol for every configured target: individual and mixed
/// models, coefficient frequencies, the training-size sweep on the first
/// target, and prompt strategies when a client is given and enabled.
pub fn evaluate_all(study: &Study, rows: &[FeatureRow], llm: Option<&ChatClient>) -> Result<EvalReport> {
    let run = || -> Result<EvalReport> {
        let config = &study.config;
        let splits = splits_for(
            &study.records,
            config.split.mode,
            config.split.train_fraction,
            config.seed,
        )?;
        let settings = TrainSettings::new(study.schema(), &config.model);
        let targets = config.eval.parsed_targets()?;
        let pool = study.thread_pool()?;
        let mut report = EvalReport::new(config);
        for (ti, &target) in targets.iter().enumerate() {
            let run =
                pool.install(|| evaluate_target(rows, &splits, target, &settings, config.seed, config.eval.mixed))?;
            let models: Vec<&TrainedModel> = run.individual_models.iter().map(|(_, m)| &m.model).collect();
            for (feature, count) in coefficient_frequency(&models, settings.eps)? {
                report.coefficient_frequency.push(CoefficientCount {
                    target: target.name(),
                    feature,
                    count,
                    models: models.len(),
                });
            }
            report.results.extend(run.results);
            if ti == 0 && !config.eval.sweep_sizes.is_empty() {
                let points = pool.install(|| {
                    training_size_sweep(
                        rows,
                        &splits,
                        target,
                        &config.eval.sweep_sizes,
                        config.eval.sweep_seeds,
                        &settings,
                        config.seed,
                        config.eval.mixed,
                    )
                })?;
                report.sweep.extend(points);
            }
            if let Some(client) = llm.filter(|_| config.llm.enabled) {
                for spec in &config.llm.strategies {
                    let r = pool.install(|| evaluate_llm(study, &splits, spec, target, client))?;
                    report.results.extend(r);
                }
            }
        }
        report.finish();
        Ok(report)
    };
    run().map_err(|e| e.in_stage("eval"))
}

#[cfg(test)]
mod tests;
