//! Prompt-strategy evaluation on each annotator's test terms.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::check_f1;
use super::report::AnnotatorResult;
use crate::corpus::Document;
use crate::dataset::{binarize_rating, derive_seed, AnnotationRecord, Familiarity, LabeledExample, SplitSpec, Target};
use crate::error::{Error, Result};
use crate::features::ReaderProfile;
use crate::llm::{
    classify_familiarity_llm, classify_info_need_llm, related_data, ChatClient, FewShotExample, PromptExamples,
    PromptGranularity, PromptSpec, Strategy,
};
use crate::metrics::Confusion;
use crate::pipeline::Study;

/// The most frequent domain label among the reader's publications, ties
/// broken alphabetically.
pub fn reader_domain(study: &Study, reader: &ReaderProfile) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in &reader.publication_ids {
        if let Some(d) = study.library.publication(id) {
            *counts.entry(d.domain_label.as_str()).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(d, _)| d.to_string())
}

fn sample<T: Clone>(pool: Vec<T>, n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    pool.choose_multiple(rng, n).cloned().collect()
}

/// Up to `n_examples` publications for the context-enhanced strategy: the
/// reader's own, or random abstracts from their subdomain or domain corpus.
pub fn select_publications(
    study: &Study,
    spec: &PromptSpec,
    reader: &ReaderProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Document>> {
    let pool: Vec<Document> = match spec.granularity {
        Some(PromptGranularity::Individual) | None => reader
            .publication_ids
            .iter()
            .filter_map(|id| study.library.publication(id).cloned())
            .collect(),
        Some(PromptGranularity::Subdomain) => study
            .library
            .subdomain_corpus(&reader.subdomain_labels)?
            .documents()
            .to_vec(),
        Some(PromptGranularity::Domain) => {
            let domain = reader_domain(study, reader);
            study
                .library
                .domain
                .documents()
                .iter()
                .filter(|d| Some(&d.domain_label) == domain.as_ref())
                .cloned()
                .collect()
        }
    };
    Ok(sample(pool, spec.n_examples, rng))
}

/// Up to `n_examples` labeled training-split examples for the few-shot
/// strategy: the reader's own ratings, or those of other annotators sharing
/// a subdomain label or the reader's domain.
pub fn select_examples(
    study: &Study,
    spec: &PromptSpec,
    reader: &ReaderProfile,
    split: &SplitSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FewShotExample>> {
    let me = reader.annotator_id.as_str();
    let eligible: BTreeSet<&str> = match spec.granularity {
        Some(PromptGranularity::Individual) | None => BTreeSet::from([me]),
        Some(PromptGranularity::Subdomain) => study
            .readers
            .values()
            .filter(|r| r.annotator_id != me && r.subdomain_labels.iter().any(|l| reader.subdomain_labels.contains(l)))
            .map(|r| r.annotator_id.as_str())
            .collect(),
        Some(PromptGranularity::Domain) => {
            let domain = reader_domain(study, reader);
            study
                .readers
                .values()
                .filter(|r| r.annotator_id != me && reader_domain(study, r) == domain)
                .map(|r| r.annotator_id.as_str())
                .collect()
        }
    };
    let pool: Vec<&AnnotationRecord> = study
        .records
        .iter()
        .filter(|r| eligible.contains(r.annotator_id.as_str()) && split.is_train(&r.key()))
        .collect();
    sample(pool, spec.n_examples, rng)
        .into_iter()
        .map(|r| {
            Ok(FewShotExample {
                abstract_id: r.abstract_id.clone(),
                term: r.term.clone(),
                abstract_text: study.abstracts[&r.abstract_id].abstract_text.clone(),
                label: binarize_rating(r.rating as i64)?,
            })
        })
        .collect()
}

fn examples_for(study: &Study, spec: &PromptSpec, reader: &ReaderProfile, split: &SplitSpec) -> Result<PromptExamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        study.config.seed,
        &format!("{}:{}", spec.label(), reader.annotator_id),
    ));
    Ok(match spec.strategy {
        Strategy::ContextEnhanced => PromptExamples {
            publications: select_publications(study, spec, reader, &mut rng)?,
            labeled: vec![],
        },
        Strategy::FewShot => PromptExamples {
            publications: vec![],
            labeled: select_examples(study, spec, reader, split, &mut rng)?,
        },
        Strategy::Baseline | Strategy::Metadata => PromptExamples::default(),
    })
}

/// F1 of one prompt strategy for every annotator, on at most
/// `llm.max_test_rows` test terms each (0 means all).
pub fn evaluate_llm(
    study: &Study,
    splits: &BTreeMap<String, SplitSpec>,
    spec: &PromptSpec,
    target: Target,
    client: &ChatClient,
) -> Result<Vec<AnnotatorResult>> {
    spec.validate()?;
    let limit = match study.config.llm.max_test_rows {
        0 => usize::MAX,
        n => n,
    };
    splits
        .iter()
        .map(|(a, split)| {
            let reader = study
                .readers
                .get(a)
                .ok_or_else(|| Error::Validation(format!("no reader profile for {a}")))?;
            let examples = examples_for(study, spec, reader, split)?;
            let test: Vec<&AnnotationRecord> = study
                .records
                .iter()
                .filter(|r| &r.annotator_id == a && split.is_test(&r.key()))
                .take(limit)
                .collect();
            let (pred, gold): (Vec<bool>, Vec<bool>) = test
                .par_iter()
                .map(|r| {
                    let doc = &study.abstracts[&r.abstract_id];
                    let pred = match target {
                        Target::Familiarity => {
                            classify_familiarity_llm(spec, &r.term, doc, reader, &examples, split, client)?
                                == Familiarity::Unfamiliar
                        }
                        Target::Need(n) => {
                            let related = related_data(spec, reader, &examples, split)?;
                            classify_info_need_llm(n, &r.term, doc, &related, client)?
                        }
                    };
                    Ok((pred, LabeledExample::from_record(r)?.is_positive(target)))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            let c = Confusion::tally(&pred, &gold, &true)?;
            check_f1(&pred, &gold, c.f1())?;
            Ok(AnnotatorResult::from_confusion(
                target,
                a,
                &spec.label(),
                0,
                test.len(),
                c,
            ))
        })
        .collect()
}
