//! Loading a run's inputs and turning annotations into feature rows.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::corpus::{load_documents, Document};
use crate::dataset::{check_term_occurrence, load_annotations, AnnotationRecord, LabeledExample, TermWarning};
use crate::error::{Error, Result};
use crate::features::embedding::HttpEmbeddingProvider;
use crate::features::perplexity::{HttpPerplexityProvider, PerplexityProvider};
use crate::features::{
    extract_features, load_readers, CorpusLibrary, EmbeddingSource, EmbeddingStore, EmbeddingVector, FeatureContext,
    FeatureRow, FeatureSchema, PerplexityScorer, ReaderCorpora, ReaderProfile, UnigramPerplexity,
};

/// Store lookups first, then the remote provider for anything missing.
pub struct LayeredEmbeddings {
    store: Option<EmbeddingStore>,
    remote: Option<HttpEmbeddingProvider>,
    dimension: usize,
}

impl LayeredEmbeddings {
    pub fn new(store: Option<EmbeddingStore>, remote: Option<HttpEmbeddingProvider>) -> Result<Self> {
        let dimension = match (&store, &remote) {
            (Some(s), Some(r)) if s.dimension() != r.dimension() => {
                return Err(Error::DimensionMismatch {
                    expected: s.dimension(),
                    actual: r.dimension(),
                })
            }
            (Some(s), _) => s.dimension(),
            (None, Some(r)) => r.dimension(),
            (None, None) => return Err(Error::Config("no embedding store or provider".into())),
        };
        Ok(Self {
            store,
            remote,
            dimension,
        })
    }
}

impl EmbeddingSource for LayeredEmbeddings {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, doc: &Document) -> Result<EmbeddingVector> {
        if let Some(v) = self.store.as_ref().and_then(|s| s.get(&doc.doc_id)) {
            return Ok(v);
        }
        match &self.remote {
            Some(r) => r.embed(doc),
            None => Err(Error::ProviderUnavailable(format!("no embedding for {}", doc.doc_id))),
        }
    }
}

/// Every validated input of a run.
pub struct Study {
    pub config: RunConfig,
    pub abstracts: BTreeMap<String, Document>,
    pub readers: BTreeMap<String, ReaderProfile>,
    pub records: Vec<AnnotationRecord>,
    pub library: CorpusLibrary,
    pub context: FeatureContext,
    /// Annotations whose term does not occur in its abstract.
    pub warnings: Vec<TermWarning>,
}

impl Study {
    pub fn schema(&self) -> &FeatureSchema {
        &self.context.schema
    }

    /// Abstract id to domain label.
    pub fn abstract_domains(&self) -> HashMap<String, String> {
        self.abstracts
            .iter()
            .map(|(k, d)| (k.clone(), d.domain_label.clone()))
            .collect()
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

fn by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str, what: &str) -> Result<BTreeMap<String, T>> {
    let mut map = BTreeMap::new();
    for it in items {
        let k = id(&it).to_string();
        if map.insert(k.clone(), it).is_some() {
            return Err(Error::Validation(format!("duplicate {what} id {k}")));
        }
    }
    Ok(map)
}

fn load_all(config: &RunConfig) -> Result<Study> {
    config.validate_paths()?;
    let tokenizer = config.tokenizer();
    let abstracts = by_id(
        load_documents(&config.resolve(&config.paths.abstracts))?,
        |d| &d.doc_id,
        "abstract",
    )?;
    let readers = by_id(
        load_readers(&config.resolve(&config.paths.readers))?,
        |r| &r.annotator_id,
        "reader",
    )?;
    let records = load_annotations(&config.resolve(&config.paths.annotations))?;
    for r in &records {
        if !abstracts.contains_key(&r.abstract_id) {
            return Err(Error::Validation(format!(
                "annotation refers to unknown abstract {}",
                r.abstract_id
            )));
        }
        if !readers.contains_key(&r.annotator_id) {
            return Err(Error::Validation(format!(
                "annotation refers to unknown reader {}",
                r.annotator_id
            )));
        }
    }
    let texts: HashMap<String, String> = abstracts
        .iter()
        .map(|(k, d)| (k.clone(), d.abstract_text.clone()))
        .collect();
    let warnings = check_term_occurrence(&records, &texts);

    let domain_docs = load_documents(&config.resolve(&config.paths.domain_corpus))?;
    let mut subdomain_docs = HashMap::new();
    for (label, path) in &config.paths.subdomains {
        subdomain_docs.insert(label.clone(), load_documents(&config.resolve(path))?);
    }
    for r in readers.values() {
        if let Some(l) = r.subdomain_labels.iter().find(|l| !subdomain_docs.contains_key(*l)) {
            return Err(Error::Validation(format!(
                "reader {} has subdomain '{l}' with no corpus in paths.subdomains",
                r.annotator_id
            )));
        }
    }
    let publications = load_documents(&config.resolve(&config.paths.publications))?;
    let references = match &config.paths.references {
        Some(p) => load_documents(&config.resolve(p))?,
        None => vec![],
    };
    let library = CorpusLibrary::new(
        domain_docs,
        subdomain_docs,
        publications,
        references,
        tokenizer,
        config.corpus.min_docs,
        config.seed,
    )?;

    let store = match &config.paths.embeddings {
        Some(p) => Some(EmbeddingStore::load(&config.resolve(p))?),
        None => None,
    };
    let remote = match (&config.providers.embedding_url, config.providers.embedding_dimension) {
        (Some(url), Some(dim)) => Some(HttpEmbeddingProvider::new(url.clone(), dim)),
        (Some(url), None) => Some(HttpEmbeddingProvider::new(
            url.clone(),
            store.as_ref().map(|s| s.dimension()).ok_or_else(|| {
                Error::Config("providers.embedding_dimension is required without an embedding store".into())
            })?,
        )),
        _ => None,
    };
    let embeddings: Arc<dyn EmbeddingSource> = Arc::new(LayeredEmbeddings::new(store, remote)?);
    let provider = config
        .providers
        .perplexity_url
        .as_ref()
        .map(|u| Box::new(HttpPerplexityProvider::new(u)) as Box<dyn PerplexityProvider>);
    let perplexity = PerplexityScorer::new(provider, Some(UnigramPerplexity::new(library.domain.clone())));
    let schema = FeatureSchema::new(abstracts.values().map(|d| d.domain_label.clone()));
    let context = FeatureContext::new(schema, embeddings, perplexity, config.corpus.alpha, tokenizer);
    Ok(Study {
        config: config.clone(),
        abstracts,
        readers,
        records,
        library,
        context,
        warnings,
    })
}

/// Validates and loads everything a run needs.
pub fn load_study(config: &RunConfig) -> Result<Study> {
    load_all(config).map_err(|e| e.in_stage("ingest"))
}

/// Feature rows for every annotation, reusing rows in `existing` and computing
/// the rest. Rows come out in annotation-file order whatever the worker count
/// or the resume point; rows of `existing` without an annotation are dropped.
pub fn featurize(study: &Study, existing: Vec<FeatureRow>) -> Result<Vec<FeatureRow>> {
    let run = || -> Result<Vec<FeatureRow>> {
        let done = crate::features::row_keys(&existing);
        let todo: Vec<&AnnotationRecord> = study
            .records
            .iter()
            .filter(|r| !done.contains(&(r.annotator_id.clone(), r.abstract_id.clone(), r.term.clone())))
            .collect();
        let mut corpora: BTreeMap<&str, ReaderCorpora> = BTreeMap::new();
        for r in &todo {
            if !corpora.contains_key(r.annotator_id.as_str()) {
                let reader = &study.readers[&r.annotator_id];
                corpora.insert(&r.annotator_id, study.library.reader_corpora(reader)?);
            }
        }
        let fresh: Vec<FeatureRow> = study.thread_pool()?.install(|| {
            todo.par_iter()
                .map(|r| {
                    let reader = &study.readers[&r.annotator_id];
                    let doc = &study.abstracts[&r.abstract_id];
                    let fv = extract_features(reader, &r.term, doc, &corpora[r.annotator_id.as_str()], &study.context)?;
                    Ok(FeatureRow {
                        example: LabeledExample::from_record(r)?,
                        values: fv.values(),
                    })
                })
                .collect::<Result<_>>()
        })?;
        let mut by_key: HashMap<(String, String, String), FeatureRow> = existing
            .into_iter()
            .chain(fresh)
            .map(|r| {
                (
                    (
                        r.example.annotator_id.clone(),
                        r.example.abstract_id.clone(),
                        r.example.term.clone(),
                    ),
                    r,
                )
            })
            .collect();
        Ok(study
            .records
            .iter()
            .filter_map(|r| by_key.remove(&(r.annotator_id.clone(), r.abstract_id.clone(), r.term.clone())))
            .collect())
    };
    run().map_err(|e| e.in_stage("featurize"))
}
