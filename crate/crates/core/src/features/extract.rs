//! Feature vectors for (reader, term, abstract) triples.
//!
//! Column order is fixed by [`FeatureSchema`]:
//!
//! ```text
//! freq_{domain,subdomain,individual}      log1p(raw phrase count)
//! spec_{domain,subdomain,individual}      ln P_abstract(t) / P_corpus(t)
//! embsim_{domain,subdomain,individual}    min L2 distance abstract -> corpus docs
//! fk_score, ppl_score                     passage readability
//! abstract_domain=<D> ...                 one-hot over the known domains
//! first_pub_year, pub_count, avg_citation_count
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{build_corpus, specificity, supplement_individual, Corpus, Document, Granularity, TokenizerConfig};
use crate::dataset::derive_seed;
use crate::error::{Error, Result};
use crate::features::embedding::{min_embedding_distance, EmbeddingSource, EmbeddingVector};
use crate::features::perplexity::PerplexityScorer;
use crate::features::readability::flesch_kincaid;

pub const FEATURE_SCHEMA_VERSION: &str = "fv1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderProfile {
    pub annotator_id: String,
    pub subdomain_labels: Vec<String>,
    pub publication_ids: Vec<String>,
    pub first_pub_year: i32,
    pub pub_count: u32,
    pub avg_citation_count: f64,
}

fn current_year() -> i32 {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    1970 + (secs / 31_556_952) as i32
}

impl ReaderProfile {
    pub fn validate(&self) -> Result<()> {
        if self.annotator_id.is_empty() {
            return Err(Error::Validation("reader with empty annotator_id".into()));
        }
        if self.pub_count < 1 {
            return Err(Error::Validation(format!(
                "reader {}: pub_count must be at least 1",
                self.annotator_id
            )));
        }
        if self.first_pub_year > current_year() {
            return Err(Error::Validation(format!(
                "reader {}: first_pub_year {} is in the future",
                self.annotator_id, self.first_pub_year
            )));
        }
        if !(self.avg_citation_count.is_finite() && self.avg_citation_count >= 0.0) {
            return Err(Error::Validation(format!(
                "reader {}: avg_citation_count must be finite and nonnegative",
                self.annotator_id
            )));
        }
        Ok(())
    }
}

/// Reads one validated [`ReaderProfile`] per JSONL line.
pub fn load_readers(path: &Path) -> Result<Vec<ReaderProfile>> {
    let file = File::open(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
    let label = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Line {
            path: label.clone(),
            line: i + 1,
            message,
        };
        let r: ReaderProfile = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        r.validate().map_err(|e| err(e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

/// Column layout of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: String,
    pub domains: Vec<String>,
}

const GRANULAR: [&str; 9] = [
    "freq_domain",
    "freq_subdomain",
    "freq_individual",
    "spec_domain",
    "spec_subdomain",
    "spec_individual",
    "embsim_domain",
    "embsim_subdomain",
    "embsim_individual",
];
const READABILITY: [&str; 2] = ["fk_score", "ppl_score"];
const METADATA: [&str; 3] = ["first_pub_year", "pub_count", "avg_citation_count"];

impl FeatureSchema {
    pub fn new(domains: impl IntoIterator<Item = String>) -> Self {
        let domains: BTreeSet<String> = domains.into_iter().collect();
        Self {
            version: FEATURE_SCHEMA_VERSION.into(),
            domains: domains.into_iter().collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = GRANULAR.iter().chain(&READABILITY).map(|s| s.to_string()).collect();
        names.extend(self.domains.iter().map(|d| format!("abstract_domain={d}")));
        names.extend(METADATA.iter().map(|s| s.to_string()));
        names
    }

    pub fn width(&self) -> usize {
        GRANULAR.len() + READABILITY.len() + self.domains.len() + METADATA.len()
    }

    /// True for the one-hot columns, which are not standardized.
    pub fn passthrough_mask(&self) -> Vec<bool> {
        let start = GRANULAR.len() + READABILITY.len();
        (0..self.width())
            .map(|j| j >= start && j < start + self.domains.len())
            .collect()
    }

    fn one_hot(&self, domain: &str) -> Result<Vec<f64>> {
        let pos = self
            .domains
            .iter()
            .position(|d| d == domain)
            .ok_or_else(|| Error::Validation(format!("unknown abstract domain '{domain}'")))?;
        let mut v = vec![0.0; self.domains.len()];
        v[pos] = 1.0;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub freq_domain: f64,
    pub freq_subdomain: f64,
    pub freq_individual: f64,
    pub spec_domain: f64,
    pub spec_subdomain: f64,
    pub spec_individual: f64,
    pub embsim_domain: f64,
    pub embsim_subdomain: f64,
    pub embsim_individual: f64,
    pub fk_score: f64,
    pub ppl_score: f64,
    pub abstract_domain: Vec<f64>,
    pub first_pub_year: f64,
    pub pub_count: f64,
    pub avg_citation_count: f64,
}

impl FeatureVector {
    /// Values in schema order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.freq_domain,
            self.freq_subdomain,
            self.freq_individual,
            self.spec_domain,
            self.spec_subdomain,
            self.spec_individual,
            self.embsim_domain,
            self.embsim_subdomain,
            self.embsim_individual,
            self.fk_score,
            self.ppl_score,
        ];
        v.extend(&self.abstract_domain);
        v.extend([self.first_pub_year, self.pub_count, self.avg_citation_count]);
        v
    }

    pub fn from_values(schema: &FeatureSchema, v: &[f64]) -> Result<Self> {
        if v.len() != schema.width() {
            return Err(Error::Shape(format!(
                "{} values for {} columns",
                v.len(),
                schema.width()
            )));
        }
        let k = schema.domains.len();
        let fv = Self {
            freq_domain: v[0],
            freq_subdomain: v[1],
            freq_individual: v[2],
            spec_domain: v[3],
            spec_subdomain: v[4],
            spec_individual: v[5],
            embsim_domain: v[6],
            embsim_subdomain: v[7],
            embsim_individual: v[8],
            fk_score: v[9],
            ppl_score: v[10],
            abstract_domain: v[11..11 + k].to_vec(),
            first_pub_year: v[11 + k],
            pub_count: v[12 + k],
            avg_citation_count: v[13 + k],
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        if self.abstract_domain.iter().sum::<f64>() != 1.0 {
            return Err(Error::Validation("abstract_domain one-hot does not sum to 1".into()));
        }
        Ok(())
    }
}

/// The three background corpora standing for one reader's knowledge.
#[derive(Debug, Clone)]
pub struct ReaderCorpora {
    pub domain: Arc<Corpus>,
    pub subdomain: Arc<Corpus>,
    pub individual: Arc<Corpus>,
}

/// Source documents from which per-reader corpora are assembled.
pub struct CorpusLibrary {
    pub domain: Arc<Corpus>,
    subdomain_docs: HashMap<String, Vec<Document>>,
    publications: HashMap<String, Document>,
    references: HashMap<String, Document>,
    pub tokenizer: TokenizerConfig,
    pub min_docs: usize,
    pub seed: u64,
    union_cache: Mutex<HashMap<Vec<String>, Arc<Corpus>>>,
}

impl CorpusLibrary {
    pub fn new(
        domain_docs: Vec<Document>,
        subdomain_docs: HashMap<String, Vec<Document>>,
        publications: Vec<Document>,
        references: Vec<Document>,
        tokenizer: TokenizerConfig,
        min_docs: usize,
        seed: u64,
    ) -> Result<Self> {
        let domain = Arc::new(build_corpus(domain_docs, "domain", Granularity::Domain, tokenizer)?);
        Ok(Self {
            domain,
            subdomain_docs,
            publications: publications.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            references: references.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
            tokenizer,
            min_docs,
            seed,
            union_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn subdomain_labels(&self) -> Vec<&String> {
        let mut v: Vec<_> = self.subdomain_docs.keys().collect();
        v.sort();
        v
    }

    pub fn publication(&self, doc_id: &str) -> Option<&Document> {
        self.publications.get(doc_id)
    }

    /// Union corpus over the reader's subdomain labels, shared between readers
    /// with the same label set.
    pub fn subdomain_corpus(&self, labels: &[String]) -> Result<Arc<Corpus>> {
        let mut key: Vec<String> = labels.to_vec();
        key.sort();
        key.dedup();
        if key.is_empty() {
            return Err(Error::Validation("reader has no subdomain labels".into()));
        }
        if let Some(c) = self.union_cache.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let mut seen = std::collections::HashSet::new();
        let mut docs = Vec::new();
        for label in &key {
            let pool = self
                .subdomain_docs
                .get(label)
                .ok_or_else(|| Error::Validation(format!("no subdomain corpus for '{label}'")))?;
            docs.extend(pool.iter().filter(|d| seen.insert(d.doc_id.clone())).cloned());
        }
        let c = Arc::new(build_corpus(
            docs,
            format!("subdomain:{}", key.join("+")),
            Granularity::Subdomain,
            self.tokenizer,
        )?);
        self.union_cache.lock().unwrap().insert(key, c.clone());
        Ok(c)
    }

    /// The reader's own publications, supplemented from their cited references.
    pub fn individual_corpus(&self, reader: &ReaderProfile) -> Result<Arc<Corpus>> {
        let pubs: Vec<Document> = reader
            .publication_ids
            .iter()
            .map(|id| {
                self.publications.get(id).cloned().ok_or_else(|| {
                    Error::Validation(format!("reader {}: unknown publication {id}", reader.annotator_id))
                })
            })
            .collect::<Result<_>>()?;
        let mut ref_ids: Vec<&String> = pubs.iter().flat_map(|p| &p.reference_ids).collect();
        ref_ids.sort();
        ref_ids.dedup();
        let refs: Vec<Document> = ref_ids
            .into_iter()
            .filter_map(|id| self.references.get(id).or_else(|| self.publications.get(id)).cloned())
            .collect();
        let c = supplement_individual(
            pubs,
            &refs,
            self.min_docs,
            derive_seed(self.seed, &reader.annotator_id),
            format!("individual:{}", reader.annotator_id),
            self.tokenizer,
        )?;
        Ok(Arc::new(c))
    }

    pub fn reader_corpora(&self, reader: &ReaderProfile) -> Result<ReaderCorpora> {
        Ok(ReaderCorpora {
            domain: self.domain.clone(),
            subdomain: self.subdomain_corpus(&reader.subdomain_labels)?,
            individual: self.individual_corpus(reader)?,
        })
    }
}

/// Providers and caches shared across feature extraction calls.
pub struct FeatureContext {
    pub schema: FeatureSchema,
    pub embeddings: Arc<dyn EmbeddingSource>,
    pub perplexity: PerplexityScorer,
    pub alpha: f64,
    pub tokenizer: TokenizerConfig,
    abstract_corpora: Mutex<HashMap<String, Arc<Corpus>>>,
    pools: Mutex<HashMap<String, Arc<Vec<EmbeddingVector>>>>,
}

impl FeatureContext {
    pub fn new(
        schema: FeatureSchema,
        embeddings: Arc<dyn EmbeddingSource>,
        perplexity: PerplexityScorer,
        alpha: f64,
        tokenizer: TokenizerConfig,
    ) -> Self {
        Self {
            schema,
            embeddings,
            perplexity,
            alpha,
            tokenizer,
            abstract_corpora: Mutex::new(HashMap::new()),
            pools: Mutex::new(HashMap::new()),
        }
    }

    pub fn abstract_corpus(&self, abstract_doc: &Document) -> Result<Arc<Corpus>> {
        if let Some(c) = self.abstract_corpora.lock().unwrap().get(&abstract_doc.doc_id) {
            return Ok(c.clone());
        }
        let c = Arc::new(build_corpus(
            vec![abstract_doc.clone()],
            format!("abstract:{}", abstract_doc.doc_id),
            Granularity::Abstract,
            self.tokenizer,
        )?);
        self.abstract_corpora
            .lock()
            .unwrap()
            .insert(abstract_doc.doc_id.clone(), c.clone());
        Ok(c)
    }

    fn pool(&self, corpus: &Corpus) -> Result<Arc<Vec<EmbeddingVector>>> {
        if let Some(p) = self.pools.lock().unwrap().get(corpus.corpus_id()) {
            return Ok(p.clone());
        }
        let p: Vec<EmbeddingVector> = corpus
            .documents()
            .iter()
            .map(|d| self.embeddings.embed(d))
            .collect::<Result<_>>()?;
        let p = Arc::new(p);
        self.pools
            .lock()
            .unwrap()
            .insert(corpus.corpus_id().to_string(), p.clone());
        Ok(p)
    }
}

/// Computes every feature for one (reader, term, abstract) triple.
pub fn extract_features(
    reader: &ReaderProfile,
    term: &str,
    abstract_doc: &Document,
    corpora: &ReaderCorpora,
    ctx: &FeatureContext,
) -> Result<FeatureVector> {
    let target = ctx
        .abstract_corpus(abstract_doc)
        .map_err(|e| e.in_feature("abstract_corpus"))?;
    let freq = |c: &Corpus, name| -> Result<f64> {
        Ok((c.phrase_count(term).map_err(|e| e.in_feature(name))? as f64).ln_1p())
    };
    let spec = |c: &Corpus, name| specificity(term, &target, c, ctx.alpha).map_err(|e| e.in_feature(name));
    let query = ctx
        .embeddings
        .embed(abstract_doc)
        .map_err(|e| e.in_feature("abstract_embedding"))?;
    let embsim = |c: &Corpus, name| -> Result<f64> {
        let pool = ctx.pool(c).map_err(|e| e.in_feature(name))?;
        min_embedding_distance(&query, &pool).map_err(|e| e.in_feature(name))
    };
    let fv = FeatureVector {
        freq_domain: freq(&corpora.domain, "freq_domain")?,
        freq_subdomain: freq(&corpora.subdomain, "freq_subdomain")?,
        freq_individual: freq(&corpora.individual, "freq_individual")?,
        spec_domain: spec(&corpora.domain, "spec_domain")?,
        spec_subdomain: spec(&corpora.subdomain, "spec_subdomain")?,
        spec_individual: spec(&corpora.individual, "spec_individual")?,
        embsim_domain: embsim(&corpora.domain, "embsim_domain")?,
        embsim_subdomain: embsim(&corpora.subdomain, "embsim_subdomain")?,
        embsim_individual: embsim(&corpora.individual, "embsim_individual")?,
        fk_score: flesch_kincaid(&abstract_doc.abstract_text).map_err(|e| e.in_feature("fk_score"))?,
        ppl_score: ctx
            .perplexity
            .score(&abstract_doc.abstract_text)
            .map_err(|e| e.in_feature("ppl_score"))?,
        abstract_domain: ctx
            .schema
            .one_hot(&abstract_doc.domain_label)
            .map_err(|e| e.in_feature("abstract_domain"))?,
        first_pub_year: reader.first_pub_year as f64,
        pub_count: reader.pub_count as f64,
        avg_citation_count: reader.avg_citation_count,
    };
    fv.validate()?;
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::embedding::EmbeddingStore;

    fn doc(id: &str, domain: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            title: id.into(),
            abstract_text: text.into(),
            year: 2020,
            domain_label: domain.into(),
            venue: None,
            citation_count: 1,
            author_ids: vec![],
            reference_ids: vec![],
        }
    }

    fn setup(individual_text: &str) -> (ReaderProfile, Document, ReaderCorpora, FeatureContext) {
        let abstract_doc = doc("abs", "Chemistry", "Ionic liquids dissolve cellulose. They are salts.");
        let mk = |id: &str, text: &str, g| {
            Arc::new(build_corpus(vec![doc(id, "CS", text)], id, g, TokenizerConfig::default()).unwrap())
        };
        let corpora = ReaderCorpora {
            domain: mk("dom", "neural networks learn representations", Granularity::Domain),
            subdomain: mk("sub", "parsing sentences with neural models", Granularity::Subdomain),
            individual: mk("ind", individual_text, Granularity::Individual),
        };
        let mut store = EmbeddingStore::new(2);
        for (id, v) in [
            ("abs", [0.0, 0.0]),
            ("dom", [3.0, 4.0]),
            ("sub", [1.0, 1.0]),
            ("ind", [0.0, 2.0]),
        ] {
            store.insert(EmbeddingVector::new(id, v.to_vec()).unwrap()).unwrap();
        }
        let ctx = FeatureContext::new(
            FeatureSchema::new(["Chemistry".to_string(), "Art".to_string()]),
            Arc::new(store),
            PerplexityScorer::unigram(corpora.domain.clone()),
            1.0,
            TokenizerConfig::default(),
        );
        let reader = ReaderProfile {
            annotator_id: "a1".into(),
            subdomain_labels: vec!["nlp".into()],
            publication_ids: vec!["ind".into()],
            first_pub_year: 2015,
            pub_count: 4,
            avg_citation_count: 12.5,
        };
        (reader, abstract_doc, corpora, ctx)
    }

    #[test]
    fn absent_term_zero_frequency() {
        let (reader, abs, corpora, ctx) = setup("graph kernels for molecules");
        let fv = extract_features(&reader, "ionic liquids", &abs, &corpora, &ctx).unwrap();
        assert_eq!((fv.freq_domain, fv.freq_subdomain, fv.freq_individual), (0.0, 0.0, 0.0));
        assert_eq!(fv.abstract_domain, vec![0.0, 1.0]);
        assert_eq!(fv.embsim_domain, 5.0);
        assert!((fv.embsim_subdomain - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(fv.embsim_individual, 2.0);
        assert_eq!(fv.pub_count, 4.0);
        assert_eq!(fv.values().len(), ctx.schema.width());
        assert_eq!(ctx.schema.names().len(), ctx.schema.width());
    }

    #[test]
    fn identical_individual_corpus_zero_specificity() {
        let (reader, abs, corpora, ctx) = setup("Ionic liquids dissolve cellulose. They are salts.");
        let fv = extract_features(&reader, "ionic liquids", &abs, &corpora, &ctx).unwrap();
        assert_eq!(fv.spec_individual, 0.0);
        assert!((fv.freq_individual - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn repeated_calls_bitwise_equal() {
        let (reader, abs, corpora, ctx) = setup("cellulose chemistry");
        let a = extract_features(&reader, "cellulose", &abs, &corpora, &ctx).unwrap();
        let b = extract_features(&reader, "cellulose", &abs, &corpora, &ctx).unwrap();
        let bits = |v: &FeatureVector| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn errors_name_the_feature() {
        let (reader, mut abs, corpora, ctx) = setup("x");
        abs.domain_label = "Physics".into();
        let err = extract_features(&reader, "cellulose", &abs, &corpora, &ctx).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Feature {
                    feature: "abstract_domain",
                    ..
                }
            ),
            "{err}"
        );
        let (reader, mut abs, corpora, ctx) = setup("x");
        abs.doc_id = "unknown".into();
        let err = extract_features(&reader, "cellulose", &abs, &corpora, &ctx).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Feature {
                    feature: "abstract_embedding",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn schema_layout() {
        let s = FeatureSchema::new(["B".to_string(), "A".to_string(), "B".to_string()]);
        assert_eq!(s.domains, ["A", "B"]);
        let names = s.names();
        assert_eq!(names[11], "abstract_domain=A");
        assert_eq!(names.last().unwrap(), "avg_citation_count");
        let mask = s.passthrough_mask();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
        assert!(mask[11] && mask[12] && !mask[13]);
    }

    #[test]
    fn reader_validation() {
        let (mut reader, ..) = setup("x");
        reader.pub_count = 0;
        assert!(reader.validate().is_err());
        reader.pub_count = 1;
        reader.first_pub_year = 3000;
        assert!(reader.validate().is_err());
    }
}
