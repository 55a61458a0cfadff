//! Paper corpora at domain, subdomain, individual and abstract granularity.
//!
//! A [`Corpus`] tokenizes the `abstract_text` of its documents once at build
//! time and keeps a positional index, so phrase counts for multi-word terms
//! are cheap to answer. Counts are cached per corpus; the cache is the only
//! interior mutability and every entry is a deterministic function of the
//! documents and the tokenizer config.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default additive smoothing for term probabilities.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Default minimum size of an individual corpus before reference supplementation.
pub const DEFAULT_MIN_DOCS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: i32,
    #[serde(rename = "domain")]
    pub domain_label: String,
    #[serde(default)]
    pub venue: Option<String>,
    pub citation_count: u64,
    #[serde(default)]
    pub author_ids: Vec<String>,
    #[serde(default)]
    pub reference_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Domain,
    Subdomain,
    Individual,
    Abstract,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

/// Splits `text` into maximal runs of letters and digits.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Counts non-overlapping, left-to-right matches of `term` in `tokens`.
pub fn count_phrase(tokens: &[String], term: &str, config: &TokenizerConfig) -> Result<u64> {
    let needle = tokenize(term, config);
    if needle.is_empty() {
        return Err(Error::EmptyTerm(term.to_string()));
    }
    Ok(count_subsequence(tokens, &needle))
}

fn count_subsequence<T: PartialEq>(haystack: &[T], needle: &[T]) -> u64 {
    let mut count = 0;
    let mut i = 0;
    while i + needle.len() <= haystack.len() {
        if haystack[i..i + needle.len()] == *needle {
            count += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    count
}

/// Token-id positional index over the documents of one corpus.
#[derive(Debug, Default)]
struct TokenIndex {
    vocab: HashMap<String, u32>,
    docs: Vec<Vec<u32>>,
    /// For each token id, every (document, position) where it occurs, in order.
    postings: Vec<Vec<(u32, u32)>>,
}

impl TokenIndex {
    fn push_doc(&mut self, tokens: Vec<String>) {
        let doc = self.docs.len() as u32;
        let ids: Vec<u32> = tokens
            .into_iter()
            .map(|t| {
                let next = self.vocab.len() as u32;
                *self.vocab.entry(t).or_insert(next)
            })
            .collect();
        for (pos, &id) in ids.iter().enumerate() {
            if id as usize == self.postings.len() {
                self.postings.push(Vec::new());
            }
            self.postings[id as usize].push((doc, pos as u32));
        }
        self.docs.push(ids);
    }

    fn count(&self, needle: &[String]) -> u64 {
        let Some(ids) = needle
            .iter()
            .map(|t| self.vocab.get(t).copied())
            .collect::<Option<Vec<u32>>>()
        else {
            return 0;
        };
        let mut count = 0;
        // (doc, first free position) of the previous accepted match
        let mut last: Option<(u32, u32)> = None;
        for &(doc, pos) in &self.postings[ids[0] as usize] {
            if let Some((d, free)) = last {
                if d == doc && pos < free {
                    continue;
                }
            }
            let tokens = &self.docs[doc as usize];
            let start = pos as usize;
            if start + ids.len() <= tokens.len() && tokens[start..start + ids.len()] == ids[..] {
                count += 1;
                last = Some((doc, pos + ids.len() as u32));
            }
        }
        count
    }
}

/// A granularity-tagged collection of documents with cached token statistics.
#[derive(Debug)]
pub struct Corpus {
    corpus_id: String,
    granularity: Granularity,
    documents: Vec<Document>,
    config: TokenizerConfig,
    token_count: u64,
    index: TokenIndex,
    phrase_counts: Mutex<HashMap<String, u64>>,
}

impl Corpus {
    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn token_count(&self) -> u64 {
        self.token_count
    }

    /// Per-document token counts, aligned with [`Corpus::documents`].
    pub fn doc_token_counts(&self) -> Vec<u64> {
        self.index.docs.iter().map(|d| d.len() as u64).collect()
    }

    /// Total non-overlapping occurrences of `term` across all documents.
    pub fn phrase_count(&self, term: &str) -> Result<u64> {
        let needle = tokenize(term, &self.config);
        if needle.is_empty() {
            return Err(Error::EmptyTerm(term.to_string()));
        }
        let key = needle.join(" ");
        if let Some(&c) = self.phrase_counts.lock().unwrap().get(&key) {
            return Ok(c);
        }
        // computed outside the lock; racing writers insert identical values
        let c = self.index.count(&needle);
        self.phrase_counts.lock().unwrap().insert(key, c);
        Ok(c)
    }

    /// Number of cached phrase counts.
    pub fn cached_phrases(&self) -> usize {
        self.phrase_counts.lock().unwrap().len()
    }

    /// Raw count of a single token, used by the unigram perplexity fallback.
    pub fn token_frequency(&self, token: &str) -> u64 {
        self.index
            .vocab
            .get(token)
            .map(|&id| self.index.postings[id as usize].len() as u64)
            .unwrap_or(0)
    }
}

/// Builds a corpus from `documents`, tokenizing every abstract.
pub fn build_corpus(
    documents: Vec<Document>,
    corpus_id: impl Into<String>,
    granularity: Granularity,
    config: TokenizerConfig,
) -> Result<Corpus> {
    if documents.is_empty() {
        return Err(Error::Empty("corpus documents"));
    }
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for d in &documents {
        if d.doc_id.is_empty() {
            return Err(Error::Validation("document with empty doc_id".into()));
        }
        if d.abstract_text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "document {} has an empty abstract",
                d.doc_id
            )));
        }
        if !seen.insert(d.doc_id.as_str()) && !dups.contains(&d.doc_id) {
            dups.push(d.doc_id.clone());
        }
    }
    if !dups.is_empty() {
        return Err(Error::DuplicateDocIds(dups));
    }
    let mut index = TokenIndex::default();
    for d in &documents {
        index.push_doc(tokenize(&d.abstract_text, &config));
    }
    let token_count = index.docs.iter().map(|d| d.len() as u64).sum();
    Ok(Corpus {
        corpus_id: corpus_id.into(),
        granularity,
        documents,
        config,
        token_count,
        index,
        phrase_counts: Mutex::new(HashMap::new()),
    })
}

/// Builds an individual corpus, topping up short publication lists with
/// references sampled uniformly without replacement.
pub fn supplement_individual(
    publications: Vec<Document>,
    references: &[Document],
    min_docs: usize,
    seed: u64,
    corpus_id: impl Into<String>,
    config: TokenizerConfig,
) -> Result<Corpus> {
    if min_docs == 0 {
        return Err(Error::Validation("min_docs must be at least 1".into()));
    }
    let mut docs = publications;
    if docs.len() < min_docs {
        let own: HashSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        let mut seen = HashSet::new();
        let eligible: Vec<&Document> = references
            .iter()
            .filter(|r| !own.contains(r.doc_id.as_str()) && seen.insert(r.doc_id.as_str()))
            .collect();
        let needed = min_docs - docs.len();
        if eligible.len() < needed {
            return Err(Error::Validation(format!(
                "cannot reach {min_docs} documents: {} publications + {} references",
                docs.len(),
                eligible.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, eligible.len(), needed).into_vec();
        picked.sort_unstable();
        docs.extend(picked.into_iter().map(|i| eligible[i].clone()));
    }
    build_corpus(docs, corpus_id, Granularity::Individual, config)
}

/// Smoothed probability `(count + alpha) / (token_count + alpha)`.
pub fn term_probability(corpus: &Corpus, term: &str, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Validation(format!("alpha must be >= 0, got {alpha}")));
    }
    if corpus.token_count == 0 {
        return Err(Error::Empty("corpus tokens"));
    }
    let count = corpus.phrase_count(term)? as f64;
    Ok((count + alpha) / (corpus.token_count as f64 + alpha))
}

/// Natural-log ratio of the term's smoothed probability in `target` over `background`.
pub fn specificity(term: &str, target: &Corpus, background: &Corpus, alpha: f64) -> Result<f64> {
    let p_target = term_probability(target, term, alpha)?;
    let p_background = term_probability(background, term, alpha)?;
    if p_target == 0.0 || p_background == 0.0 {
        return Err(Error::ZeroProbability(term.to_string()));
    }
    Ok((p_target / p_background).ln())
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    year: Option<i32>,
    domain: Option<String>,
    #[serde(default)]
    venue: Option<String>,
    citation_count: Option<i64>,
    #[serde(default)]
    author_ids: Vec<String>,
    #[serde(default)]
    reference_ids: Vec<String>,
}

/// Reads a JSONL document file. Blank lines are skipped; unknown fields are ignored.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
    let label = path.display().to_string();
    let mut docs = Vec::new();
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
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let missing = |field: &str| err(format!("missing required field '{field}'"));
        let citation_count = raw.citation_count.ok_or_else(|| missing("citation_count"))?;
        if citation_count < 0 {
            return Err(err(format!("negative citation_count {citation_count}")));
        }
        let doc = Document {
            doc_id: raw.doc_id.filter(|s| !s.is_empty()).ok_or_else(|| missing("doc_id"))?,
            title: raw.title.ok_or_else(|| missing("title"))?,
            abstract_text: raw
                .abstract_text
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| missing("abstract"))?,
            year: raw.year.ok_or_else(|| missing("year"))?,
            domain_label: raw.domain.ok_or_else(|| missing("domain"))?,
            venue: raw.venue,
            citation_count: citation_count as u64,
            author_ids: raw.author_ids,
            reference_ids: raw.reference_ids,
        };
        docs.push(doc);
    }
    Ok(docs)
}
