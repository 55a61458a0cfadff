//! Seeded synthetic study with a known generating model.
//!
//! Terms are pseudo-words, so every phrase count is exactly the number of
//! mentions the generator inserted. A reader's probability of being
//! unfamiliar with a term is
//!
//! ```text
//! logit P(unfamiliar) = b_r - β_r ln(1 + m_rt) - δ_r ln c_t - γ_r[domain(t)]
//! ```
//!
//! with `m_rt` the term's mentions in the reader's own publications and `c_t`
//! its commonness. Intercepts, slopes and per-domain shifts differ between
//! readers, so a model fitted on other readers transfers imperfectly.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{
    CorpusSettings, EvalSettings, LlmSettings, ModelSettings, Paths, ProviderSettings, RunConfig, SplitSettings,
};
use crate::corpus::Document;
use crate::dataset::{binarize_rating, AnnotationRecord, Familiarity, InfoNeed, SplitSpec};
use crate::error::{Error, Result};
use crate::features::{EmbeddingStore, EmbeddingVector, ReaderProfile};
use crate::llm::{PromptGranularity, PromptSpec, Strategy};
use crate::metrics::f1_score;
use crate::model::lambda_grid;
use crate::report::write_file;

const DOMAINS: [(&str, [&str; 2]); 4] = [
    ("Biology", ["genomics", "ecology"]),
    ("Chemistry", ["catalysis", "polymers"]),
    ("Computer Science", ["nlp", "systems"]),
    ("Physics", ["optics", "condensed-matter"]),
];

const FILLER: [&str; 60] = [
    "the",
    "of",
    "and",
    "a",
    "in",
    "to",
    "we",
    "is",
    "for",
    "that",
    "with",
    "on",
    "as",
    "this",
    "by",
    "are",
    "from",
    "our",
    "results",
    "method",
    "study",
    "show",
    "using",
    "which",
    "these",
    "between",
    "approach",
    "new",
    "model",
    "based",
    "data",
    "analysis",
    "propose",
    "two",
    "high",
    "can",
    "also",
    "present",
    "their",
    "effect",
    "paper",
    "observed",
    "used",
    "large",
    "both",
    "first",
    "than",
    "such",
    "into",
    "under",
    "significant",
    "performance",
    "evaluate",
    "structure",
    "process",
    "further",
    "different",
    "demonstrate",
    "provide",
    "work",
];

const LAST_YEAR: i32 = 2023;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub readers: usize,
    pub abstracts: usize,
    pub min_terms: usize,
    pub max_terms: usize,
    pub embedding_dim: usize,
    pub domain_docs_per_domain: usize,
    pub subdomain_docs: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            readers: 11,
            abstracts: 100,
            min_terms: 9,
            max_terms: 10,
            embedding_dim: 8,
            domain_docs_per_domain: 50,
            subdomain_docs: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTerm {
    pub abstract_id: String,
    pub term: String,
    pub domain: String,
    pub subdomain: String,
    pub commonness: f64,
}

/// One reader's generating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderParams {
    pub annotator_id: String,
    pub domain: String,
    pub intercept: f64,
    pub exposure_weight: f64,
    pub commonness_weight: f64,
    pub domain_shift: BTreeMap<String, f64>,
}

impl ReaderParams {
    pub fn logit(&self, exposure: u32, commonness: f64, domain: &str) -> f64 {
        self.intercept
            - self.exposure_weight * (exposure as f64).ln_1p()
            - self.commonness_weight * commonness.ln()
            - self.domain_shift[domain]
    }
}

/// Latent quantities behind one annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub annotator_id: String,
    pub abstract_id: String,
    pub term: String,
    pub exposure: u32,
    pub p_unfamiliar: f64,
}

#[derive(Debug, Clone)]
pub struct SynthStudy {
    pub config: SynthConfig,
    pub abstracts: Vec<Document>,
    pub domain_docs: Vec<Document>,
    pub subdomain_docs: BTreeMap<String, Vec<Document>>,
    pub publications: Vec<Document>,
    pub references: Vec<Document>,
    pub readers: Vec<ReaderProfile>,
    pub annotations: Vec<AnnotationRecord>,
    pub embeddings: EmbeddingStore,
    pub terms: Vec<SynthTerm>,
    pub params: Vec<ReaderParams>,
    pub truth: Vec<TruthRow>,
    pub tallies: Tallies,
}

/// Label counts recorded while sampling the ratings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tallies {
    pub n_records: usize,
    pub n_terms: usize,
    pub n_annotators: usize,
    /// Terms every reader labeled alike.
    pub unanimous_terms: usize,
    /// Familiar ratings and all ratings, per abstract domain.
    pub familiar_by_domain: BTreeMap<String, (usize, usize)>,
}

/// F1 of the generator's own decision rules on a split's test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleF1 {
    /// Thresholding each reader's true probability.
    pub individual: BTreeMap<String, f64>,
    /// Thresholding the mean probability the other readers' parameters
    /// assign to the same exposures: the best a pooled model can target.
    pub pooled: BTreeMap<String, f64>,
}

impl OracleF1 {
    pub fn mean_individual(&self) -> f64 {
        mean(self.individual.values())
    }

    pub fn mean_pooled(&self) -> f64 {
        mean(self.pooled.values())
    }

    pub fn margin(&self) -> f64 {
        self.mean_individual() - self.mean_pooled()
    }
}

fn mean<'a>(v: impl ExactSizeIterator<Item = &'a f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Gen {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Gen {
    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        Normal::new(mean, sd).expect("valid normal").sample(&mut self.rng)
    }

    fn poisson(&mut self, mean: f64) -> u32 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("valid poisson").sample(&mut self.rng) as u32
    }

    fn pseudo_word(&mut self) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let syllables = self.rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[self.rng.gen_range(0..C.len())] as char);
                w.push(V[self.rng.gen_range(0..V.len())] as char);
            }
            if self.rng.gen_bool(0.4) {
                w.push(b"nrsl"[self.rng.gen_range(0..4)] as char);
            }
            if !FILLER.contains(&w.as_str()) && self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn term(&mut self) -> String {
        if self.rng.gen_bool(0.25) {
            format!("{} {}", self.pseudo_word(), self.pseudo_word())
        } else {
            self.pseudo_word()
        }
    }

    /// Filler text with `units` inserted at random positions, cut into sentences.
    fn compose(&mut self, units: Vec<String>, filler: usize) -> String {
        let mut items: Vec<String> = (0..filler)
            .map(|_| FILLER.choose(&mut self.rng).unwrap().to_string())
            .collect();
        for u in units {
            let pos = self.rng.gen_range(0..=items.len());
            items.insert(pos, u);
        }
        let mut sentences = Vec::new();
        let mut i = 0;
        while i < items.len() {
            let len = self.rng.gen_range(8..=14).min(items.len() - i);
            let mut s = items[i..i + len].join(" ");
            s[..1].make_ascii_uppercase();
            sentences.push(s + ".");
            i += len;
        }
        sentences.join(" ")
    }

    fn vector(&mut self, centre: &[f64], sd: f64) -> Vec<f64> {
        centre
            .iter()
            .map(|c| ((c + self.normal(0.0, sd)) * 1e4).round() / 1e4)
            .collect()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn document(id: String, title: String, text: String, year: i32, domain: &str, citations: u64) -> Document {
    Document {
        doc_id: id,
        title,
        abstract_text: text,
        year,
        domain_label: domain.to_string(),
        venue: None,
        citation_count: citations,
        author_ids: vec![],
        reference_ids: vec![],
    }
}

/// Spreads `count` mentions of `term` over `slots` uniformly at random.
fn scatter(g: &mut Gen, slots: &mut [Vec<String>], term: &str, count: u32) {
    if slots.is_empty() {
        return;
    }
    for _ in 0..count {
        let k = g.rng.gen_range(0..slots.len());
        slots[k].push(term.to_string());
    }
}

impl SynthStudy {
    pub fn generate(config: SynthConfig) -> Result<Self> {
        if config.readers < 2 || config.abstracts == 0 || config.min_terms == 0 || config.min_terms > config.max_terms {
            return Err(Error::Validation(
                "synthetic study needs >= 2 readers, abstracts and terms".into(),
            ));
        }
        let mut g = Gen {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            used: HashSet::new(),
        };
        let dim = config.embedding_dim;
        let mut store = EmbeddingStore::new(dim);
        let mut centre: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut offset: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (d, subs) in DOMAINS {
            centre.insert(d, (0..dim).map(|_| g.normal(0.0, 2.0)).collect());
            for s in subs {
                offset.insert(s, (0..dim).map(|_| g.normal(0.0, 0.8)).collect());
            }
        }

        let mut terms = Vec::new();
        let mut abstracts = Vec::new();
        for i in 0..config.abstracts {
            let (domain, subs) = DOMAINS[i % DOMAINS.len()];
            let abstract_id = format!("abs{i:03}");
            let n = g.rng.gen_range(config.min_terms..=config.max_terms);
            let mut units = Vec::new();
            let mut sub_votes = [0usize; 2];
            for _ in 0..n {
                let term = g.term();
                let s = g.rng.gen_range(0..2);
                sub_votes[s] += 1;
                let commonness = g.normal(0.0, 0.8).exp();
                units.push(term.clone());
                if g.rng.gen_bool(0.3) {
                    units.push(term.clone());
                }
                terms.push(SynthTerm {
                    abstract_id: abstract_id.clone(),
                    term,
                    domain: domain.into(),
                    subdomain: subs[s].into(),
                    commonness,
                });
            }
            let filler = g.rng.gen_range(70..=110);
            let text = g.compose(units, filler);
            let main_sub = subs[if sub_votes[1] > sub_votes[0] { 1 } else { 0 }];
            let v = g.vector(&add(&centre[domain], &offset[main_sub]), 0.5);
            store.insert(EmbeddingVector::new(&abstract_id, v)?)?;
            let year = g.rng.gen_range(2015..=LAST_YEAR);
            let citations = g.rng.gen_range(0..200);
            abstracts.push(document(
                abstract_id,
                format!("Synthetic abstract {i}"),
                text,
                year,
                domain,
                citations,
            ));
        }

        // domain corpus: every term mentioned in proportion to its commonness
        let mut domain_docs = Vec::new();
        for (domain, subs) in DOMAINS {
            let k = config.domain_docs_per_domain;
            let mut slots = vec![Vec::new(); k];
            for t in terms.iter().filter(|t| t.domain == domain) {
                let c = g.poisson(2.0 * t.commonness);
                scatter(&mut g, &mut slots, &t.term, c);
            }
            let slug = domain.to_lowercase().replace(' ', "-");
            for (j, units) in slots.into_iter().enumerate() {
                let id = format!("dom-{slug}-{j:03}");
                let filler = g.rng.gen_range(50..=90);
                let text = g.compose(units, filler);
                let sub = subs[g.rng.gen_range(0..2)];
                let v = g.vector(&add(&centre[domain], &offset[sub]), 0.6);
                store.insert(EmbeddingVector::new(&id, v)?)?;
                let year = g.rng.gen_range(2010..=LAST_YEAR);
                let citations = g.rng.gen_range(0..500);
                domain_docs.push(document(id, format!("Domain paper {j}"), text, year, domain, citations));
            }
        }

        let mut subdomain_docs = BTreeMap::new();
        for (domain, subs) in DOMAINS {
            for s in subs {
                let mut slots = vec![Vec::new(); config.subdomain_docs];
                for t in terms.iter().filter(|t| t.domain == domain) {
                    let rate = if t.subdomain == s { 3.0 } else { 0.4 };
                    let c = g.poisson(rate * t.commonness);
                    scatter(&mut g, &mut slots, &t.term, c);
                }
                let mut docs = Vec::new();
                for (j, units) in slots.into_iter().enumerate() {
                    let id = format!("sub-{s}-{j:03}");
                    let filler = g.rng.gen_range(50..=90);
                    let text = g.compose(units, filler);
                    let v = g.vector(&add(&centre[domain], &offset[s]), 0.5);
                    store.insert(EmbeddingVector::new(&id, v)?)?;
                    let year = g.rng.gen_range(2010..=LAST_YEAR);
                    let citations = g.rng.gen_range(0..300);
                    docs.push(document(
                        id,
                        format!("Subdomain paper {s} {j}"),
                        text,
                        year,
                        domain,
                        citations,
                    ));
                }
                subdomain_docs.insert(s.to_string(), docs);
            }
        }

        let mut readers = Vec::new();
        let mut params = Vec::new();
        let mut publications = Vec::new();
        let mut references = Vec::new();
        let mut exposures: Vec<Vec<u32>> = Vec::new();
        for r in 0..config.readers {
            let id = format!("r{:02}", r + 1);
            let (domain, subs) = DOMAINS[r % DOMAINS.len()];
            let primary = subs[g.rng.gen_range(0..2)];
            let mut labels = vec![primary.to_string()];
            if g.rng.gen_bool(0.35) {
                let (_, other) = DOMAINS[(r + 1 + g.rng.gen_range(0..3)) % DOMAINS.len()];
                labels.push(other[g.rng.gen_range(0..2)].to_string());
            }
            let affinity: BTreeMap<&str, f64> = DOMAINS
                .iter()
                .map(|(d, _)| (*d, if *d == domain { 1.0 } else { g.rng.gen_range(0.05..0.4) }))
                .collect();
            let domain_shift: BTreeMap<String, f64> = DOMAINS
                .iter()
                .map(|(d, _)| {
                    let shift = if *d == domain {
                        g.rng.gen_range(1.0..2.0)
                    } else {
                        g.normal(0.0, 0.9)
                    };
                    (d.to_string(), shift)
                })
                .collect();
            let p = ReaderParams {
                annotator_id: id.clone(),
                domain: domain.into(),
                intercept: g.rng.gen_range(0.3..1.8),
                exposure_weight: g.rng.gen_range(0.9..2.2),
                commonness_weight: g.rng.gen_range(0.2..1.0),
                domain_shift,
            };

            let n_pubs = g.rng.gen_range(6..=14);
            let mut slots = vec![Vec::new(); n_pubs];
            let mut m = Vec::with_capacity(terms.len());
            for t in &terms {
                let boost = if labels.contains(&t.subdomain) { 2.5 } else { 1.0 };
                let c = g.poisson(1.5 * affinity[t.domain.as_str()] * t.commonness * boost);
                scatter(&mut g, &mut slots, &t.term, c);
                m.push(c);
            }
            exposures.push(m);

            let n_refs = 6;
            let mut ref_slots = vec![Vec::new(); n_refs];
            for t in terms.iter().filter(|t| labels.contains(&t.subdomain)) {
                let c = g.poisson(0.5 * t.commonness);
                scatter(&mut g, &mut ref_slots, &t.term, c);
            }
            let ref_ids: Vec<String> = (0..n_refs).map(|j| format!("ref-{id}-{j:02}")).collect();
            for (j, units) in ref_slots.into_iter().enumerate() {
                let filler = g.rng.gen_range(50..=90);
                let text = g.compose(units, filler);
                let v = g.vector(&add(&centre[domain], &offset[primary]), 0.6);
                store.insert(EmbeddingVector::new(&ref_ids[j], v)?)?;
                let year = g.rng.gen_range(2000..=LAST_YEAR);
                let citations = g.rng.gen_range(0..400);
                references.push(document(
                    ref_ids[j].clone(),
                    format!("Reference {j} of {id}"),
                    text,
                    year,
                    domain,
                    citations,
                ));
            }

            let first_year = LAST_YEAR - g.rng.gen_range(2..=25);
            let reader_offset: Vec<f64> = (0..dim).map(|_| g.normal(0.0, 0.5)).collect();
            let mut pub_ids = Vec::new();
            let mut citations_total = 0u64;
            for (j, units) in slots.into_iter().enumerate() {
                let pid = format!("pub-{id}-{j:02}");
                let filler = g.rng.gen_range(60..=100);
                let text = g.compose(units, filler);
                let v = g.vector(&add(&add(&centre[domain], &offset[primary]), &reader_offset), 0.4);
                store.insert(EmbeddingVector::new(&pid, v)?)?;
                let citations = g.rng.gen_range(0..120);
                citations_total += citations;
                let mut d = document(
                    pid.clone(),
                    format!("Publication {j} of {id}"),
                    text,
                    g.rng.gen_range(first_year..=LAST_YEAR),
                    domain,
                    citations,
                );
                d.author_ids = vec![id.clone()];
                d.reference_ids = ref_ids.choose_multiple(&mut g.rng, 3).cloned().collect();
                d.reference_ids.sort();
                publications.push(d);
                pub_ids.push(pid);
            }
            readers.push(ReaderProfile {
                annotator_id: id,
                subdomain_labels: labels,
                publication_ids: pub_ids,
                first_pub_year: first_year,
                pub_count: n_pubs as u32,
                avg_citation_count: (citations_total as f64 / n_pubs as f64 * 10.0).round() / 10.0,
            });
            params.push(p);
        }

        let mut annotations = Vec::new();
        let mut truth = Vec::new();
        let mut unfamiliar_by_term = vec![0; terms.len()];
        let mut tallies = Tallies {
            n_terms: terms.len(),
            n_annotators: params.len(),
            ..Tallies::default()
        };
        for (r, p) in params.iter().enumerate() {
            for (k, t) in terms.iter().enumerate() {
                let exposure = exposures[r][k];
                let prob = sigmoid(p.logit(exposure, t.commonness, &t.domain));
                let unfamiliar = g.rng.gen::<f64>() < prob;
                let rating = if unfamiliar {
                    g.rng.gen_range(1..=2)
                } else {
                    g.rng.gen_range(3..=5)
                };
                unfamiliar_by_term[k] += unfamiliar as usize;
                let tally = tallies.familiar_by_domain.entry(t.domain.clone()).or_default();
                tally.0 += !unfamiliar as usize;
                tally.1 += 1;
                let rates = if unfamiliar {
                    [0.75, 0.5, 0.35]
                } else {
                    [0.08, 0.15, 0.1]
                };
                let needs: BTreeSet<InfoNeed> = InfoNeed::ALL
                    .iter()
                    .zip(rates)
                    .filter_map(|(&n, q)| g.rng.gen_bool(q).then_some(n))
                    .collect();
                annotations.push(AnnotationRecord {
                    annotator_id: p.annotator_id.clone(),
                    abstract_id: t.abstract_id.clone(),
                    term: t.term.clone(),
                    rating,
                    needs,
                });
                truth.push(TruthRow {
                    annotator_id: p.annotator_id.clone(),
                    abstract_id: t.abstract_id.clone(),
                    term: t.term.clone(),
                    exposure,
                    p_unfamiliar: prob,
                });
            }
        }
        tallies.n_records = annotations.len();
        tallies.unanimous_terms = unfamiliar_by_term
            .iter()
            .filter(|&&u| u == 0 || u == params.len())
            .count();

        Ok(Self {
            config,
            abstracts,
            domain_docs,
            subdomain_docs,
            publications,
            references,
            readers,
            annotations,
            embeddings: store,
            terms,
            params,
            truth,
            tallies,
        })
    }

    /// Oracle F1 on the test rows of `split` (unfamiliar is the positive class).
    pub fn oracle_f1(&self, split: &SplitSpec) -> Result<OracleF1> {
        let by_term: BTreeMap<(&str, &str), &SynthTerm> = self
            .terms
            .iter()
            .map(|t| ((t.abstract_id.as_str(), t.term.as_str()), t))
            .collect();
        let mut individual = BTreeMap::new();
        let mut pooled = BTreeMap::new();
        for p in &self.params {
            let mut own = Vec::new();
            let mut shared = Vec::new();
            let mut gold = Vec::new();
            for (row, rec) in self.truth.iter().zip(&self.annotations) {
                if row.annotator_id != p.annotator_id || !split.is_test(&rec.key()) {
                    continue;
                }
                let t = by_term[&(row.abstract_id.as_str(), row.term.as_str())];
                let others: Vec<f64> = self
                    .params
                    .iter()
                    .filter(|q| q.annotator_id != p.annotator_id)
                    .map(|q| sigmoid(q.logit(row.exposure, t.commonness, &t.domain)))
                    .collect();
                own.push(row.p_unfamiliar >= 0.5);
                shared.push(others.iter().sum::<f64>() / others.len() as f64 >= 0.5);
                gold.push(binarize_rating(rec.rating as i64)? == Familiarity::Unfamiliar);
            }
            individual.insert(p.annotator_id.clone(), f1_score(&own, &gold, &true)?);
            pooled.insert(p.annotator_id.clone(), f1_score(&shared, &gold, &true)?);
        }
        Ok(OracleF1 { individual, pooled })
    }

    /// Run configuration for the files written by [`SynthStudy::write_to`].
    pub fn run_config(&self, dir: &Path) -> RunConfig {
        let subdomains = self
            .subdomain_docs
            .keys()
            .map(|s| (s.clone(), PathBuf::from(format!("subdomain_{s}.jsonl"))))
            .collect();
        let mut llm = LlmSettings {
            endpoint: "http://127.0.0.1:8089/v1/chat/completions".into(),
            api_key_env: "JARGON_LLM_API_KEY".into(),
            max_test_rows: 20,
            ..LlmSettings::default()
        };
        llm.strategies = vec![
            PromptSpec::baseline(),
            PromptSpec::new(Strategy::Metadata, None),
            PromptSpec::new(Strategy::ContextEnhanced, Some(PromptGranularity::Individual)),
            PromptSpec::new(Strategy::FewShot, Some(PromptGranularity::Individual)),
        ];
        RunConfig {
            seed: self.config.seed,
            workers: 1,
            paths: Paths {
                abstracts: "abstracts.jsonl".into(),
                domain_corpus: "domain.jsonl".into(),
                subdomains,
                publications: "publications.jsonl".into(),
                references: Some("references.jsonl".into()),
                readers: "readers.jsonl".into(),
                annotations: "annotations.jsonl".into(),
                embeddings: Some("embeddings.jsonl".into()),
                llm_cache: "cache/llm.jsonl".into(),
                out_dir: "out".into(),
            },
            corpus: CorpusSettings::default(),
            split: SplitSettings::default(),
            model: ModelSettings {
                lambda_grid: lambda_grid(1e-3, 0.3, 8),
                ..ModelSettings::default()
            },
            eval: EvalSettings {
                sweep_sizes: vec![25, 50, 100, 200, 400],
                ..EvalSettings::default()
            },
            llm,
            providers: ProviderSettings::default(),
            base_dir: dir.to_path_buf(),
        }
    }

    /// Writes every input file plus `run.toml` and the generator's latent
    /// quantities (`generator.json`, `truth.jsonl`) into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<RunConfig> {
        fn jsonl<T: Serialize>(items: &[T]) -> Result<String> {
            let mut s = String::new();
            for it in items {
                s.push_str(&serde_json::to_string(it)?);
                s.push('\n');
            }
            Ok(s)
        }
        write_file(&dir.join("abstracts.jsonl"), &jsonl(&self.abstracts)?)?;
        write_file(&dir.join("domain.jsonl"), &jsonl(&self.domain_docs)?)?;
        for (s, docs) in &self.subdomain_docs {
            write_file(&dir.join(format!("subdomain_{s}.jsonl")), &jsonl(docs)?)?;
        }
        write_file(&dir.join("publications.jsonl"), &jsonl(&self.publications)?)?;
        write_file(&dir.join("references.jsonl"), &jsonl(&self.references)?)?;
        write_file(&dir.join("readers.jsonl"), &jsonl(&self.readers)?)?;
        write_file(&dir.join("annotations.jsonl"), &jsonl(&self.annotations)?)?;
        write_file(&dir.join("embeddings.jsonl"), &self.embeddings.to_jsonl())?;
        write_file(&dir.join("truth.jsonl"), &jsonl(&self.truth)?)?;
        let generator = serde_json::json!({
            "config": self.config,
            "params": self.params,
            "terms": self.terms,
            "tallies": self.tallies,
        });
        write_file(
            &dir.join("generator.json"),
            &(serde_json::to_string_pretty(&generator)? + "\n"),
        )?;
        let config = self.run_config(dir);
        write_file(&dir.join("run.toml"), &config.to_toml()?)?;
        Ok(config)
    }
}
