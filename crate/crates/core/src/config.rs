//! Run configuration: one TOML file naming the data, the seed, and every
//! tunable of a run. Relative paths resolve against the file's directory.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! abstracts = "abstracts.jsonl"
//! domain_corpus = "domain.jsonl"
//! publications = "publications.jsonl"
//! references = "references.jsonl"
//! readers = "readers.jsonl"
//! annotations = "annotations.jsonl"
//! embeddings = "embeddings.jsonl"
//!
//! [paths.subdomains]
//! nlp = "subdomain_nlp.jsonl"
//!
//! [model]
//! lambda_grid = [1.0, 0.1, 0.01]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{TokenizerConfig, DEFAULT_ALPHA, DEFAULT_MIN_DOCS};
use crate::dataset::{SplitMode, Target};
use crate::error::{Error, Result};
use crate::llm::PromptSpec;
use crate::model::{lambda_grid, CdOptions, LambdaPolicy, SelectionRule, DEFAULT_EPS, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub abstracts: PathBuf,
    pub domain_corpus: PathBuf,
    #[serde(default)]
    pub subdomains: BTreeMap<String, PathBuf>,
    pub publications: PathBuf,
    #[serde(default)]
    pub references: Option<PathBuf>,
    pub readers: PathBuf,
    pub annotations: PathBuf,
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub llm_cache: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_cache() -> PathBuf {
    "cache/llm.jsonl".into()
}

fn default_out() -> PathBuf {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub alpha: f64,
    pub min_docs: usize,
    pub lowercase: bool,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            min_docs: DEFAULT_MIN_DOCS,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
    pub mode: SplitMode,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            mode: SplitMode::Shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub rule: SelectionRule,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub threshold: f64,
    pub eps: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            lambda_grid: lambda_grid(1e-4, 1.0, 20),
            folds: 5,
            rule: SelectionRule::OneStandardError,
            tolerance: 1e-7,
            max_iterations: 10_000,
            threshold: DEFAULT_THRESHOLD,
            eps: DEFAULT_EPS,
        }
    }
}

impl ModelSettings {
    pub fn policy(&self) -> LambdaPolicy {
        if self.lambda_grid.len() == 1 {
            LambdaPolicy::Fixed {
                lambda: self.lambda_grid[0],
            }
        } else {
            LambdaPolicy::CrossValidated {
                grid: self.lambda_grid.clone(),
                folds: self.folds,
                rule: self.rule,
            }
        }
    }

    pub fn cd_options(&self, seed: u64) -> CdOptions {
        CdOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// `familiarity` or an information need (`definition`, `background`, `example`).
    pub targets: Vec<String>,
    pub mixed: bool,
    pub sweep_sizes: Vec<usize>,
    pub sweep_seeds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            targets: vec!["familiarity".into()],
            mixed: true,
            sweep_sizes: vec![50, 100, 200, 400],
            sweep_seeds: 5,
        }
    }
}

impl EvalSettings {
    pub fn parsed_targets(&self) -> Result<Vec<Target>> {
        self.targets.iter().map(|t| t.parse()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub enabled: bool,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub strategies: Vec<PromptSpec>,
    pub concurrency: usize,
    pub requests_per_second: f64,
    pub max_attempts: usize,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Evaluate on at most this many test rows per annotator (0 = all).
    pub max_test_rows: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 100,
            strategies: vec![],
            concurrency: 4,
            requests_per_second: 5.0,
            max_attempts: 5,
            backoff_ms: 500,
            timeout_secs: 60,
            max_test_rows: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    /// Base URL of an embedding service (`POST {url}/embed`), used for
    /// documents missing from the embedding store.
    pub embedding_url: Option<String>,
    pub embedding_dimension: Option<usize>,
    /// Base URL of a perplexity service (`POST {url}/perplexity`); the
    /// unigram model over the domain corpus is the fallback.
    pub perplexity_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub paths: Paths,
    #[serde(default)]
    pub corpus: CorpusSettings,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default)]
    pub providers: ProviderSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    /// Parses TOML text; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingPath(path.to_path_buf()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        let m = &self.model;
        if m.lambda_grid.is_empty() || m.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(
                "model.lambda_grid must be nonempty and nonnegative".into(),
            ));
        }
        if m.folds < 2 {
            return Err(Error::Config("model.folds must be at least 2".into()));
        }
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(Error::Config("model.threshold must lie in (0, 1)".into()));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        if self.eval.sweep_sizes.contains(&0) {
            return Err(Error::Config("eval.sweep_sizes must be positive".into()));
        }
        if self.eval.sweep_seeds == 0 && !self.eval.sweep_sizes.is_empty() {
            return Err(Error::Config("eval.sweep_seeds must be at least 1".into()));
        }
        self.eval.parsed_targets()?;
        if self.corpus.alpha <= 0.0 {
            return Err(Error::Config("corpus.alpha must be positive".into()));
        }
        for s in &self.llm.strategies {
            s.validate()?;
        }
        if self.llm.max_attempts == 0 || self.llm.concurrency == 0 {
            return Err(Error::Config(
                "llm.max_attempts and llm.concurrency must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out_dir)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.paths.llm_cache)
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            lowercase: self.corpus.lowercase,
        }
    }

    /// Every input path that must exist before a run starts.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        let mut v = vec![
            &p.abstracts,
            &p.domain_corpus,
            &p.publications,
            &p.readers,
            &p.annotations,
        ];
        v.extend(p.subdomains.values());
        v.extend(p.references.iter());
        v.extend(p.embeddings.iter());
        v.into_iter().map(|x| self.resolve(x)).collect()
    }

    /// Fails with the first missing input path.
    pub fn validate_paths(&self) -> Result<()> {
        if self.paths.embeddings.is_none() && self.providers.embedding_url.is_none() {
            return Err(Error::Config("set paths.embeddings or providers.embedding_url".into()));
        }
        match self.input_paths().into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::MissingPath(p)),
            None => Ok(()),
        }
    }

    /// SHA-256 over the canonical JSON form of the configuration. The output
    /// directory and worker count are excluded: neither changes results.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        c.workers = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
