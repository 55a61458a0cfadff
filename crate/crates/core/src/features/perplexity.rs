//! Passage perplexity from an external language-model provider, with a
//! cache keyed by text hash and an offline unigram fallback.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, Corpus};
use crate::error::{Error, Result};
use crate::http::HttpClient;

pub trait PerplexityProvider: Send + Sync {
    fn perplexity(&self, text: &str) -> Result<f64>;
}

/// Unigram perplexity `exp(-(1/n) Σ ln P(token))` under the reference corpus,
/// with add-one smoothing.
#[derive(Debug, Clone)]
pub struct UnigramPerplexity {
    corpus: Arc<Corpus>,
}

impl UnigramPerplexity {
    pub const ALPHA: f64 = 1.0;

    pub fn new(corpus: Arc<Corpus>) -> Self {
        Self { corpus }
    }

    pub fn probability(&self, token: &str) -> f64 {
        let count = self.corpus.token_frequency(token) as f64;
        (count + Self::ALPHA) / (self.corpus.token_count() as f64 + Self::ALPHA)
    }
}

impl PerplexityProvider for UnigramPerplexity {
    fn perplexity(&self, text: &str) -> Result<f64> {
        let tokens = tokenize(text, self.corpus.tokenizer());
        if tokens.is_empty() {
            return Err(Error::Empty("perplexity text"));
        }
        let sum: f64 = tokens.iter().map(|t| self.probability(t).ln()).sum();
        Ok((-sum / tokens.len() as f64).exp())
    }
}

/// `POST {base}/perplexity {"text"} -> {"perplexity"}`.
pub struct HttpPerplexityProvider {
    url: String,
    client: HttpClient,
}

impl HttpPerplexityProvider {
    pub fn new(base_url: &str) -> Self {
        Self {
            url: format!("{}/perplexity", base_url.trim_end_matches('/')),
            client: HttpClient::default(),
        }
    }
}

#[derive(Deserialize)]
struct PerplexityResponse {
    perplexity: f64,
}

impl PerplexityProvider for HttpPerplexityProvider {
    fn perplexity(&self, text: &str) -> Result<f64> {
        let resp = self
            .client
            .post_json(&self.url, &serde_json::json!({ "text": text }), None)
            .map_err(Error::ProviderUnavailable)?;
        if resp.status != 200 {
            return Err(Error::ProviderUnavailable(format!(
                "{}: HTTP {}",
                self.url, resp.status
            )));
        }
        let parsed: PerplexityResponse =
            serde_json::from_str(&resp.body).map_err(|e| Error::MalformedResponse(e.to_string()))?;
        if !(parsed.perplexity.is_finite() && parsed.perplexity >= 0.0) {
            return Err(Error::MalformedResponse(format!("perplexity {}", parsed.perplexity)));
        }
        Ok(parsed.perplexity)
    }
}

/// Caching front for a provider. Falls back to the unigram model when the
/// provider is absent or fails.
#[derive(Default)]
pub struct PerplexityScorer {
    provider: Option<Box<dyn PerplexityProvider>>,
    fallback: Option<UnigramPerplexity>,
    cache: Mutex<HashMap<String, f64>>,
}

impl PerplexityScorer {
    pub fn new(provider: Option<Box<dyn PerplexityProvider>>, fallback: Option<UnigramPerplexity>) -> Self {
        Self {
            provider,
            fallback,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn unigram(corpus: Arc<Corpus>) -> Self {
        Self::new(None, Some(UnigramPerplexity::new(corpus)))
    }

    fn key(text: &str) -> String {
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn score(&self, text: &str) -> Result<f64> {
        let key = Self::key(text);
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let from_provider = self.provider.as_ref().map(|p| p.perplexity(text));
        let value = match (from_provider, &self.fallback) {
            (Some(Ok(v)), _) => v,
            (_, Some(f)) => f.perplexity(text)?,
            (Some(Err(e)), None) => return Err(e),
            (None, None) => {
                return Err(Error::ProviderUnavailable(
                    "no perplexity provider and fallback disabled".into(),
                ))
            }
        };
        self.cache.lock().unwrap().insert(key, value);
        Ok(value)
    }
}
