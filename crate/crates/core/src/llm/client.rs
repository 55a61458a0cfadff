//! Chat-completions client: cache-first lookup, retries with exponential
//! backoff, a concurrency limit and a token-bucket rate limiter.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LlmSettings;
use crate::error::{Error, Result};
use crate::http::HttpClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// The rendered prompt: all message contents in order.
    pub fn prompt(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub cache_key: String,
    pub template_id: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    /// Transport attempts used when the exchange was first made.
    pub attempts: usize,
    /// True when this call was answered from the cache.
    #[serde(skip)]
    pub cached: bool,
}

/// Hash of (template id, rendered prompt, model, temperature).
pub fn cache_key(template_id: &str, prompt: &str, model: &str, temperature: f64) -> String {
    let digest = Sha256::new()
        .chain_update(template_id.as_bytes())
        .chain_update([0])
        .chain_update(prompt.as_bytes())
        .chain_update([0])
        .chain_update(model.as_bytes())
        .chain_update([0])
        .chain_update(temperature.to_bits().to_le_bytes())
        .finalize();
    hex::encode(digest)
}

/// Raw result of one HTTP exchange with the chat endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    /// A 200 reply in the chat-completions wire format.
    pub fn ok(content: &str) -> Self {
        Reply {
            status: 200,
            body: serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
            })
            .to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Reply {
            status,
            body: String::new(),
        }
    }
}

/// Sends a chat request. `Err` is a connection-level failure.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest, api_key: &str) -> std::result::Result<Reply, String>;
}

pub struct HttpTransport {
    endpoint: String,
    http: HttpClient,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            http: HttpClient::new(timeout),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest, api_key: &str) -> std::result::Result<Reply, String> {
        let r = self.http.post_json(&self.endpoint, request, Some(api_key))?;
        Ok(Reply {
            status: r.status,
            body: r.body,
        })
    }
}

type Responder = Box<dyn Fn(&ChatRequest) -> std::result::Result<Reply, String> + Send + Sync>;

/// In-process transport for tests and offline demos: replays a queue of
/// replies, then falls back to a responder function if one is set.
pub struct MockTransport {
    queue: Mutex<VecDeque<std::result::Result<Reply, String>>>,
    responder: Option<Responder>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl MockTransport {
    pub fn scripted(replies: impl IntoIterator<Item = std::result::Result<Reply, String>>) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().collect()),
            responder: None,
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn from_fn(f: impl Fn(&ChatRequest) -> std::result::Result<Reply, String> + Send + Sync + 'static) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Prompts received, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest, _api_key: &str) -> std::result::Result<Reply, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(request.prompt());
        if let Some(r) = self.queue.lock().unwrap().pop_front() {
            return r;
        }
        match &self.responder {
            Some(f) => f(request),
            None => Err("mock transport has no reply left".into()),
        }
    }
}

/// Exchanges keyed by cache key, persisted as JSONL. Every write rewrites
/// the file through a temporary and a rename, so a failed write leaves the
/// previous contents intact.
pub struct ChatCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, ChatExchange>>,
    lines: Mutex<Vec<String>>,
}

impl ChatCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            lines: Mutex::new(Vec::new()),
        }
    }

    /// Opens (or starts) the cache file at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut lines = Vec::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let ex: ChatExchange = serde_json::from_str(&line).map_err(|e| Error::Line {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert(ex.cache_key.clone(), ex);
                lines.push(line);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            lines: Mutex::new(lines),
        })
    }

    pub fn get(&self, key: &str) -> Option<ChatExchange> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, exchange: &ChatExchange) -> Result<()> {
        let mut lines = self.lines.lock().unwrap();
        if self.entries.read().unwrap().contains_key(&exchange.cache_key) {
            return Ok(());
        }
        let line = serde_json::to_string(exchange)?;
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut tmp = path.as_os_str().to_owned();
            tmp.push(".tmp");
            let tmp = PathBuf::from(tmp);
            let write = || -> std::io::Result<()> {
                let mut f = File::create(&tmp)?;
                for l in lines.iter().chain(std::iter::once(&line)) {
                    f.write_all(l.as_bytes())?;
                    f.write_all(b"\n")?;
                }
                f.sync_all()?;
                std::fs::rename(&tmp, path)
            };
            write().map_err(|e| Error::io(path, e))?;
        }
        lines.push(line);
        self.entries
            .write()
            .unwrap()
            .insert(exchange.cache_key.clone(), exchange.clone());
        Ok(())
    }
}

/// Token bucket: `rate` tokens per second, burst of `max(1, rate)`.
pub struct RateLimiter {
    rate: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// A non-positive rate disables limiting.
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            state: Mutex::new((rate.max(1.0), Instant::now())),
        }
    }

    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * self.rate;
                s.0 = (s.0 + refill).min(self.rate.max(1.0));
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Environment variable holding the credential; read only on a cache miss.
    pub api_key_env: String,
    pub max_attempts: usize,
    pub backoff: Duration,
    pub concurrency: usize,
    pub requests_per_second: f64,
}

impl ClientConfig {
    pub fn from_settings(s: &LlmSettings) -> Self {
        Self {
            model: s.model.clone(),
            temperature: s.temperature,
            max_tokens: s.max_tokens,
            api_key_env: s.api_key_env.clone(),
            max_attempts: s.max_attempts,
            backoff: Duration::from_millis(s.backoff_ms),
            concurrency: s.concurrency,
            requests_per_second: s.requests_per_second,
        }
    }
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self::from_settings(&LlmSettings::default())
    }
}

pub struct ChatClient {
    pub config: ClientConfig,
    transport: Arc<dyn Transport>,
    cache: ChatCache,
    limiter: RateLimiter,
    slots: Semaphore,
}

impl ChatClient {
    pub fn new(config: ClientConfig, transport: Arc<dyn Transport>, cache: ChatCache) -> Self {
        let limiter = RateLimiter::new(config.requests_per_second);
        let slots = Semaphore {
            free: Mutex::new(config.concurrency.max(1)),
            cv: Condvar::new(),
        };
        Self {
            config,
            transport,
            cache,
            limiter,
            slots,
        }
    }

    pub fn cache(&self) -> &ChatCache {
        &self.cache
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages: vec![Message {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    /// Answers `prompt` from the cache, or sends it and caches the result.
    pub fn chat(&self, template_id: &str, prompt: &str) -> Result<ChatExchange> {
        let request = self.request(prompt);
        let key = cache_key(template_id, &request.prompt(), &request.model, request.temperature);
        if let Some(mut hit) = self.cache.get(&key) {
            hit.cached = true;
            return Ok(hit);
        }
        let api_key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::Auth(format!("environment variable {} is not set", self.config.api_key_env)))?;
        let _permit = self.slots.acquire();
        let (response, attempts) = self.send_with_retries(&request, &api_key)?;
        let exchange = ChatExchange {
            cache_key: key,
            template_id: template_id.to_string(),
            request,
            response,
            attempts,
            cached: false,
        };
        self.cache.insert(&exchange)?;
        Ok(exchange)
    }

    fn send_with_retries(&self, request: &ChatRequest, api_key: &str) -> Result<(ChatResponse, usize)> {
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.config.backoff * 2u32.pow((attempt - 2).min(16) as u32));
            }
            self.limiter.acquire();
            match self.transport.send(request, api_key) {
                Ok(r) if r.status == 200 => return Ok((parse_completion(&r.body)?, attempt)),
                Ok(r) if r.status == 401 || r.status == 403 => {
                    return Err(Error::Auth(format!("endpoint returned HTTP {}", r.status)))
                }
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => {
                    return Err(Error::Transport {
                        attempt,
                        message: format!("HTTP {}: {}", r.status, r.body),
                    })
                }
                Err(e) => last = e,
            }
        }
        Err(Error::RetriesExhausted {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

fn parse_completion(body: &str) -> Result<ChatResponse> {
    let c: Completion = serde_json::from_str(body).map_err(|e| Error::MalformedResponse(e.to_string()))?;
    let first = c
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::MalformedResponse("no choices".into()))?;
    Ok(ChatResponse {
        text: first
            .message
            .content
            .ok_or_else(|| Error::MalformedResponse("choice without content".into()))?,
        finish_reason: first.finish_reason,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const KEY_ENV: &str = "JARGON_TEST_LLM_KEY";

    pub(crate) fn config() -> ClientConfig {
        std::env::set_var(KEY_ENV, "test-key");
        ClientConfig {
            api_key_env: KEY_ENV.into(),
            backoff: Duration::from_millis(1),
            requests_per_second: 0.0,
            ..ClientConfig::default()
        }
    }

    fn client(transport: Arc<MockTransport>) -> ChatClient {
        ChatClient::new(config(), transport, ChatCache::in_memory())
    }

    #[test]
    fn cache_hit_makes_no_call() {
        let t = Arc::new(MockTransport::scripted([Ok(Reply::ok("1"))]));
        let c = client(t.clone());
        let a = c.chat("familiarity.v1", "prompt").unwrap();
        let b = c.chat("familiarity.v1", "prompt").unwrap();
        assert_eq!(t.calls(), 1);
        assert!(!a.cached && b.cached);
        assert_eq!(a.response, b.response);
    }

    #[test]
    fn transient_failures_retried() {
        let t = Arc::new(MockTransport::scripted([
            Ok(Reply::status(429)),
            Ok(Reply::status(429)),
            Ok(Reply::ok("0")),
        ]));
        let ex = client(t.clone()).chat("t", "p").unwrap();
        assert_eq!(ex.attempts, 3);
        assert_eq!(t.calls(), 3);

        let t = Arc::new(MockTransport::scripted((0..6).map(|_| Ok(Reply::status(503)))));
        let err = client(t.clone()).chat("t", "p").unwrap_err();
        assert!(matches!(err, Error::RetriesExhausted { attempts: 5, .. }));
        assert_eq!(t.calls(), 5);

        let t = Arc::new(MockTransport::scripted([
            Err("connection refused".into()),
            Ok(Reply::ok("1")),
        ]));
        assert_eq!(client(t).chat("t", "p").unwrap().attempts, 2);
    }

    #[test]
    fn auth_and_malformed() {
        let t = Arc::new(MockTransport::scripted([Ok(Reply::ok("1"))]));
        let mut cfg = config();
        cfg.api_key_env = "JARGON_TEST_UNSET_KEY".into();
        std::env::remove_var("JARGON_TEST_UNSET_KEY");
        let c = ChatClient::new(cfg, t.clone(), ChatCache::in_memory());
        assert!(matches!(c.chat("t", "p"), Err(Error::Auth(_))));
        assert_eq!(t.calls(), 0);

        let t = Arc::new(MockTransport::scripted([Ok(Reply::status(401))]));
        assert!(matches!(client(t.clone()).chat("t", "p"), Err(Error::Auth(_))));
        assert_eq!(t.calls(), 1);

        let t = Arc::new(MockTransport::scripted([Ok(Reply {
            status: 200,
            body: "{\"choices\": []}".into(),
        })]));
        assert!(matches!(client(t).chat("t", "p"), Err(Error::MalformedResponse(_))));
    }

    #[test]
    fn key_depends_on_template_prompt_model_temperature() {
        let k = cache_key("a", "p", "m", 0.0);
        assert_eq!(k, cache_key("a", "p", "m", 0.0));
        assert_ne!(k, cache_key("b", "p", "m", 0.0));
        assert_ne!(k, cache_key("a", "q", "m", 0.0));
        assert_ne!(k, cache_key("a", "p", "n", 0.0));
        assert_ne!(k, cache_key("a", "p", "m", 0.7));
    }

    #[test]
    fn cache_file_replays_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let t = Arc::new(MockTransport::scripted([Ok(Reply::ok("1")), Ok(Reply::ok("0"))]));
        let c = ChatClient::new(config(), t.clone(), ChatCache::open(&path).unwrap());
        c.chat("t", "one").unwrap();
        c.chat("t", "two").unwrap();
        drop(c);
        assert!(!dir.path().join("sub/cache.jsonl.tmp").exists());

        let offline = Arc::new(MockTransport::scripted([]));
        let mut cfg = config();
        cfg.api_key_env = "JARGON_TEST_UNSET_KEY".into();
        let c = ChatClient::new(cfg, offline.clone(), ChatCache::open(&path).unwrap());
        assert_eq!(c.cache().len(), 2);
        assert_eq!(c.chat("t", "two").unwrap().response.text, "0");
        assert_eq!(offline.calls(), 0);
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let l = RateLimiter::new(50.0);
        let start = Instant::now();
        for _ in 0..60 {
            l.acquire();
        }
        // burst of 50, then 10 more at 50/s
        assert!(start.elapsed() >= Duration::from_millis(150));
    }
}
