//! Chat-completion clients: OpenAI-compatible HTTP with retries, a
//! read-through response cache, and a cache-only replay client.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_name: String,
    pub endpoint: String,
    pub api_key_env: String,
    pub max_context_tokens: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout", with = "seconds")]
    pub request_timeout: Duration,
}

fn default_retries() -> u32 {
    3
}

fn default_timeout() -> Duration {
    Duration::from_secs(120)
}

mod seconds {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl ModelConfig {
    pub fn new(model_name: impl Into<String>, endpoint: impl Into<String>, max_context_tokens: usize) -> Self {
        ModelConfig {
            model_name: model_name.into(),
            endpoint: endpoint.into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_context_tokens,
            temperature: 0.0,
            max_retries: default_retries(),
            request_timeout: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_context_tokens == 0 {
            return Err(ClientError::Config("max_context_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config("temperature must be a non-negative number".into()));
        }
        if self.model_name.is_empty() {
            return Err(ClientError::Config("model name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no cached response for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("response cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that turns a prompt into model text.
pub trait ChatClient: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

/// Hex SHA-256 of `model_name + prompt`; the replay file stem.
pub fn cache_key(model_name: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_name.as_bytes());
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Directory of `<cache_key>.txt` files holding raw response text.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ClientError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| ClientError::Cache { path: dir.clone(), source })?;
        Ok(ResponseCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    /// Opens an existing directory without creating it.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self, ClientError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(ClientError::Config(format!(
                "replay cache directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ResponseCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, model_name: &str, prompt: &str) -> Result<Option<String>, ClientError> {
        let path = self.path(&cache_key(model_name, prompt));
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(ClientError::Cache { path, source }),
        }
    }

    pub fn put(&self, model_name: &str, prompt: &str, response: &str) -> Result<(), ClientError> {
        let key = cache_key(model_name, prompt);
        let path = self.path(&key);
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(response.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|source| ClientError::Cache { path, source })
    }
}

/// Serves responses from a cache only; never touches the network.
pub struct ReplayClient {
    model_name: String,
    cache: ResponseCache,
}

impl ReplayClient {
    pub fn new(model_name: impl Into<String>, cache: ResponseCache) -> Self {
        ReplayClient {
            model_name: model_name.into(),
            cache,
        }
    }
}

impl ChatClient for ReplayClient {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        self.cache
            .get(&self.model_name, prompt)?
            .ok_or_else(|| ClientError::ReplayMiss {
                hash: cache_key(&self.model_name, prompt),
            })
    }
}

/// Read-through cache in front of another client.
pub struct CachedClient<C> {
    inner: C,
    cache: ResponseCache,
}

impl<C: ChatClient> CachedClient<C> {
    pub fn new(inner: C, cache: ResponseCache) -> Self {
        CachedClient { inner, cache }
    }
}

impl<C: ChatClient> ChatClient for CachedClient<C> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        if let Some(hit) = self.cache.get(self.inner.model_name(), prompt)? {
            return Ok(hit);
        }
        let response = self.inner.complete(prompt)?;
        self.cache.put(self.inner.model_name(), prompt, &response)?;
        Ok(response)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SendFailure {
    pub retryable: bool,
    pub message: String,
}

/// One request/response exchange, no retries.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, SendFailure>;
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking HTTPS transport speaking the chat-completions wire format.
pub struct HttpTransport {
    http: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the API key from the environment variable named in `config`;
    /// a missing key is a configuration error.
    pub fn from_config(config: &ModelConfig) -> Result<Self, ClientError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ClientError::Config(format!("environment variable {} is not set", config.api_key_env))
        })?;
        Self::with_key(config, Some(api_key))
    }

    pub fn with_key(config: &ModelConfig, api_key: Option<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(HttpTransport {
            http,
            url: completions_url(&config.endpoint),
            api_key,
        })
    }
}

/// `https://host/v1` and `https://host/v1/chat/completions` both address the
/// completions route.
pub fn completions_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 409 | 429) || status >= 500
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, SendFailure> {
        let mut builder = self.http.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| SendFailure {
            retryable: e.is_timeout() || e.is_connect() || e.is_request(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| SendFailure {
            retryable: true,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(SendFailure {
                retryable: is_retryable_status(status.as_u16()),
                message: format!("HTTP {status}: {}", body.chars().take(300).collect::<String>()),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&body).map_err(|e| SendFailure {
            retryable: false,
            message: format!("unexpected response body: {e}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| SendFailure {
                retryable: false,
                message: "response has no choices".into(),
            })
    }
}

/// Exponential backoff between attempts.
#[derive(Debug, Clone, Copy)]
pub struct Backoff {
    pub initial: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            initial: Duration::from_millis(500),
            max: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Backoff {
            initial: Duration::ZERO,
            max: Duration::ZERO,
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.initial
            .saturating_mul(2u32.saturating_pow(retry))
            .min(self.max)
    }
}

/// Chat-completions client with retries over any [`Transport`].
pub struct OpenAiClient<T = HttpTransport> {
    config: ModelConfig,
    transport: T,
    backoff: Backoff,
}

impl OpenAiClient<HttpTransport> {
    pub fn from_config(config: ModelConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let transport = HttpTransport::from_config(&config)?;
        Ok(OpenAiClient::with_transport(config, transport))
    }
}

impl<T: Transport> OpenAiClient<T> {
    pub fn with_transport(config: ModelConfig, transport: T) -> Self {
        OpenAiClient {
            config,
            transport,
            backoff: Backoff::default(),
        }
    }

    pub fn backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: self.config.temperature,
        }
    }
}

impl<T: Transport> ChatClient for OpenAiClient<T> {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let request = self.request(prompt);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.transport.send(&request) {
                Ok(text) => return Ok(text),
                Err(failure) if failure.retryable && attempts <= self.config.max_retries => {
                    let delay = self.backoff.delay(attempts - 1);
                    tracing::warn!(attempt = attempts, ?delay, "retrying: {}", failure.message);
                    std::thread::sleep(delay);
                }
                Err(failure) => {
                    return Err(ClientError::Transport {
                        attempts,
                        message: failure.message,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        retryable: bool,
    }

    impl Transport for Flaky {
        fn send(&self, request: &ChatRequest) -> Result<String, SendFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(SendFailure {
                    retryable: self.retryable,
                    message: "boom".into(),
                })
            } else {
                Ok(format!("echo: {}", request.messages[0].content))
            }
        }
    }

    fn config(retries: u32) -> ModelConfig {
        let mut c = ModelConfig::new("test-model", "http://127.0.0.1:1", 4096);
        c.max_retries = retries;
        c
    }

    fn flaky(fail_first: u32, retryable: bool) -> Flaky {
        Flaky {
            calls: AtomicU32::new(0),
            fail_first,
            retryable,
        }
    }

    #[test]
    fn cache_key_is_sha256_of_model_and_prompt() {
        assert_eq!(
            cache_key("m", "p"),
            hex::encode(Sha256::digest(b"mp"))
        );
    }

    #[test]
    fn retries_then_succeeds() {
        let client = OpenAiClient::with_transport(config(2), flaky(2, true)).backoff(Backoff::none());
        assert_eq!(client.complete("hi").unwrap(), "echo: hi");
        assert_eq!(client.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_report_attempts() {
        let client = OpenAiClient::with_transport(config(2), flaky(10, true)).backoff(Backoff::none());
        match client.complete("hi") {
            Err(ClientError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(client.transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn permanent_failure_is_not_retried() {
        let client = OpenAiClient::with_transport(config(5), flaky(10, false)).backoff(Backoff::none());
        assert!(matches!(client.complete("hi"), Err(ClientError::Transport { attempts: 1, .. })));
    }

    #[test]
    fn unreachable_endpoint_three_attempts() {
        let cfg = config(2);
        let transport = HttpTransport::with_key(&cfg, None).unwrap();
        let client = OpenAiClient::with_transport(cfg, transport).backoff(Backoff::none());
        match client.complete("hi") {
            Err(ClientError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cached_prompt_skips_network() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.put("test-model", "hi", "cached answer").unwrap();
        let inner = OpenAiClient::with_transport(config(0), flaky(0, true));
        let client = CachedClient::new(inner, cache);
        assert_eq!(client.complete("hi").unwrap(), "cached answer");
        assert_eq!(client.inner.transport.calls.load(Ordering::SeqCst), 0);
        assert_eq!(client.complete("new").unwrap(), "echo: new");
        assert_eq!(client.complete("new").unwrap(), "echo: new");
        assert_eq!(client.inner.transport.calls.load(Ordering::SeqCst), 1);
        assert!(dir.path().join(format!("{}.txt", cache_key("test-model", "new"))).is_file());
    }

    #[test]
    fn replay_hit_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        cache.put("m", "prompt", "fixture text").unwrap();
        let client = ReplayClient::new("m", cache);
        assert_eq!(client.complete("prompt").unwrap(), "fixture text");
        match client.complete("other") {
            Err(ClientError::ReplayMiss { hash }) => assert_eq!(hash, cache_key("m", "other")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation_and_serde() {
        let mut c = config(1);
        assert!(c.validate().is_ok());
        c.temperature = -1.0;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&config(1)).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config(1));
        let minimal: ModelConfig = serde_json::from_str(
            r#"{"model_name":"m","endpoint":"http://x","api_key_env":"K","max_context_tokens":10}"#,
        )
        .unwrap();
        assert_eq!(minimal.temperature, 0.0);
        assert_eq!(minimal.max_retries, 3);
    }

    #[test]
    fn url_normalization() {
        assert_eq!(completions_url("https://a/v1/"), "https://a/v1/chat/completions");
        assert_eq!(completions_url("https://a/v1/chat/completions"), "https://a/v1/chat/completions");
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let b = Backoff {
            initial: Duration::from_millis(100),
            max: Duration::from_millis(350),
        };
        assert_eq!(b.delay(0), Duration::from_millis(100));
        assert_eq!(b.delay(1), Duration::from_millis(200));
        assert_eq!(b.delay(2), Duration::from_millis(350));
    }
}
