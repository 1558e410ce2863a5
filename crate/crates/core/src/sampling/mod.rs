//! Main response and stochastic samples from a chat-completion provider.

mod cache;
mod provider;

pub use cache::{CachedGeneration, GenerationCache};
pub use provider::{ChatMessage, ChatProvider, ChatRequest, Completion, HttpChatProvider, ProviderError};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::{RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Query, Response, ResponseSet};

fn default_temperature() -> f64 {
    0.7
}
fn default_n_samples() -> usize {
    10
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_parallel() -> usize {
    4
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model_id: String,
    #[serde(default)]
    pub api_key_env_var: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    /// Ask the provider for per-token log probabilities.
    #[serde(default = "default_true")]
    pub request_logprobs: bool,
}

impl ProviderConfig {
    pub fn new(endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint_url: endpoint_url.into(),
            model_id: model_id.into(),
            api_key_env_var: String::new(),
            temperature: default_temperature(),
            n_samples: default_n_samples(),
            max_tokens: default_max_tokens(),
            request_timeout_secs: default_timeout_secs(),
            max_parallel_requests: default_parallel(),
            request_logprobs: true,
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(SamplingError::InvalidConfig(format!(
                "temperature must lie in (0, 2], got {}",
                self.temperature
            )));
        }
        if self.n_samples == 0 {
            return Err(SamplingError::InvalidConfig("n_samples must be ≥ 1".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_REFUSAL_PATTERNS: &[&str] = &[
    r"i['’]m sorry",
    r"i cannot",
    r"i can['’]t",
    r"i do not have",
    r"i don['’]t have",
    r"as an ai",
];

/// Flags a response as a refusal when it is empty, or when it matches a
/// pattern and is shorter than `min_word_count` words.
#[derive(Debug, Clone)]
pub struct RefusalPolicy {
    patterns: Vec<String>,
    compiled: RegexSet,
    pub min_word_count: usize,
}

impl RefusalPolicy {
    pub fn new<I, S>(patterns: I, min_word_count: usize) -> Result<Self, SamplingError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(Into::into).collect();
        let compiled = RegexSetBuilder::new(&patterns)
            .case_insensitive(true)
            .build()
            .map_err(|e| SamplingError::InvalidRegex(e.to_string()))?;
        Ok(RefusalPolicy {
            patterns,
            compiled,
            min_word_count,
        })
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

impl Default for RefusalPolicy {
    fn default() -> Self {
        RefusalPolicy::new(DEFAULT_REFUSAL_PATTERNS.iter().copied(), 25).expect("default patterns compile")
    }
}

pub fn detect_refusal(text: &str, policy: &RefusalPolicy) -> bool {
    let words = text.split_whitespace().count();
    if words == 0 {
        return true;
    }
    words < policy.min_word_count && policy.compiled.is_match(text)
}

const BIO_TEMPLATE: &str = "Tell me a short bio of the person <entity>. Begin with their birth, significant life events, \
achievements, and contributions. Include their education, career milestones, any notable awards or recognitions \
received, and their impact on their field or society.  Ensure the biography is concise, factual, and engaging, \
covering key aspects of their life and work.";

/// The biography prompt with `entity` substituted.
pub fn bio_prompt(entity: &str) -> Result<String, SamplingError> {
    let entity = entity.trim();
    if entity.is_empty() {
        return Err(SamplingError::EmptyEntity);
    }
    Ok(BIO_TEMPLATE.replace("<entity>", entity))
}

/// Recovers the entity from a prompt produced by [`bio_prompt`].
pub fn entity_from_bio_prompt(prompt: &str) -> Option<&str> {
    let (head, tail) = BIO_TEMPLATE.split_once("<entity>")?;
    prompt.strip_prefix(head)?.strip_suffix(tail)
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("entity must be non-empty")]
    EmptyEntity,
    #[error("invalid refusal pattern: {0}")]
    InvalidRegex(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("provider unreachable after retries; {} generation(s) missing {failed:?}, {} cached: {message}", failed.len(), cached.len())]
    ProviderUnreachable {
        failed: Vec<usize>,
        cached: Vec<usize>,
        message: String,
    },
    #[error("provider authentication failed: {0}")]
    AuthFailure(String),
    #[error("malformed provider reply: {0}")]
    MalformedReply(String),
    #[error("generation cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

/// Everything `generate_response_set` needs besides the query.
pub struct SamplingContext<'a> {
    pub config: &'a ProviderConfig,
    pub policy: &'a RefusalPolicy,
    pub provider: &'a dyn ChatProvider,
    pub cache: &'a GenerationCache,
    pub retry: RetryPolicy,
    pub seed: Option<u64>,
}

impl SamplingContext<'_> {
    fn request(&self, query: &Query, sample_index: usize) -> ChatRequest {
        ChatRequest {
            model: self.config.model_id.clone(),
            messages: vec![ChatMessage::user(query.prompt.clone())],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            logprobs: self.config.request_logprobs,
            seed: self.seed.map(|s| s.wrapping_add(sample_index as u64)),
            sample_index,
        }
    }
}

/// Produces the main response (index 0) and `n_samples` samples, each a
/// separate provider call, serving cache hits without touching the provider.
pub fn generate_response_set(query: &Query, ctx: &SamplingContext<'_>) -> Result<ResponseSet, SamplingError> {
    ctx.config.validate()?;
    let total = ctx.config.n_samples + 1;
    let slots: Mutex<Vec<Option<Result<CachedGeneration, SamplingError>>>> =
        Mutex::new((0..total).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = ctx.config.max_parallel_requests.clamp(1, total);

    let fetch = |idx: usize| -> Result<CachedGeneration, SamplingError> {
        let request = ctx.request(query, idx);
        let key = GenerationCache::key(&request);
        if let Some(hit) = ctx.cache.get(&key) {
            return Ok(hit);
        }
        let completion = ctx.retry.run(|| ctx.provider.complete(&request)).map_err(|e| match e {
            ProviderError::Auth(m) => SamplingError::AuthFailure(m),
            ProviderError::Malformed(m) => SamplingError::MalformedReply(m),
            ProviderError::Rejected { status, body } => SamplingError::MalformedReply(format!("status {status}: {body}")),
            ProviderError::Unreachable(m) => SamplingError::ProviderUnreachable {
                failed: vec![idx],
                cached: Vec::new(),
                message: m,
            },
        })?;
        Ok(ctx.cache.put(&key, &query.id, &request, &completion)?)
    };

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= total {
                    break;
                }
                let r = fetch(idx);
                slots.lock().expect("slots poisoned")[idx] = Some(r);
            });
        }
    });

    let results: Vec<Result<CachedGeneration, SamplingError>> = slots
        .into_inner()
        .expect("slots poisoned")
        .into_iter()
        .map(|r| r.expect("every index fetched"))
        .collect();

    let mut generations = Vec::with_capacity(total);
    let mut failed = Vec::new();
    let mut cached = Vec::new();
    let mut messages = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(g) => {
                cached.push(idx);
                generations.push(g);
            }
            Err(SamplingError::ProviderUnreachable { message, .. }) => {
                failed.push(idx);
                messages.push(message);
            }
            Err(other) => return Err(other),
        }
    }
    if !failed.is_empty() {
        messages.dedup();
        return Err(SamplingError::ProviderUnreachable {
            failed,
            cached,
            message: messages.join("; "),
        });
    }

    let mut responses = generations.into_iter().map(|g| Response {
        is_refusal: detect_refusal(&g.text, ctx.policy),
        text: g.text,
        sentences: Vec::new(),
        atomic_claims: None,
        token_logprobs: g.token_logprobs,
    });
    let main = responses.next().expect("main generation present");
    Ok(ResponseSet {
        query: query.clone(),
        main,
        samples: responses.collect(),
        temperature: ctx.config.temperature,
        model_id: ctx.config.model_id.clone(),
    })
}
