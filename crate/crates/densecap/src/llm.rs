//! Optional caption merging through an external text-generation service.
//!
//! The wire contract is a single HTTP POST of
//! `{"prompt": str, "max_tokens": int, "temperature": number}` answered by
//! `{"text": str}`. Merging is fail-open: with no client configured, or on
//! any transport failure after the configured retries, the group falls back
//! to its top-1 weighted caption and the fallback is recorded in the run
//! log.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{select_top1, EnsembleWeights, TimestampGroup};
use crate::error::{Error as PipelineError, Result};

/// Placeholder in the prompt template receiving the newline-joined captions.
pub const CAPTIONS_PLACEHOLDER: &str = "{captions}";

/// Transport-level failures; never surfaced to the pipeline.
#[derive(Debug, Error)]
pub enum TextGenError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    BadResponse(String),
}

/// One generation request.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// A text-generation backend. Implementations must be shareable across the
/// merge workers.
pub trait TextGenerationClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> std::result::Result<String, TextGenError>;
}

/// Client section of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub prompt_template: PathBuf,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_max_in_flight() -> usize {
    1
}

fn default_max_tokens() -> u32 {
    128
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Blocking HTTP implementation of [`TextGenerationClient`].
pub struct HttpTextGenerationClient {
    endpoint: String,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpTextGenerationClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PipelineError::Config(format!("http client: {e}")))?;
        Ok(HttpTextGenerationClient {
            endpoint: endpoint.into(),
            retries,
            client,
        })
    }

    pub fn from_config(cfg: &LlmConfig) -> Result<Self> {
        Self::new(
            cfg.endpoint.clone(),
            Duration::from_millis(cfg.timeout_ms),
            cfg.retries,
        )
    }

    fn attempt(&self, request: &GenerationRequest) -> std::result::Result<String, TextGenError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| TextGenError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(TextGenError::Transport(format!(
                "status {}",
                response.status()
            )));
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| TextGenError::BadResponse(e.to_string()))?;
        Ok(wire.text)
    }
}

impl TextGenerationClient for HttpTextGenerationClient {
    fn generate(&self, request: &GenerationRequest) -> std::result::Result<String, TextGenError> {
        let mut last = None;
        for _ in 0..=self.retries {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// A UTF-8 template with a `{captions}` placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains(CAPTIONS_PLACEHOLDER) {
            return Err(PipelineError::Config(format!(
                "prompt template has no {CAPTIONS_PLACEHOLDER} placeholder"
            )));
        }
        Ok(PromptTemplate { template })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        PromptTemplate::new(text)
    }

    /// Substitutes the newline-joined captions into the template.
    pub fn render(&self, captions: &[&str]) -> String {
        self.template
            .replace(CAPTIONS_PLACEHOLDER, &captions.join("\n"))
    }
}

/// The merge decision for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedCaption {
    pub caption: String,
    pub weighted_score: f64,
    /// False when the top-1 fallback was used.
    pub used_llm: bool,
    /// Present when a transport failure forced the fallback.
    pub fallback_reason: Option<String>,
}

/// Merges one group's captions through the client, falling back to the
/// top-1 caption when the client is absent or fails. The merged caption
/// reuses the top-1 weighted score.
pub fn merge_with_llm(
    group: &TimestampGroup,
    weights: &EnsembleWeights,
    client: Option<&dyn TextGenerationClient>,
    template: &PromptTemplate,
    cfg: &MergeSettings,
) -> Result<MergedCaption> {
    let top1 = select_top1(group, weights)?;
    let Some(client) = client else {
        return Ok(MergedCaption {
            caption: top1.caption,
            weighted_score: top1.weighted_score,
            used_llm: false,
            fallback_reason: None,
        });
    };
    if group.entries.len() < 2 {
        // Nothing to combine; spare the round-trip.
        return Ok(MergedCaption {
            caption: top1.caption,
            weighted_score: top1.weighted_score,
            used_llm: false,
            fallback_reason: None,
        });
    }
    let captions: Vec<&str> = group.entries.iter().map(|e| e.caption.as_str()).collect();
    let request = GenerationRequest {
        prompt: template.render(&captions),
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
    };
    match client.generate(&request) {
        Ok(text) if !text.trim().is_empty() => Ok(MergedCaption {
            caption: text.trim().to_string(),
            weighted_score: top1.weighted_score,
            used_llm: true,
            fallback_reason: None,
        }),
        Ok(_) => Ok(MergedCaption {
            caption: top1.caption,
            weighted_score: top1.weighted_score,
            used_llm: false,
            fallback_reason: Some("empty completion".into()),
        }),
        Err(e) => Ok(MergedCaption {
            caption: top1.caption,
            weighted_score: top1.weighted_score,
            used_llm: false,
            fallback_reason: Some(e.to_string()),
        }),
    }
}

/// Request knobs shared by all merges of a run.
#[derive(Debug, Clone, Copy)]
pub struct MergeSettings {
    pub max_tokens: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
}

impl Default for MergeSettings {
    fn default() -> Self {
        MergeSettings {
            max_tokens: default_max_tokens(),
            temperature: 0.0,
            max_in_flight: default_max_in_flight(),
        }
    }
}

impl MergeSettings {
    pub fn from_config(cfg: &LlmConfig) -> Self {
        MergeSettings {
            max_tokens: cfg.max_tokens,
            temperature: cfg.temperature,
            max_in_flight: cfg.max_in_flight.max(1),
        }
    }
}

/// Merges every group, keeping at most `max_in_flight` requests in flight.
/// Results are returned in group order regardless of completion order.
pub fn merge_groups(
    groups: &[TimestampGroup],
    weights: &EnsembleWeights,
    client: Option<&dyn TextGenerationClient>,
    template: &PromptTemplate,
    cfg: &MergeSettings,
) -> Result<Vec<MergedCaption>> {
    let workers = cfg.max_in_flight.max(1).min(groups.len().max(1));
    if workers <= 1 || client.is_none() {
        return groups
            .iter()
            .map(|group| merge_with_llm(group, weights, client, template, cfg))
            .collect();
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MergedCaption>>>> =
        Mutex::new((0..groups.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= groups.len() {
                    break;
                }
                let merged = merge_with_llm(&groups[index], weights, client, template, cfg);
                results.lock().expect("merge results lock")[index] = Some(merged);
            });
        }
    });
    results
        .into_inner()
        .expect("merge results lock")
        .into_iter()
        .map(|slot| slot.expect("every group merged"))
        .collect()
}

pub mod stub {
    //! Minimal in-process HTTP server speaking the generation wire
    //! contract, for tests and offline experiments.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{SocketAddr, TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;
    use std::time::Duration;

    /// Serves `{"text": reply(prompt)}` for each POSTed prompt and records
    /// every prompt it saw.
    pub struct StubServer {
        addr: SocketAddr,
        prompts: Arc<Mutex<Vec<String>>>,
        shutdown: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        pub fn spawn(
            reply: impl Fn(&str) -> String + Send + Sync + 'static,
        ) -> std::io::Result<StubServer> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let prompts = Arc::new(Mutex::new(Vec::new()));
            let shutdown = Arc::new(AtomicBool::new(false));

            let thread_prompts = prompts.clone();
            let thread_shutdown = shutdown.clone();
            let handle = std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if thread_shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let _ = handle_connection(stream, &reply, &thread_prompts);
                }
            });
            Ok(StubServer {
                addr,
                prompts,
                shutdown,
                handle: Some(handle),
            })
        }

        /// `http://127.0.0.1:<port>` for client configuration.
        pub fn endpoint(&self) -> String {
            format!("http://{}", self.addr)
        }

        /// Every prompt received so far, in arrival order.
        pub fn received_prompts(&self) -> Vec<String> {
            self.prompts.lock().expect("stub prompts lock").clone()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.shutdown.store(true, Ordering::SeqCst);
            // Unblock the accept loop.
            let _ = TcpStream::connect(self.addr);
            if let Some(handle) = self.handle.take() {
                let _ = handle.join();
            }
        }
    }

    fn handle_connection(
        stream: TcpStream,
        reply: &impl Fn(&str) -> String,
        prompts: &Mutex<Vec<String>>,
    ) -> std::io::Result<()> {
        stream.set_read_timeout(Some(Duration::from_secs(5)))?;
        let mut reader = BufReader::new(stream);

        let mut line = String::new();
        reader.read_line(&mut line)?;
        let mut content_length = 0usize;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header)? == 0 {
                return Ok(());
            }
            let header = header.trim();
            if header.is_empty() {
                break;
            }
            if let Some(value) = header
                .to_ascii_lowercase()
                .strip_prefix("content-length:")
                .map(str::trim)
            {
                content_length = value.parse().unwrap_or(0);
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;

        let prompt = serde_json::from_slice::<serde_json::Value>(&body)
            .ok()
            .and_then(|v| v.get("prompt").and_then(|p| p.as_str()).map(str::to_string))
            .unwrap_or_default();
        prompts
            .lock()
            .expect("stub prompts lock")
            .push(prompt.clone());

        let payload = serde_json::json!({ "text": reply(&prompt) }).to_string();
        let response = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            payload.len(),
            payload
        );
        let mut stream = reader.into_inner();
        stream.write_all(response.as_bytes())?;
        stream.flush()
    }
}
