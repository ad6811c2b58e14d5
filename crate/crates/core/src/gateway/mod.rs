//! Chat-completion gateway over pluggable providers, with transcript
//! record/replay and usage accounting.

mod openai;
mod transcript;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{ApproxTokenizer, Tokenizer};

pub use openai::OpenAiChatProvider;
pub use transcript::{Transcript, TranscriptEntry, TRANSCRIPT_FORMAT, TRANSCRIPT_VERSION};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider timed out after {0:?}")]
    ProviderTimeout(Duration),
    #[error("provider error (status {status}): {message}")]
    ProviderError { status: u16, message: String },
    #[error("no transcript entry for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl GatewayError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        GatewayError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    #[default]
    Live,
    Record,
    Replay,
}

/// Currency per 1K tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    pub currency: String,
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self { currency: "EUR".into(), input_per_1k: 0.0, output_per_1k: 0.0 }
    }
}

impl CostTable {
    pub fn cost(&self, usage: Usage) -> f64 {
        usage.prompt_tokens as f64 / 1000.0 * self.input_per_1k
            + usage.output_tokens as f64 / 1000.0 * self.output_per_1k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub provider_id: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_s: f64,
    pub mode: GatewayMode,
    pub transcript: Option<PathBuf>,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub cost: CostTable,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider_id: "openai".into(),
            model_id: "gpt-4-turbo".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: 4096,
            timeout_s: 300.0,
            mode: GatewayMode::Live,
            transcript: None,
            base_url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            cost: CostTable::default(),
        }
    }
}

impl LlmConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s.max(0.0))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        match self.mode {
            GatewayMode::Replay | GatewayMode::Record if self.transcript.is_none() => {
                Err(GatewayError::Config(format!("{:?} mode requires a transcript path", self.mode).to_lowercase()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub latency_s: f64,
    pub cost_estimate: f64,
    /// Cost of the original live call when this completion was replayed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_cost: Option<f64>,
    #[serde(default)]
    pub replayed: bool,
}

impl Completion {
    /// Cost for reporting: the live cost, or the recorded one when replayed.
    pub fn reporting_cost(&self) -> f64 {
        self.recorded_cost.unwrap_or(self.cost_estimate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, request: &ChatRequest, config: &LlmConfig) -> Result<ProviderReply, GatewayError>;
}

/// Stable hash of what determines a completion. Depends only on the
/// request text, the model id and the temperature.
pub fn fingerprint(request: &ChatRequest, model_id: &str, temperature: f64) -> String {
    let canonical = serde_json::json!({
        "model_id": model_id,
        "system": request.system,
        "temperature": format!("{temperature:.4}"),
        "user": request.user,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    pub latency_s: f64,
}

impl Accounting {
    fn add(&mut self, c: &Completion) {
        self.calls += 1;
        self.prompt_tokens += c.usage.prompt_tokens;
        self.output_tokens += c.usage.output_tokens;
        self.cost += c.cost_estimate;
        self.latency_s += c.latency_s;
    }
}

pub struct LlmGateway {
    config: LlmConfig,
    provider: Option<Arc<dyn ChatProvider>>,
    transcript: Option<Mutex<Transcript>>,
    totals: Mutex<Accounting>,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway")
            .field("config", &self.config)
            .field("provider", &self.provider.as_ref().map(|p| p.id().to_string()))
            .finish()
    }
}

impl LlmGateway {
    pub fn new(config: LlmConfig, provider: Option<Arc<dyn ChatProvider>>) -> Result<Self, GatewayError> {
        config.validate()?;
        if config.mode != GatewayMode::Replay && provider.is_none() {
            return Err(GatewayError::Config(format!("{:?} mode requires a provider", config.mode)));
        }
        let transcript = match (&config.mode, &config.transcript) {
            (GatewayMode::Replay, Some(path)) => {
                if !path.exists() {
                    return Err(GatewayError::Config(format!("transcript {} does not exist", path.display())));
                }
                Some(Mutex::new(Transcript::open(path)?))
            }
            (GatewayMode::Record, Some(path)) => Some(Mutex::new(Transcript::open(path)?)),
            _ => None,
        };
        Ok(Self { config, provider, transcript, totals: Mutex::new(Accounting::default()) })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn fingerprint(&self, request: &ChatRequest) -> String {
        fingerprint(request, &self.config.model_id, self.config.temperature)
    }

    pub fn totals(&self) -> Accounting {
        *self.totals.lock().expect("accounting lock")
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let completion = match self.config.mode {
            GatewayMode::Replay => self.replay(request)?,
            GatewayMode::Live => self.live(request)?,
            GatewayMode::Record => {
                let completion = self.live(request)?;
                let entry = TranscriptEntry {
                    fingerprint: self.fingerprint(request),
                    model_id: self.config.model_id.clone(),
                    completion: completion.clone(),
                };
                self.transcript
                    .as_ref()
                    .expect("record mode has a transcript")
                    .lock()
                    .expect("transcript lock")
                    .record(entry)?;
                completion
            }
        };
        self.totals.lock().expect("accounting lock").add(&completion);
        Ok(completion)
    }

    fn replay(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let fp = self.fingerprint(request);
        let transcript =
            self.transcript.as_ref().expect("replay mode has a transcript").lock().expect("transcript lock");
        let entry = transcript.get(&fp).ok_or(GatewayError::ReplayMiss { fingerprint: fp })?;
        let stored = &entry.completion;
        Ok(Completion {
            text: stored.text.clone(),
            usage: stored.usage,
            latency_s: stored.latency_s,
            cost_estimate: 0.0,
            recorded_cost: Some(stored.reporting_cost()),
            replayed: true,
        })
    }

    fn live(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let provider = self.provider.as_ref().ok_or_else(|| GatewayError::Config("no provider configured".into()))?;
        let started = Instant::now();
        let reply = provider.chat(request, &self.config)?;
        let latency = started.elapsed();
        if latency > self.config.timeout() && self.config.timeout_s > 0.0 {
            return Err(GatewayError::ProviderTimeout(self.config.timeout()));
        }
        Ok(Completion {
            cost_estimate: self.config.cost.cost(reply.usage),
            text: reply.text,
            usage: reply.usage,
            latency_s: latency.as_secs_f64(),
            recorded_cost: None,
            replayed: false,
        })
    }
}

/// Offline provider answering from a queue of canned texts, or from a
/// function of the request. Usage is estimated with the approximate
/// tokenizer. Useful for building transcripts without network access.
pub struct ScriptedProvider {
    id: String,
    queue: Mutex<VecDeque<Result<String, GatewayError>>>,
    responder: Option<Responder>,
}

type Responder = Box<dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync>;

impl ScriptedProvider {
    pub fn queue<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: "scripted".into(),
            queue: Mutex::new(replies.into_iter().map(|s| Ok(s.into())).collect()),
            responder: None,
        }
    }

    pub fn from_results(replies: Vec<Result<String, GatewayError>>) -> Self {
        Self { id: "scripted".into(), queue: Mutex::new(replies.into()), responder: None }
    }

    pub fn responder<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        Self { id: "scripted".into(), queue: Mutex::new(VecDeque::new()), responder: Some(Box::new(f)) }
    }
}

impl ChatProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, request: &ChatRequest, _config: &LlmConfig) -> Result<ProviderReply, GatewayError> {
        let text = if let Some(f) = &self.responder {
            f(request)?
        } else {
            self.queue.lock().expect("queue lock").pop_front().unwrap_or_else(|| {
                Err(GatewayError::ProviderError { status: 0, message: "scripted provider exhausted".into() })
            })?
        };
        let t = ApproxTokenizer;
        Ok(ProviderReply {
            usage: Usage {
                prompt_tokens: (t.count(&request.system) + t.count(&request.user)) as u64,
                output_tokens: t.count(&text) as u64,
            },
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(user: &str) -> ChatRequest {
        ChatRequest { system: "sys".into(), user: user.into() }
    }

    fn config(mode: GatewayMode, path: Option<PathBuf>) -> LlmConfig {
        LlmConfig {
            mode,
            transcript: path,
            cost: CostTable { currency: "EUR".into(), input_per_1k: 0.01, output_per_1k: 0.03 },
            ..LlmConfig::default()
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = fingerprint(&req("u"), "m", 0.2);
        assert_eq!(a, fingerprint(&req("u"), "m", 0.2));
        assert_eq!(a.len(), 64);
        assert_ne!(a, fingerprint(&req("u2"), "m", 0.2));
        assert_ne!(a, fingerprint(&req("u"), "m2", 0.2));
        assert_ne!(a, fingerprint(&req("u"), "m", 0.3));
        // temperature participates at four decimals
        assert_eq!(
            fingerprint(&req("hello"), "gpt-4-turbo", 0.2),
            fingerprint(&ChatRequest { system: "sys".into(), user: "hello".into() }, "gpt-4-turbo", 0.2000001)
        );
    }

    #[test]
    fn mode_requirements() {
        assert!(matches!(LlmGateway::new(config(GatewayMode::Replay, None), None), Err(GatewayError::Config(_))));
        let p: Arc<dyn ChatProvider> = Arc::new(ScriptedProvider::queue(["x"]));
        assert!(matches!(LlmGateway::new(config(GatewayMode::Record, None), Some(p)), Err(GatewayError::Config(_))));
        assert!(matches!(LlmGateway::new(config(GatewayMode::Live, None), None), Err(GatewayError::Config(_))));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let p: Arc<dyn ChatProvider> = Arc::new(ScriptedProvider::queue(["first answer", "second answer"]));
        let rec = LlmGateway::new(config(GatewayMode::Record, Some(path.clone())), Some(p)).unwrap();
        let live = rec.complete(&req("a")).unwrap();
        assert!(!live.replayed);
        assert!(live.cost_estimate > 0.0);
        assert_eq!(Transcript::open(&path).unwrap().len(), 1);
        rec.complete(&req("b")).unwrap();
        assert_eq!(Transcript::open(&path).unwrap().len(), 2);
        let totals = rec.totals();
        assert_eq!(totals.calls, 2);

        let rep = LlmGateway::new(config(GatewayMode::Replay, Some(path)), None).unwrap();
        let again = rep.complete(&req("a")).unwrap();
        assert_eq!(again.text, "first answer");
        assert_eq!(again.cost_estimate, 0.0);
        assert_eq!(again.recorded_cost, Some(live.cost_estimate));
        assert!(again.replayed);
        assert_eq!(rep.complete(&req("a")).unwrap(), again);
        assert!(matches!(rep.complete(&req("zzz")), Err(GatewayError::ReplayMiss { .. })));
    }

    #[test]
    fn rerecording_keeps_fingerprints_unique() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let p: Arc<dyn ChatProvider> = Arc::new(ScriptedProvider::queue(["one", "two"]));
        let rec = LlmGateway::new(config(GatewayMode::Record, Some(path.clone())), Some(p)).unwrap();
        rec.complete(&req("a")).unwrap();
        rec.complete(&req("a")).unwrap();
        let t = Transcript::open(&path).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries()[0].completion.text, "two");
    }

    #[test]
    fn accounting_sums_calls() {
        let p: Arc<dyn ChatProvider> = Arc::new(ScriptedProvider::queue(["aaaa bbbb", "cccc"]));
        let gw = LlmGateway::new(config(GatewayMode::Live, None), Some(p)).unwrap();
        let a = gw.complete(&req("x")).unwrap();
        let b = gw.complete(&req("y")).unwrap();
        let t = gw.totals();
        assert_eq!(t.output_tokens, a.usage.output_tokens + b.usage.output_tokens);
        assert_eq!(t.prompt_tokens, a.usage.prompt_tokens + b.usage.prompt_tokens);
        assert!((t.cost - (a.cost_estimate + b.cost_estimate)).abs() < 1e-12);
        assert!(gw.complete(&req("z")).is_err());
    }
}
