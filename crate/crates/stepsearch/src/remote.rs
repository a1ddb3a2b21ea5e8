//! Chat-completion adapter for remote actor and reward models.
//!
//! Requests are JSON `{model, messages, temperature}`; replies are read
//! from `choices[0].message.content`. Transport failures, 5xx and 429
//! responses are retried with exponential backoff. Credentials come only
//! from the environment variable named in the endpoint config.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepsearch_core::prompt::{build_prompt, step_template_id, Payload, PromptContext, PromptRegistry};
use stepsearch_core::{
    ActionKind, ActorModel, ModelError, Problem, ReasoningStep, RewardModel, StepCritique, StepLabel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full chat-completions URL.
    pub url: String,
    pub model: String,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
    pub max_in_flight: usize,
    /// Ask for token log-probabilities and score critiques from them.
    pub logprobs: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            model: String::new(),
            api_key_env: None,
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_factor: 2.0,
            max_in_flight: 4,
            logprobs: false,
        }
    }
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig { url: url.into(), model: model.into(), ..EndpointConfig::default() }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_base_ms as f64 * self.backoff_factor.powi(retry as i32);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    /// Probability mass on an affirmative token, when log-probabilities
    /// were requested and a yes/no token was found.
    pub yes_probability: Option<f64>,
    pub attempts: u32,
}

struct Gate {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|e| e.into_inner());
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap_or_else(|e| e.into_inner());
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|e| e.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

static CORRELATION: AtomicU64 = AtomicU64::new(1);

/// Thread-safe blocking client with an in-flight cap.
pub struct ChatClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: Gate,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("url", &self.config.url).field("model", &self.config.model).finish()
    }
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ModelError> {
        if config.url.is_empty() {
            return Err(ModelError::RemoteUnavailable("endpoint url is empty".into()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ModelError::RemoteUnavailable(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| ModelError::RemoteUnavailable(e.to_string()))?;
        let gate = Gate { limit: config.max_in_flight.max(1), busy: Mutex::new(0), freed: Condvar::new() };
        Ok(ChatClient { config, http, api_key, gate })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn chat(&self, prompt: &str, temperature: f64) -> Result<ChatReply, ModelError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ModelError::Failed(format!("temperature {temperature} must be positive")));
        }
        let cid = CORRELATION.fetch_add(1, Ordering::Relaxed);
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        if self.config.logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(5);
        }
        let _permit = self.gate.acquire();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            log::debug!("[req {cid}] attempt {attempt} POST {} ({} prompt bytes)", self.config.url, prompt.len());
            let mut req = self.http.post(&self.config.url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let failure = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let text = resp.text().map_err(|e| ModelError::RemoteUnavailable(e.to_string()))?;
                        log::debug!("[req {cid}] {status}, {} response bytes", text.len());
                        let mut reply = parse_reply(&text)?;
                        reply.attempts = attempt;
                        return Ok(reply);
                    }
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    let detail = format!("HTTP {status}");
                    if !retryable {
                        log::warn!("[req {cid}] {detail}, not retrying");
                        return Err(ModelError::RemoteUnavailable(detail));
                    }
                    detail
                }
                Err(e) => e.to_string(),
            };
            if attempt > self.config.max_retries {
                log::warn!("[req {cid}] giving up after {attempt} attempts: {failure}");
                return Err(ModelError::RemoteUnavailable(format!("{failure} after {attempt} attempts")));
            }
            let wait = self.config.backoff(attempt - 1);
            log::info!("[req {cid}] {failure}; retrying in {wait:?}");
            std::thread::sleep(wait);
        }
    }
}

fn parse_reply(body: &str) -> Result<ChatReply, ModelError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ModelError::Protocol(format!("response is not JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ModelError::Protocol("response has no choices".into()))?;
    let text = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| ModelError::Protocol("first choice has no message content".into()))?;
    let yes_probability = choice.pointer("/logprobs/content").and_then(Value::as_array).and_then(|t| yes_mass(t));
    Ok(ChatReply { text: text.to_string(), yes_probability, attempts: 0 })
}

fn yes_no(token: &str) -> Option<bool> {
    match token.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Probability of "yes" at the first position whose sampled or top token is
/// a yes/no token.
fn yes_mass(tokens: &[Value]) -> Option<f64> {
    for pos in tokens {
        let mut seen: Vec<(String, f64)> = Vec::new();
        let mut push = |v: &Value| {
            if let (Some(t), Some(lp)) = (v.get("token").and_then(Value::as_str), v.get("logprob").and_then(Value::as_f64)) {
                if !seen.iter().any(|(s, _)| s == t) {
                    seen.push((t.to_string(), lp));
                }
            }
        };
        push(pos);
        if let Some(top) = pos.get("top_logprobs").and_then(Value::as_array) {
            top.iter().for_each(&mut push);
        }
        if seen.iter().any(|(t, _)| yes_no(t).is_some()) {
            let p: f64 = seen.iter().filter(|(t, _)| yes_no(t) == Some(true)).map(|(_, lp)| lp.exp()).sum();
            return Some(p.clamp(0.0, 1.0));
        }
    }
    None
}

/// One chat round trip with a fresh client.
pub fn remote_generate(config: &EndpointConfig, prompt: &str, temperature: f64) -> Result<String, ModelError> {
    ChatClient::new(config.clone())?.chat(prompt, temperature).map(|r| r.text)
}

fn template_err(e: stepsearch_core::prompt::TemplateError) -> ModelError {
    ModelError::Template(e.to_string())
}

/// Text between the first `open` and the last `close`, inclusive.
fn span(text: &str, open: char, close: char) -> Option<&str> {
    let a = text.find(open)?;
    let b = text.rfind(close)?;
    (b > a).then(|| &text[a..=b])
}

/// Strips a code fence or a leading `Step n:` style label.
fn clean_step(text: &str) -> String {
    let t = text.trim();
    let t = t.strip_prefix("```").map(|r| r.trim_end_matches("```")).unwrap_or(t);
    t.trim().to_string()
}

pub struct RemoteActor {
    id: String,
    client: ChatClient,
    prompts: PromptRegistry,
    /// Temperature for rewrites, which have no caller-supplied value.
    pub rewrite_temperature: f64,
}

impl RemoteActor {
    pub fn new(id: impl Into<String>, client: ChatClient) -> Self {
        RemoteActor { id: id.into(), client, prompts: PromptRegistry::default(), rewrite_temperature: 0.7 }
    }
}

impl ActorModel for RemoteActor {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        action: ActionKind,
        temperature: f64,
    ) -> Result<ReasoningStep, ModelError> {
        let ctx = PromptContext::new(problem, prefix, Payload::Action(action));
        let prompt = build_prompt(&self.prompts, step_template_id(action), &ctx).map_err(template_err)?;
        let text = clean_step(&self.client.chat(&prompt, temperature)?.text);
        ReasoningStep::new(action, text, self.id.clone())
            .map_err(|_| ModelError::Protocol(format!("{} returned an empty {action} step", self.id)))
    }

    fn solve(&self, problem: &Problem, temperature: f64, _sample: u32) -> Result<String, ModelError> {
        let ctx = PromptContext::new(problem, &[], Payload::None);
        let prompt = build_prompt(&self.prompts, "solve", &ctx).map_err(template_err)?;
        Ok(self.client.chat(&prompt, temperature)?.text)
    }

    fn rewrite(&self, problem: &Problem, steps: &[String], index: usize, error: StepLabel) -> Result<String, ModelError> {
        let ctx = PromptContext::new(problem, &[], Payload::Injection { steps, index, error });
        let prompt = build_prompt(&self.prompts, "inject_error", &ctx).map_err(template_err)?;
        Ok(clean_step(&self.client.chat(&prompt, self.rewrite_temperature)?.text))
    }
}

pub struct RemoteReward {
    id: String,
    client: ChatClient,
    prompts: PromptRegistry,
    pub temperature: f64,
}

impl RemoteReward {
    pub fn new(id: impl Into<String>, client: ChatClient) -> Self {
        RemoteReward { id: id.into(), client, prompts: PromptRegistry::default(), temperature: 0.2 }
    }
}

#[derive(Deserialize)]
struct CritiqueReply {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    explanation: String,
    #[serde(default)]
    score: Option<f64>,
}

/// Builds a critique from a model reply. A log-probability score, when
/// present, replaces the reply's own score field.
pub fn parse_critique(step: &ReasoningStep, text: &str, yes_probability: Option<f64>) -> Result<StepCritique, ModelError> {
    let json = span(text, '{', '}').ok_or_else(|| ModelError::Protocol("critique reply has no JSON object".into()))?;
    let reply: CritiqueReply =
        serde_json::from_str(json).map_err(|e| ModelError::Protocol(format!("critique reply: {e}")))?;
    let score = yes_probability
        .or(reply.score)
        .ok_or_else(|| ModelError::Protocol("critique reply has no score".into()))?;
    let label = match reply.label.as_deref() {
        Some(l) => StepLabel::parse(l).ok_or_else(|| ModelError::Protocol(format!("unknown label `{l}`")))?,
        None => return Err(ModelError::Protocol("critique reply has no label".into())),
    };
    StepCritique::new(step.content.clone(), label, reply.explanation, score)
        .map_err(|_| ModelError::Protocol(format!("critique score {score} outside [0, 1]")))
}

impl RewardModel for RemoteReward {
    fn id(&self) -> &str {
        &self.id
    }

    fn critique_sample(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        step: &ReasoningStep,
        _sample: u32,
    ) -> Result<StepCritique, ModelError> {
        let ctx = PromptContext::new(problem, prefix, Payload::Step(step));
        let prompt = build_prompt(&self.prompts, "critique", &ctx).map_err(template_err)?;
        let reply = self.client.chat(&prompt, self.temperature)?;
        parse_critique(step, &reply.text, reply.yes_probability)
    }

    fn segment(&self, problem: &Problem, text: &str) -> Result<Vec<String>, ModelError> {
        let ctx = PromptContext::new(problem, &[], Payload::Text(text));
        let prompt = build_prompt(&self.prompts, "segment", &ctx).map_err(template_err)?;
        let reply = self.client.chat(&prompt, self.temperature)?;
        let json = span(&reply.text, '[', ']').ok_or_else(|| ModelError::Protocol("segment reply has no JSON array".into()))?;
        serde_json::from_str(json).map_err(|e| ModelError::Protocol(format!("segment reply: {e}")))
    }
}
