//! Completion backends and the reply parser.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::Position;
use crate::instruction::parse_instruction;
use crate::norms::{classify, infer_response, NormError, NormLabel};
use crate::prompting::{Condition, PromptConfig, PromptDocument};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredential(String),
    #[error("no scripted reply for prompt digest {0}")]
    NoScriptedReply(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("oracle failed: {0}")]
    Oracle(#[from] NormError),
    #[error("cannot read scripted replies from {path}: {reason}")]
    BadScriptFile { path: String, reason: String },
}

/// Stable digest of the full prompt text (hex SHA-256).
pub fn prompt_digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedReply {
    pub digest: String,
    pub reply: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    replies: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend::default()
    }

    pub fn insert(&mut self, prompt_text: &str, reply: impl Into<String>) {
        self.replies.insert(prompt_digest(prompt_text), reply.into());
    }

    pub fn insert_digest(&mut self, digest: impl Into<String>, reply: impl Into<String>) {
        self.replies.insert(digest.into(), reply.into());
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    /// Reads JSON-lines `{"digest": ..., "reply": ...}` records.
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let bad = |reason: String| AgentError::BadScriptFile {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let mut backend = ScriptedBackend::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScriptedReply =
                serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
            backend.replies.insert(rec.digest, rec.reply);
        }
        Ok(backend)
    }

    /// Records sorted by digest.
    pub fn records(&self) -> Vec<ScriptedReply> {
        let mut out: Vec<ScriptedReply> = self
            .replies
            .iter()
            .map(|(d, r)| ScriptedReply {
                digest: d.clone(),
                reply: r.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.digest.cmp(&b.digest));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteChatConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        RemoteChatConfig {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: "gpt-4".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_in_flight: 4,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePass<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a Gate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteChat {
    config: RemoteChatConfig,
    gate: Gate,
    client: OnceLock<reqwest::blocking::Client>,
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(AgentError),
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Self {
        let gate = Gate::new(config.max_in_flight);
        RemoteChat {
            config,
            gate,
            client: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &RemoteChatConfig {
        &self.config
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, AgentError> {
        if let Some(c) = self.client.get() {
            return Ok(c);
        }
        let built = reqwest::blocking::Client::builder()
            .timeout(self.config.timeout)
            .build()
            .map_err(|e| AgentError::BackendUnavailable {
                attempts: 0,
                last_error: e.to_string(),
            })?;
        Ok(self.client.get_or_init(|| built))
    }

    /// Request body in the chat-completions wire format; all prompt
    /// components go into a single user message.
    pub fn request_body(&self, prompt: &str, cfg: &PromptConfig) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        })
    }

    fn attempt(&self, key: &str, body: &serde_json::Value) -> Attempt {
        let client = match self.client() {
            Ok(c) => c,
            Err(e) => return Attempt::Fatal(e),
        };
        let resp = match client
            .post(&self.config.endpoint)
            .bearer_auth(key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Transient(format!("status {status}: {text}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(AgentError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        match extract_content(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        }
    }

    pub fn complete(&self, prompt: &str, cfg: &PromptConfig) -> Result<String, AgentError> {
        let key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| AgentError::MissingCredential(self.config.api_key_env.clone()))?;
        let body = self.request_body(prompt, cfg);
        let _pass = self.gate.acquire();
        let mut delay = self.config.initial_backoff;
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&key, &body) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(e) => last_error = e,
            }
        }
        Err(AgentError::BackendUnavailable {
            attempts: self.config.max_retries + 1,
            last_error,
        })
    }
}

fn extract_content(body: &str) -> Result<String, AgentError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| AgentError::BadResponse(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| AgentError::BadResponse("missing choices[0].message.content".into()))
}

/// Shareable completion backend.
#[derive(Debug, Clone)]
pub enum Backend {
    RemoteChat(Arc<RemoteChat>),
    Scripted(Arc<ScriptedBackend>),
    OracleBacked,
}

impl Backend {
    pub fn remote(config: RemoteChatConfig) -> Self {
        Backend::RemoteChat(Arc::new(RemoteChat::new(config)))
    }

    pub fn scripted(s: ScriptedBackend) -> Self {
        Backend::Scripted(Arc::new(s))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::RemoteChat(_) => "remote",
            Backend::Scripted(_) => "scripted",
            Backend::OracleBacked => "oracle",
        }
    }
}

/// Reply in the few-shot format for the oracle's response.
pub fn oracle_reply(prompt: &PromptDocument) -> Result<String, AgentError> {
    let s = parse_instruction(&prompt.instruction);
    let (label, _) = classify(&prompt.grid, &s)?;
    let r = infer_response(&prompt.grid, &s, label)?;
    Ok(match prompt.condition {
        Condition::WithNorms => format!(
            "Norm: {}. {}\nResponse: {}",
            label.title(),
            r.rationale,
            r.nl_text
        ),
        Condition::WithoutNorms => format!("Response: {}", r.nl_text),
    })
}

pub fn complete(b: &Backend, p: &PromptDocument, cfg: &PromptConfig) -> Result<String, AgentError> {
    match b {
        Backend::RemoteChat(remote) => remote.complete(&p.full_text, cfg),
        Backend::Scripted(script) => {
            let digest = prompt_digest(&p.full_text);
            script
                .replies
                .get(&digest)
                .cloned()
                .ok_or(AgentError::NoScriptedReply(digest))
        }
        Backend::OracleBacked => oracle_reply(p),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAgentReply {
    pub norm_label: Option<NormLabel>,
    pub response_text: String,
    pub coords: Vec<Position>,
    pub colors_mentioned: Vec<String>,
    pub options: Vec<String>,
    pub parse_ok: bool,
}

fn coord_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)").expect("valid regex"))
}

/// Every "(r, c)" pattern in `text`, in order of appearance.
pub fn extract_coords(text: &str) -> Vec<Position> {
    coord_re()
        .captures_iter(text)
        .filter_map(|c| Some(Position::new(c[1].parse().ok()?, c[2].parse().ok()?)))
        .collect()
}

const COLOR_WORDS: &[&str] = &[
    "red", "yellow", "blue", "green", "orange", "purple", "pink", "black", "white", "brown",
    "gray", "grey",
];

pub fn extract_colors(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .map(str::to_ascii_lowercase)
        .filter(|w| COLOR_WORDS.contains(&w.as_str()))
        .collect()
}

fn label_from(text: &str) -> Option<NormLabel> {
    let lower = text.trim().trim_start_matches(['*', '_', ' ']).to_ascii_lowercase();
    const NAMES: [(&str, NormLabel); 6] = [
        ("no violation", NormLabel::NoViolation),
        ("quantity violation", NormLabel::QuantityViolation),
        ("quality violation", NormLabel::QualityViolation),
        ("relevance violation", NormLabel::RelationViolation),
        ("relation violation", NormLabel::RelationViolation),
        ("manner violation", NormLabel::MannerViolation),
    ];
    NAMES
        .iter()
        .find(|(name, _)| lower.starts_with(name))
        .map(|&(_, l)| l)
}

fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let trimmed = line.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '-');
    let lower = trimmed.to_ascii_lowercase();
    if !lower.starts_with(name) {
        return None;
    }
    let rest = &trimmed[name.len()..];
    let rest = rest.trim_start_matches('*');
    rest.strip_prefix(':')
        .map(|r| r.trim_start_matches('*').trim())
}

/// The last sentence ending in '?', without the question mark.
fn final_question(text: &str) -> Option<&str> {
    let end = text.rfind('?')?;
    let head = &text[..end];
    let start = head
        .rfind(['.', '!', '?', '\n'])
        .map(|i| i + 1)
        .unwrap_or(0);
    Some(head[start..].trim())
}

/// Splits an option list on commas outside parentheses and on the word "or".
pub fn split_options(question: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in question.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == ',' && depth <= 0 {
            pieces.push(std::mem::take(&mut cur));
        } else {
            cur.push(ch);
        }
    }
    pieces.push(cur);
    let mut out = Vec::new();
    for piece in pieces {
        let mut rest = format!(" {} ", piece.trim());
        loop {
            match rest.to_ascii_lowercase().find(" or ") {
                Some(i) => {
                    out.push(rest[..i].trim().to_string());
                    rest = format!(" {}", &rest[i + 4..]);
                }
                None => {
                    out.push(rest.trim().to_string());
                    break;
                }
            }
        }
    }
    out.into_iter().filter(|s| !s.is_empty()).collect()
}

/// Extracts label, response text, coordinates, colors and options. Never fails.
pub fn parse_reply(text: &str, condition: Condition) -> ParsedAgentReply {
    let mut norm_label = None;
    let mut response_lines: Option<Vec<&str>> = None;
    let mut other_lines = Vec::new();
    for line in text.lines() {
        if let Some(lines) = response_lines.as_mut() {
            lines.push(line);
            continue;
        }
        if let Some(rest) = field(line, "norm") {
            if condition == Condition::WithNorms {
                norm_label = label_from(rest);
            }
            continue;
        }
        if let Some(rest) = field(line, "response") {
            response_lines = Some(vec![rest]);
            continue;
        }
        other_lines.push(line);
    }
    let has_response = response_lines.is_some();
    let response_text = response_lines
        .unwrap_or(other_lines)
        .join("\n")
        .trim()
        .to_string();
    let parse_ok = has_response
        && !response_text.is_empty()
        && (condition == Condition::WithoutNorms || norm_label.is_some());
    let options = final_question(&response_text)
        .map(split_options)
        .unwrap_or_default();
    ParsedAgentReply {
        norm_label,
        coords: extract_coords(&response_text),
        colors_mentioned: extract_colors(&response_text),
        options,
        response_text,
        parse_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_options_outside_parentheses() {
        assert_eq!(
            split_options("Do you want me to collect the yellow key, the red key, or both"),
            vec!["Do you want me to collect the yellow key", "the red key", "both"]
        );
        assert_eq!(
            split_options(
                "Do you want me to collect the yellow key at (0,4) or (4,6), or do you want me to collect both of them"
            ),
            vec![
                "Do you want me to collect the yellow key at (0,4)",
                "(4,6)",
                "do you want me to collect both of them"
            ]
        );
        assert_eq!(split_options("Open the door for me"), vec!["Open the door for me"]);
    }

    #[test]
    fn parses_schema_fields() {
        let reply = "Norm: Relevance Violation. Unrelated.\nResponse: I am an AI and can't dance. Would you like me to pass you a key or unlock a door instead?";
        let p = parse_reply(reply, Condition::WithNorms);
        assert!(p.parse_ok);
        assert_eq!(p.norm_label, Some(NormLabel::RelationViolation));
        assert_eq!(p.options.len(), 2);
        let q = parse_reply(reply, Condition::WithoutNorms);
        assert_eq!(q.norm_label, None);
    }

    #[test]
    fn empty_reply() {
        let p = parse_reply("", Condition::WithNorms);
        assert!(!p.parse_ok);
        assert_eq!(p, ParsedAgentReply::default());
    }

    #[test]
    fn bold_markers_and_relation_spelling() {
        let p = parse_reply(
            "**Norm:** Relation Violation.\n**Response:** Pick (1, 2).",
            Condition::WithNorms,
        );
        assert_eq!(p.norm_label, Some(NormLabel::RelationViolation));
        assert_eq!(p.coords, vec![Position::new(1, 2)]);
        assert!(p.parse_ok);
    }

    #[test]
    fn missing_response_field_keeps_text() {
        let p = parse_reply("I will get the red key at (0, 5).", Condition::WithoutNorms);
        assert!(!p.parse_ok);
        assert_eq!(p.coords, vec![Position::new(0, 5)]);
        assert_eq!(p.colors_mentioned, vec!["red"]);
    }

    #[test]
    fn digest_is_stable_hex() {
        let d = prompt_digest("abc");
        assert_eq!(d, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn request_body_shape() {
        let remote = RemoteChat::new(RemoteChatConfig::default());
        let body = remote.request_body("hi", &PromptConfig::new(Condition::WithNorms));
        assert_eq!(body["model"], "gpt-4");
        assert_eq!(body["max_tokens"], 512);
        assert!((body["temperature"].as_f64().unwrap() - 0.2).abs() < 1e-6);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
    }
}
