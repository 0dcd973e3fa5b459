use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::parse::{parse_intent_response, parse_scorecard, parse_suggestions};
use super::template::{chat_body, render_prompt, ImagePayload, PromptTemplate, TemplateKind};
use super::{EndpointConfig, IntentSummary, SuggestionKind, SuggestionSet};
use crate::error::{Error, Result};
use crate::evalkit::{Rubric, ScoreCard};

/// What happened on one logical call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub label: String,
    pub attempts: u32,
    pub retries: u32,
    /// Where the raw reply body was written, if archiving is on.
    pub response_path: Option<PathBuf>,
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Transient(String),
    Fatal(String),
}

/// Blocking JSON-over-HTTP client; share it across threads by reference.
pub struct Client {
    cfg: EndpointConfig,
    agent: ureq::Agent,
    in_flight: Arc<InFlight>,
    archive: Option<PathBuf>,
    seq: AtomicUsize,
}

impl Client {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = cfg.max_in_flight;
        Ok(Self {
            cfg,
            agent,
            in_flight: Arc::new(InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            }),
            archive: None,
            seq: AtomicUsize::new(0),
        })
    }

    /// Raw reply bodies are written under `dir` before they are parsed.
    pub fn with_archive(mut self, dir: impl Into<PathBuf>) -> Self {
        self.archive = Some(dir.into());
        self
    }

    /// A client archiving to `dir` that shares this one's in-flight limit.
    pub fn archived_at(&self, dir: impl Into<PathBuf>) -> Self {
        Self {
            cfg: self.cfg.clone(),
            agent: self.agent.clone(),
            in_flight: Arc::clone(&self.in_flight),
            archive: Some(dir.into()),
            seq: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    fn attempt(&self, url: &str, body: &str) -> std::result::Result<String, Failure> {
        let _permit = self.in_flight.acquire();
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => Ok(text),
            500..=599 => Err(Failure::Transient(format!("HTTP {status}"))),
            _ => Err(Failure::Fatal(format!("HTTP {status}: {}", truncate(&text, 200)))),
        }
    }

    fn archive_raw(&self, label: &str, raw: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.archive else {
            return Ok(None);
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{label}.json"));
        std::fs::write(&path, raw).map_err(|e| Error::io(&path, e))?;
        Ok(Some(path))
    }

    /// POSTs `body` to `{base_url}/{path}`, retrying transport errors and 5xx
    /// replies with exponential backoff. The reply is archived, then parsed.
    pub fn post_json(&self, path: &str, body: &Value, label: Option<&str>) -> Result<(Value, CallRecord)> {
        let label = match label {
            Some(l) => sanitize(l),
            None => format!("call-{:05}", self.seq.fetch_add(1, Ordering::Relaxed)),
        };
        let url = self.url(path);
        let payload = body.to_string();
        let mut attempts = 0;
        let raw = loop {
            attempts += 1;
            match self.attempt(&url, &payload) {
                Ok(raw) => break raw,
                Err(Failure::Fatal(msg)) => return Err(Error::Endpoint(format!("{label}: {msg}"))),
                Err(Failure::Transient(msg)) if attempts > self.cfg.max_retries => {
                    return Err(Error::Endpoint(format!("{label}: {msg} after {attempts} attempts")));
                }
                Err(Failure::Transient(msg)) => {
                    let delay = self.cfg.retry_base_ms.saturating_mul(1 << (attempts - 1).min(16));
                    log::warn!("{label}: {msg}; retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
        };
        let record = CallRecord {
            response_path: self.archive_raw(&label, &raw)?,
            label,
            attempts,
            retries: attempts - 1,
        };
        let value = serde_json::from_str(&raw).map_err(|e| {
            Error::Endpoint(format!("{}: reply is not JSON: {e}{}", record.label, archived_note(&record)))
        })?;
        Ok((value, record))
    }

    /// One chat-completions round trip; returns the assistant message text.
    pub fn chat(&self, prompt: &super::RenderedPrompt, label: Option<&str>) -> Result<(String, CallRecord)> {
        let (resp, record) = self.post_json("chat/completions", &chat_body(&self.cfg.model, prompt), label)?;
        let content = message_text(&resp).ok_or_else(|| {
            Error::Parse(format!(
                "{}: reply lacks choices[0].message.content{}",
                record.label,
                archived_note(&record)
            ))
        })?;
        Ok((content, record))
    }

    fn encode_all(&self, images: &[RgbImage]) -> Result<Vec<ImagePayload>> {
        if images.len() > self.cfg.max_images {
            return Err(Error::Template(format!(
                "too many images: {} > endpoint.max_images {}",
                images.len(),
                self.cfg.max_images
            )));
        }
        images
            .iter()
            .map(|img| ImagePayload::encode(img, Some(self.cfg.image_width)))
            .collect()
    }
}

fn message_text(resp: &Value) -> Option<String> {
    let content = &resp["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Some(s.clone()),
        // Some servers return content as a list of typed parts.
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => None,
    }
}

fn archived_note(record: &CallRecord) -> String {
    record
        .response_path
        .as_deref()
        .map(|p| format!(" (raw reply at {})", p.display()))
        .unwrap_or_default()
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn with_archive_note<T>(r: Result<T>, record: &CallRecord) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}{}", record.label, archived_note(record))),
        other => other,
    })
}

fn expect_kind(tpl: &PromptTemplate, kind: TemplateKind) -> Result<()> {
    if tpl.kind != kind {
        return Err(Error::Template(format!("expected a {kind} template, got {}", tpl.kind)));
    }
    Ok(())
}

/// Sends the screenshots (keyframes or stitched images, in order) with the
/// summarize template and parses the `Operation`/`Intent` reply.
pub fn summarize_intent(
    client: &Client,
    tpl: &PromptTemplate,
    images: &[RgbImage],
    context: &str,
    label: &str,
) -> Result<(IntentSummary, CallRecord)> {
    expect_kind(tpl, TemplateKind::Summarize)?;
    let slots = BTreeMap::from([("context".to_owned(), context.to_owned())]);
    let prompt = render_prompt(tpl, &slots, client.encode_all(images)?)?;
    let (text, record) = client.chat(&prompt, Some(label))?;
    let summary = with_archive_note(parse_intent_response(&text), &record)?;
    Ok((summary, record))
}

/// Asks for `count` next-step suggestions of `kind` given a summary.
pub fn generate_suggestions(
    client: &Client,
    tpl: &PromptTemplate,
    summary: &IntentSummary,
    images: &[RgbImage],
    kind: SuggestionKind,
    count: usize,
    label: &str,
) -> Result<(SuggestionSet, CallRecord)> {
    expect_kind(tpl, kind.template_kind())?;
    let slots = BTreeMap::from([
        ("operation".to_owned(), summary.operation.clone()),
        ("intent".to_owned(), summary.intent.clone()),
        ("count".to_owned(), count.to_string()),
    ]);
    let prompt = render_prompt(tpl, &slots, client.encode_all(images)?)?;
    let (text, record) = client.chat(&prompt, Some(label))?;
    let set = with_archive_note(parse_suggestions(&text, kind), &record)?;
    Ok((set, record))
}

/// Scores `prediction` against `gold` with the judge template for `rubric`.
pub fn judge_score(
    client: &Client,
    tpl: &PromptTemplate,
    prediction: &str,
    gold: &str,
    rubric: Rubric,
    label: &str,
) -> Result<(ScoreCard, CallRecord)> {
    let kind = match rubric {
        Rubric::Summary => TemplateKind::JudgeSummary,
        Rubric::Suggestion => TemplateKind::JudgeSuggestion,
    };
    expect_kind(tpl, kind)?;
    let slots = BTreeMap::from([
        ("gold".to_owned(), gold.to_owned()),
        ("prediction".to_owned(), prediction.to_owned()),
    ]);
    let prompt = render_prompt(tpl, &slots, Vec::new())?;
    let (text, record) = client.chat(&prompt, Some(label))?;
    let card = with_archive_note(parse_scorecard(&text, rubric), &record)?;
    Ok((card, record))
}
