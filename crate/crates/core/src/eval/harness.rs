use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{summarize, MetricReport, Outcome};
use super::parse::parse_response;
use super::prompt::{assemble_few_shot, gold_response, item_prompt, McOptions};
use super::{EvalError, EvalItem, Protocol, ShotConfig, Verdict, UNANSWERABLE};
use crate::data::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub instance_id: String,
    pub prompt: String,
    /// Exemplar images in prompt order, then the query image.
    pub image_refs: Vec<String>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    Failed(String),
}

/// One text-plus-images call returning text.
pub trait ModelClient: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError>;
}

/// Replies with the gold response for every known instance.
#[derive(Debug, Clone, Default)]
pub struct EchoStub {
    answers: HashMap<String, String>,
}

impl EchoStub {
    pub fn new(items: &[EvalItem], protocol: Protocol, seed: u64) -> Self {
        let answers = items
            .iter()
            .map(|it| {
                let mc = (protocol == Protocol::Mc).then(|| super::prompt::mc_options(it, seed));
                (it.id.clone(), gold_response(it, protocol, mc.as_ref()))
            })
            .collect();
        Self { answers }
    }
}

impl ModelClient for EchoStub {
    fn id(&self) -> String {
        "echo-stub".into()
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        self.answers
            .get(&request.instance_id)
            .cloned()
            .ok_or_else(|| ClientError::Failed(format!("no gold answer for {}", request.instance_id)))
    }
}

/// Always replies with an empty string.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyStub;

impl ModelClient for EmptyStub {
    fn id(&self) -> String {
        "empty-stub".into()
    }

    fn complete(&self, _: &ModelRequest) -> Result<String, ClientError> {
        Ok(String::new())
    }
}

/// Canned replies keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct FixtureClient {
    name: String,
    responses: HashMap<String, String>,
}

#[derive(Deserialize)]
struct FixtureRow {
    id: String,
    response: String,
}

impl FixtureClient {
    pub fn new<I, K, V>(name: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self { name: name.into(), responses: responses.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }

    /// JSONL rows `{"id": ..., "response": ...}`.
    pub fn from_jsonl(path: &Path) -> Result<Self, EvalError> {
        let rows: Vec<(usize, FixtureRow)> = read_jsonl(path).map_err(|e| EvalError::Io(e.to_string()))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("fixture").to_string();
        Ok(Self::new(&name, rows.into_iter().map(|(_, r)| (r.id, r.response))))
    }
}

impl ModelClient for FixtureClient {
    fn id(&self) -> String {
        format!("fixture:{}", self.name)
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        self.responses
            .get(&request.instance_id)
            .cloned()
            .ok_or_else(|| ClientError::Failed(format!("no fixture response for {}", request.instance_id)))
    }
}

/// Wraps a closure, mostly for tests.
pub struct FnClient<F>(pub &'static str, pub F);

impl<F> ModelClient for FnClient<F>
where
    F: Fn(&ModelRequest) -> Result<String, ClientError> + Send + Sync,
{
    fn id(&self) -> String {
        self.0.to_string()
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        (self.1)(request)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub shots: ShotConfig,
    /// Seeds the per-item MC option shuffle.
    pub seed: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { protocol: Protocol::By, shots: ShotConfig::default(), seed: 0, max_in_flight: 4, max_retries: 2 }
    }
}

/// Audit record of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub protocol: Protocol,
    pub prompt: String,
    pub image_refs: Vec<String>,
    pub exemplar_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_options: Option<McOptions>,
    pub raw: Option<String>,
    pub verdict: Verdict,
    pub attempts: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub client: String,
    pub report: MetricReport,
    pub records: Vec<ResponseRecord>,
}

impl EvalRun {
    pub fn persist_responses(&self, path: &Path) -> Result<(), EvalError> {
        write_jsonl(path, &self.records).map_err(|e| EvalError::Io(e.to_string()))
    }
}

fn prediction_text(verdict: &Verdict, mc: Option<&McOptions>) -> Option<String> {
    match verdict {
        Verdict::Answerable => Some("answerable".into()),
        Verdict::Unanswerable => Some(UNANSWERABLE.into()),
        Verdict::Choice { letter, .. } => {
            let idx = (*letter as u8 - b'A') as usize;
            mc.and_then(|m| m.texts.get(idx).cloned())
        }
        Verdict::FreeText(t) => Some(t.clone()),
        Verdict::OutOfScope => None,
    }
}

fn query(client: &dyn ModelClient, req: &ModelRequest, max_retries: usize) -> (Result<String, ClientError>, usize) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.complete(req) {
            Ok(s) => return (Ok(s), attempts),
            Err(e) if attempts > max_retries => return (Err(e), attempts),
            Err(e) => log::warn!("{}: attempt {attempts} failed: {e}", req.instance_id),
        }
    }
}

/// Prompt every item, query the client with bounded concurrency, parse and
/// score. Prompt construction errors abort the run; client failures are
/// recorded as out-of-scope and counted in the error tally.
pub fn run_eval(items: &[EvalItem], pool: &[EvalItem], client: &dyn ModelClient, config: &EvalConfig) -> Result<EvalRun, EvalError> {
    let protocol = config.protocol;
    let mut prepared = Vec::with_capacity(items.len());
    for it in items {
        let (prompt, mc) = item_prompt(it, protocol, config.seed)?;
        let shots = assemble_few_shot(&prompt, &config.shots, protocol, pool, &it.id)?;
        let mut image_refs = shots.exemplar_images.clone();
        image_refs.push(it.image.clone());
        let req = ModelRequest { instance_id: it.id.clone(), prompt: shots.prompt, image_refs };
        prepared.push((it, req, mc, shots.exemplar_ids));
    }

    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let replies: Vec<(Result<String, ClientError>, usize)> =
        workers.install(|| prepared.par_iter().map(|(_, req, _, _)| query(client, req, config.max_retries)).collect());

    let mut records = Vec::with_capacity(items.len());
    let mut outcomes = Vec::with_capacity(items.len());
    for ((it, req, mc, exemplar_ids), (reply, attempts)) in prepared.into_iter().zip(replies) {
        let mc_texts = mc.as_ref().map(|m| m.texts.as_slice());
        let (verdict, raw, error) = match reply {
            Ok(raw) => (parse_response(&raw, protocol, mc_texts).verdict, Some(raw), None),
            Err(e) => (Verdict::OutOfScope, None, Some(e.to_string())),
        };
        outcomes.push(Outcome {
            answer_type: it.answer_type,
            unanswerable: it.unanswerable,
            valid_answers: it.valid_answers.clone(),
            prediction: prediction_text(&verdict, mc.as_ref()),
            verdict: verdict.clone(),
            error: error.is_some(),
        });
        records.push(ResponseRecord {
            id: it.id.clone(),
            protocol,
            prompt: req.prompt,
            image_refs: req.image_refs,
            exemplar_ids,
            mc_options: mc,
            raw,
            verdict,
            attempts,
            error,
        });
    }
    Ok(EvalRun { client: client.id(), report: summarize(protocol, &outcomes), records })
}
