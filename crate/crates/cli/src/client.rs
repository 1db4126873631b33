//! HTTP backends: a model client for `eval` and a language-model scorer for
//! `perturb`.
//!
//! Model endpoint: `POST {"id", "prompt", "images": [...]}` answered with
//! `{"response": "..."}`. Scorer endpoint: `POST {"text"}` answered with
//! `{"nll": <total negative log-likelihood>}`.

use std::time::Duration;

use abstain_core::eval::{ClientError, ModelClient, ModelRequest};
use abstain_core::text::{BackendError, LmScorer};
use serde::{Deserialize, Serialize};

#[derive(Serialize)]
struct CompletionBody<'a> {
    id: &'a str,
    prompt: &'a str,
    images: &'a [String],
}

#[derive(Deserialize)]
struct CompletionReply {
    response: String,
}

#[derive(Serialize)]
struct ScoreBody<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreReply {
    nll: f64,
}

fn blocking_client(timeout: Duration) -> anyhow::Result<reqwest::blocking::Client> {
    Ok(reqwest::blocking::Client::builder().timeout(timeout).build()?)
}

pub struct HttpModelClient {
    endpoint: String,
    name: String,
    http: reqwest::blocking::Client,
}

impl HttpModelClient {
    pub fn new(endpoint: &str, name: Option<&str>, timeout: Duration) -> anyhow::Result<Self> {
        Ok(Self {
            endpoint: endpoint.to_string(),
            name: name.map(str::to_string).unwrap_or_else(|| format!("http:{endpoint}")),
            http: blocking_client(timeout)?,
        })
    }
}

impl ModelClient for HttpModelClient {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, ClientError> {
        let body = CompletionBody { id: &request.instance_id, prompt: &request.prompt, images: &request.image_refs };
        let reply = self.http.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                ClientError::Timeout
            } else {
                ClientError::Failed(e.to_string())
            }
        })?;
        let status = reply.status();
        if !status.is_success() {
            return Err(ClientError::Failed(format!("{} returned {status}", self.endpoint)));
        }
        reply.json::<CompletionReply>().map(|r| r.response).map_err(|e| ClientError::Failed(e.to_string()))
    }
}

pub struct HttpScorer {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl HttpScorer {
    pub fn new(endpoint: &str, timeout: Duration) -> anyhow::Result<Self> {
        Ok(Self { endpoint: endpoint.to_string(), http: blocking_client(timeout)? })
    }
}

impl LmScorer for HttpScorer {
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        let fail = |message: String| BackendError::Failed { backend: "lm", message };
        let reply = self.http.post(&self.endpoint).json(&ScoreBody { text }).send().map_err(|e| fail(e.to_string()))?;
        if !reply.status().is_success() {
            return Err(fail(format!("{} returned {}", self.endpoint, reply.status())));
        }
        let nll = reply.json::<ScoreReply>().map_err(|e| fail(e.to_string()))?.nll;
        if !nll.is_finite() {
            return Err(fail(format!("non-finite score for {text:?}")));
        }
        Ok(nll)
    }
}
