//! Probing models for abstention: protocol prompts, few-shot assembly,
//! response parsing and metrics.

mod harness;
mod metrics;
mod parse;
mod prompt;
mod report;

use serde::{Deserialize, Serialize};

pub use harness::{
    run_eval, ClientError, EchoStub, EmptyStub, EvalConfig, EvalRun, FixtureClient, FnClient, ModelClient,
    ModelRequest, ResponseRecord,
};
pub use metrics::{
    acc_binary, acc_open, summarize, weighted_f1, weighted_f1_labels, MetricReport, Outcome, TypeMetrics,
};
pub use parse::{parse_response, REFUSAL_LEXICON, REFUSAL_LEXICON_VERSION};
pub use prompt::{
    assemble_few_shot, build_prompt, gold_response, hint_phrase, mc_options, FewShot, McOptions, DEFAULT_HINT, UNANSWERABLE,
};
pub use report::{render_table, RunSummary};

use crate::annotation::Reason;
use crate::data::{AnswerType, PerturbationKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("{protocol} prompt is missing its {slot}")]
    MissingSlot { protocol: Protocol, slot: &'static str },
    #[error("{protocol} prompt does not take {slot}")]
    UnexpectedSlot { protocol: Protocol, slot: &'static str },
    #[error("multiple-choice prompts need exactly 4 options, got {0}")]
    OptionCount(usize),
    #[error("exemplar pool has {available} {kind} item(s), {needed} needed")]
    PoolExhausted { kind: &'static str, needed: usize, available: usize },
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "BY")]
    By,
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "OE")]
    Oe,
    #[serde(rename = "OEH")]
    Oeh,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::By, Protocol::Mc, Protocol::Oe, Protocol::Oeh];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::By => "BY",
            Protocol::Mc => "MC",
            Protocol::Oe => "OE",
            Protocol::Oeh => "OEH",
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, Protocol::Oe | Protocol::Oeh)
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown protocol {s:?} (expected BY, MC, OE or OEH)"))
    }
}

/// Few-shot composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShotConfig {
    pub n_answerable: usize,
    pub n_unanswerable: usize,
    pub seed: u64,
}

impl ShotConfig {
    pub fn total(&self) -> usize {
        self.n_answerable + self.n_unanswerable
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Verdict {
    Answerable,
    Unanswerable,
    /// Letter `A`..`D`; `unanswerable` is set when that option is the
    /// abstention option.
    Choice { letter: char, unanswerable: bool },
    FreeText(String),
    OutOfScope,
}

impl Verdict {
    /// Predicted answerability, `None` for out-of-scope.
    pub fn predicts_unanswerable(&self) -> Option<bool> {
        match self {
            Verdict::Answerable | Verdict::FreeText(_) => Some(false),
            Verdict::Unanswerable => Some(true),
            Verdict::Choice { unanswerable, .. } => Some(*unanswerable),
            Verdict::OutOfScope => None,
        }
    }

    pub fn is_out_of_scope(&self) -> bool {
        matches!(self, Verdict::OutOfScope)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub verdict: Verdict,
    pub raw: String,
}

/// One benchmark question as seen by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    #[serde(default)]
    pub source_id: String,
    #[serde(default)]
    pub kind: Option<PerturbationKind>,
    pub image: String,
    pub question: String,
    #[serde(default)]
    pub question_type: String,
    pub answer_type: AnswerType,
    pub unanswerable: bool,
    /// Original, baseline and random answers.
    pub options: Vec<String>,
    /// Answers accepted as correct for answerable items.
    #[serde(default)]
    pub valid_answers: Vec<String>,
    #[serde(default)]
    pub reason: Option<Reason>,
}

impl EvalItem {
    /// Reference answer used for exemplars and class labels.
    pub fn gold_answer(&self) -> &str {
        if self.unanswerable {
            UNANSWERABLE
        } else {
            self.valid_answers.first().or(self.options.first()).map(String::as_str).unwrap_or("")
        }
    }
}
