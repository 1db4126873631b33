//! Labeling workflow: task construction, response validation, majority-vote
//! consensus and the summary analytics over collected responses.

mod analytics;
mod csv_io;
mod pool;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use analytics::{analytics, AnalyticsReport, ShiftShare};
pub use csv_io::{
    export_responses, export_tasks, ingest_responses, ingest_tasks, IngestReport, RESPONSE_HEADER, TASK_HEADER,
};
pub use pool::{LeaseError, Progress, SubmitOutcome, TaskPool, DEFAULT_LEASE, REQUIRED_RESPONSES};

use crate::data::{PerturbationKind, PerturbationRecord, VqaInstance};
use crate::normalize::normalize_label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnnotationError {
    #[error("task {task_id} is under-annotated: {count} response(s), at least 3 required")]
    UnderAnnotated { task_id: String, count: usize },
    #[error("responses mix tasks {0:?} and {1:?}")]
    MixedTasks(String, String),
    #[error("source {0:?} has no answer")]
    NoOriginalAnswer(String),
    #[error("baseline answer {baseline:?} matches the original answer for {source_id}")]
    BaselineEqualsOriginal { source_id: String, baseline: String },
    #[error("no baseline answer for {0}")]
    MissingBaseline(String),
    #[error("no distinct answer left in the corpus for a random option of {0}")]
    NoRandomAnswer(String),
    #[error("record {record} does not belong to source {source_id}")]
    SourceMismatch { record: String, source_id: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    /// Unclear to comprehend.
    R1,
    /// Requires higher-level knowledge.
    R2,
    /// The image lacks concepts the question refers to.
    R3,
    /// Multiple plausible answers.
    R4,
}

impl Reason {
    pub const ALL: [Reason; 4] = [Reason::R1, Reason::R2, Reason::R3, Reason::R4];

    pub fn code(self) -> &'static str {
        match self {
            Reason::R1 => "R1",
            Reason::R2 => "R2",
            Reason::R3 => "R3",
            Reason::R4 => "R4",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code().eq_ignore_ascii_case(s.trim()))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnanswerableAnswer {
    A1,
    A2,
    A3,
}

impl UnanswerableAnswer {
    pub const ALL: [UnanswerableAnswer; 3] = [UnanswerableAnswer::A1, UnanswerableAnswer::A2, UnanswerableAnswer::A3];

    pub fn code(self) -> &'static str {
        match self {
            UnanswerableAnswer::A1 => "A1",
            UnanswerableAnswer::A2 => "A2",
            UnanswerableAnswer::A3 => "A3",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            UnanswerableAnswer::A1 => "I cannot answer",
            UnanswerableAnswer::A2 => "I don't know",
            UnanswerableAnswer::A3 => "Not sure",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code().eq_ignore_ascii_case(s.trim()))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlteredElement {
    Image,
    Question,
}

impl AlteredElement {
    pub fn as_str(self) -> &'static str {
        match self {
            AlteredElement::Image => "image",
            AlteredElement::Question => "question",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "image" => Some(AlteredElement::Image),
            "question" => Some(AlteredElement::Question),
            _ => None,
        }
    }
}

/// Where an answerable option came from. Declaration order is the fixed
/// option order and the final tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Baseline,
    Random,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [Provenance::Original, Provenance::Baseline, Provenance::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Baseline => "baseline",
            Provenance::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub text: String,
    pub provenance: Provenance,
}

/// An unanswerable example shown before labeling starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub image: String,
    pub question: String,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub source_id: String,
    pub kind: PerturbationKind,
    pub image: String,
    pub question: String,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
    /// Original, baseline and random answers, in that order.
    pub answer_options: Vec<AnswerOption>,
    /// Set when no same-type answer was left and the random option came
    /// from the whole corpus.
    #[serde(default)]
    pub random_fallback: bool,
}

impl AnnotationTask {
    pub fn option(&self, p: Provenance) -> Option<&AnswerOption> {
        self.answer_options.iter().find(|o| o.provenance == p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorResponse {
    pub task_id: String,
    pub worker_id: String,
    pub answerable: bool,
    #[serde(default)]
    pub reason: Option<Reason>,
    #[serde(default)]
    pub unanswerable_answer: Option<UnanswerableAnswer>,
    #[serde(default)]
    pub altered_element: Option<AlteredElement>,
    #[serde(default)]
    pub chosen_answer: Option<Provenance>,
    pub confidence: u8,
}

impl AnnotatorResponse {
    pub fn unanswerable(task_id: &str, worker_id: &str, reason: Reason, answer: UnanswerableAnswer, confidence: u8) -> Self {
        Self {
            task_id: task_id.into(),
            worker_id: worker_id.into(),
            answerable: false,
            reason: Some(reason),
            unanswerable_answer: Some(answer),
            altered_element: None,
            chosen_answer: None,
            confidence,
        }
    }

    pub fn answerable(
        task_id: &str,
        worker_id: &str,
        altered: AlteredElement,
        chosen: Provenance,
        confidence: u8,
    ) -> Self {
        Self {
            task_id: task_id.into(),
            worker_id: worker_id.into(),
            answerable: true,
            reason: None,
            unanswerable_answer: None,
            altered_element: Some(altered),
            chosen_answer: Some(chosen),
            confidence,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.task_id.trim().is_empty() {
            return Err("empty task_id".into());
        }
        if self.worker_id.trim().is_empty() {
            return Err("empty worker_id".into());
        }
        if !(1..=5).contains(&self.confidence) {
            return Err(format!("confidence {} outside 1..5", self.confidence));
        }
        let unans = (self.reason.is_some(), self.unanswerable_answer.is_some());
        let ans = (self.altered_element.is_some(), self.chosen_answer.is_some());
        if self.answerable {
            if unans != (false, false) {
                return Err("answerable response must not set reason or unanswerable_answer".into());
            }
            if ans != (true, true) {
                return Err("answerable response needs altered_element and chosen_answer".into());
            }
        } else {
            if ans != (false, false) {
                return Err("unanswerable response must not set altered_element or chosen_answer".into());
            }
            if unans != (true, true) {
                return Err("unanswerable response needs reason and unanswerable_answer".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConsensusOutcome {
    #[serde(rename = "answerable")]
    Answerable,
    #[serde(rename = "unanswerable")]
    Unanswerable,
    #[serde(rename = "no-consensus")]
    NoConsensus,
}

impl ConsensusOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsensusOutcome::Answerable => "answerable",
            ConsensusOutcome::Unanswerable => "unanswerable",
            ConsensusOutcome::NoConsensus => "no-consensus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteTally {
    pub answerable: usize,
    pub unanswerable: usize,
}

impl VoteTally {
    pub fn total(&self) -> usize {
        self.answerable + self.unanswerable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusLabel {
    pub task_id: String,
    pub label: ConsensusOutcome,
    pub votes: VoteTally,
    pub mean_confidence: f64,
}

impl ConsensusLabel {
    /// Ties need another annotation round.
    pub fn needs_more_votes(&self) -> bool {
        self.label == ConsensusOutcome::NoConsensus
    }
}

/// Plurality answer on the majority side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "side", content = "answer", rename_all = "lowercase")]
pub enum ConsensusAnswer {
    Unanswerable(UnanswerableAnswer),
    Answerable(Provenance),
}

impl ConsensusAnswer {
    /// Display text; answerable choices resolve through the task's options.
    pub fn text(&self, task: Option<&AnnotationTask>) -> String {
        match self {
            ConsensusAnswer::Unanswerable(a) => a.text().to_string(),
            ConsensusAnswer::Answerable(p) => match task.and_then(|t| t.option(*p)) {
                Some(o) => o.text.clone(),
                None => p.as_str().to_string(),
            },
        }
    }
}

/// Stable task id: `t` plus the first 12 hex digits of a hash over the
/// source id, kind and perturbed artifact.
pub fn task_id_for(record: &PerturbationRecord) -> String {
    let mut h = Sha256::new();
    h.update(record.source_id.as_bytes());
    h.update([0]);
    h.update(record.kind.code().as_bytes());
    h.update([0]);
    h.update(record.perturbed_question.as_deref().unwrap_or("").as_bytes());
    h.update([0]);
    h.update(record.perturbed_image_ref.as_deref().unwrap_or("").as_bytes());
    format!("t{}", &hex::encode(h.finalize())[..12])
}

fn seeded_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}:{key}").as_bytes());
    ChaCha8Rng::from_seed(digest.into())
}

/// Build the labeling task for one perturbation.
///
/// The random option is drawn uniformly from the distinct answers of
/// instances with the same question type, excluding the original and
/// baseline answers. When none remain it is drawn from the whole corpus and
/// `random_fallback` is set.
pub fn build_task(
    record: &PerturbationRecord,
    source: &VqaInstance,
    baseline_answer: Option<&str>,
    rng_seed: u64,
    corpus: &[VqaInstance],
    exemplars: &[Exemplar],
) -> Result<AnnotationTask, AnnotationError> {
    if record.source_id != source.id {
        return Err(AnnotationError::SourceMismatch { record: record.source_id.clone(), source_id: source.id.clone() });
    }
    let original = source.primary_answer().ok_or_else(|| AnnotationError::NoOriginalAnswer(source.id.clone()))?;
    let baseline = baseline_answer
        .or(record.baseline_answer.as_deref())
        .ok_or_else(|| AnnotationError::MissingBaseline(source.id.clone()))?;
    let (orig_n, base_n) = (normalize_label(original), normalize_label(baseline));
    if orig_n == base_n {
        return Err(AnnotationError::BaselineEqualsOriginal { source_id: source.id.clone(), baseline: baseline.into() });
    }
    let task_id = task_id_for(record);

    let pick = |same_type: bool| -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out: Vec<&str> = corpus
            .iter()
            .filter(|i| !same_type || i.question_type == source.question_type)
            .flat_map(|i| i.answers.iter().map(String::as_str))
            .filter(|a| {
                let n = normalize_label(a);
                !n.is_empty() && n != orig_n && n != base_n && seen.insert(n)
            })
            .collect();
        out.sort_unstable();
        out
    };
    let mut rng = seeded_rng(rng_seed, &task_id);
    let mut random_fallback = false;
    let mut pool = pick(true);
    if pool.is_empty() {
        log::warn!(
            "{}: no same-type answer for question type {:?}; drawing the random option corpus-wide",
            source.id,
            source.question_type
        );
        random_fallback = true;
        pool = pick(false);
    }
    let random = *pool.choose(&mut rng).ok_or_else(|| AnnotationError::NoRandomAnswer(source.id.clone()))?;

    Ok(AnnotationTask {
        task_id,
        source_id: source.id.clone(),
        kind: record.kind,
        image: record.effective_image(source).to_string(),
        question: record.effective_question(source).to_string(),
        exemplars: exemplars.to_vec(),
        answer_options: vec![
            AnswerOption { text: original.to_string(), provenance: Provenance::Original },
            AnswerOption { text: baseline.to_string(), provenance: Provenance::Baseline },
            AnswerOption { text: random.to_string(), provenance: Provenance::Random },
        ],
        random_fallback,
    })
}

/// Strict majority of answerability votes; an even split is no-consensus.
pub fn majority_vote(responses: &[AnnotatorResponse]) -> Result<ConsensusLabel, AnnotationError> {
    let task_id = responses.first().map(|r| r.task_id.clone()).unwrap_or_default();
    if let Some(other) = responses.iter().find(|r| r.task_id != task_id) {
        return Err(AnnotationError::MixedTasks(task_id, other.task_id.clone()));
    }
    if responses.len() < REQUIRED_RESPONSES {
        return Err(AnnotationError::UnderAnnotated { task_id, count: responses.len() });
    }
    let answerable = responses.iter().filter(|r| r.answerable).count();
    let votes = VoteTally { answerable, unanswerable: responses.len() - answerable };
    let label = match votes.answerable.cmp(&votes.unanswerable) {
        std::cmp::Ordering::Greater => ConsensusOutcome::Answerable,
        std::cmp::Ordering::Less => ConsensusOutcome::Unanswerable,
        std::cmp::Ordering::Equal => ConsensusOutcome::NoConsensus,
    };
    let mean_confidence = responses.iter().map(|r| r.confidence as f64).sum::<f64>() / responses.len() as f64;
    Ok(ConsensusLabel { task_id, label, votes, mean_confidence })
}

/// Plurality among the majority side; ties go to the higher mean voter
/// confidence, then to declaration order.
pub fn consensus_answer(responses: &[AnnotatorResponse], label: ConsensusOutcome) -> Option<ConsensusAnswer> {
    let candidates: Vec<(ConsensusAnswer, u8)> = responses
        .iter()
        .filter_map(|r| match label {
            ConsensusOutcome::Unanswerable if !r.answerable => {
                r.unanswerable_answer.map(|a| (ConsensusAnswer::Unanswerable(a), r.confidence))
            }
            ConsensusOutcome::Answerable if r.answerable => {
                r.chosen_answer.map(|p| (ConsensusAnswer::Answerable(p), r.confidence))
            }
            _ => None,
        })
        .collect();
    let rank = |a: &ConsensusAnswer| match a {
        ConsensusAnswer::Unanswerable(x) => x.index(),
        ConsensusAnswer::Answerable(p) => p.index(),
    };
    let mut stats: BTreeMap<usize, (ConsensusAnswer, usize, u32)> = BTreeMap::new();
    for (a, c) in candidates {
        let e = stats.entry(rank(&a)).or_insert((a, 0, 0));
        e.1 += 1;
        e.2 += c as u32;
    }
    // BTreeMap iterates in declaration order, so `max_by` keeping the last
    // maximum would prefer later variants; reverse to keep the earliest.
    stats
        .into_values()
        .rev()
        .max_by(|a, b| a.1.cmp(&b.1).then((a.2 as f64 / a.1 as f64).total_cmp(&(b.2 as f64 / b.1 as f64))))
        .map(|(a, _, _)| a)
}

/// Most frequent reason among unanswerable votes, declaration order on ties.
pub fn majority_reason(responses: &[AnnotatorResponse]) -> Option<Reason> {
    let mut counts = [0usize; 4];
    for r in responses.iter().filter(|r| !r.answerable) {
        if let Some(reason) = r.reason {
            counts[reason.index()] += 1;
        }
    }
    let best = *counts.iter().max()?;
    (best > 0).then(|| Reason::ALL[counts.iter().position(|&c| c == best).expect("max exists")])
}

/// Group responses by task id. Later duplicates from the same worker are
/// dropped.
pub fn group_by_task(responses: &[AnnotatorResponse]) -> BTreeMap<String, Vec<AnnotatorResponse>> {
    let mut out: BTreeMap<String, Vec<AnnotatorResponse>> = BTreeMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for r in responses {
        if seen.insert((&r.task_id, &r.worker_id)) {
            out.entry(r.task_id.clone()).or_default().push(r.clone());
        }
    }
    out
}

/// One line of the consensus JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    #[serde(flatten)]
    pub label: ConsensusLabel,
    pub answer: Option<ConsensusAnswer>,
    pub answer_text: Option<String>,
    pub reason: Option<Reason>,
}

/// Consensus for every task with enough responses. Under-annotated tasks
/// are returned separately.
pub fn consensus_all(
    responses: &[AnnotatorResponse],
    tasks: &HashMap<String, AnnotationTask>,
) -> (Vec<ConsensusRecord>, Vec<AnnotationError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (_, group) in group_by_task(responses) {
        match majority_vote(&group) {
            Ok(label) => {
                let answer = consensus_answer(&group, label.label);
                let answer_text = answer.map(|a| a.text(tasks.get(&label.task_id)));
                let reason = (label.label == ConsensusOutcome::Unanswerable).then(|| majority_reason(&group)).flatten();
                records.push(ConsensusRecord { label, answer, answer_text, reason });
            }
            Err(e) => errors.push(e),
        }
    }
    (records, errors)
}
