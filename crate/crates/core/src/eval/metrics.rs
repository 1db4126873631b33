use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{EvalError, Protocol, Verdict, UNANSWERABLE};
use crate::data::AnswerType;
use crate::normalize::normalize_answer;

const OOS_LABEL: &str = "<out-of-scope>";

fn check_len(p: usize, g: usize) -> Result<(), EvalError> {
    if p != g {
        return Err(EvalError::LengthMismatch { predictions: p, gold: g });
    }
    Ok(())
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Share of verdicts whose answerability matches the gold flag
/// (`true` = unanswerable). Out-of-scope verdicts are wrong.
pub fn acc_binary(verdicts: &[Verdict], gold_unanswerable: &[bool]) -> Result<f64, EvalError> {
    check_len(verdicts.len(), gold_unanswerable.len())?;
    let correct = verdicts.iter().zip(gold_unanswerable).filter(|(v, g)| v.predicts_unanswerable() == Some(**g)).count();
    Ok(ratio(correct, verdicts.len()))
}

fn open_correct(prediction: Option<&str>, valid: &[String], unanswerable: bool) -> bool {
    let Some(p) = prediction else { return false };
    let p = normalize_answer(p);
    (unanswerable && p == UNANSWERABLE) || valid.iter().any(|v| normalize_answer(v) == p)
}

/// Open-set accuracy: a prediction is correct when, after normalisation, it
/// equals one of the valid answers, or is "unanswerable" on an
/// unanswerable item. `None` predictions (out-of-scope) are wrong.
pub fn acc_open(predictions: &[Option<String>], gold: &[(Vec<String>, bool)]) -> Result<f64, EvalError> {
    check_len(predictions.len(), gold.len())?;
    let correct =
        predictions.iter().zip(gold).filter(|(p, (valid, u))| open_correct(p.as_deref(), valid, *u)).count();
    Ok(ratio(correct, predictions.len()))
}

/// Support-weighted F1 over gold classes, `F1 = 2PR / (P + R)`, with 0/0
/// taken as 0. Classes that occur only in predictions carry no weight.
pub fn weighted_f1_labels<T: Eq + Hash>(predictions: &[T], gold: &[T]) -> Result<f64, EvalError> {
    check_len(predictions.len(), gold.len())?;
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut support: HashMap<&T, usize> = HashMap::new();
    let mut predicted: HashMap<&T, usize> = HashMap::new();
    let mut hits: HashMap<&T, usize> = HashMap::new();
    for (p, g) in predictions.iter().zip(gold) {
        *support.entry(g).or_default() += 1;
        *predicted.entry(p).or_default() += 1;
        if p == g {
            *hits.entry(g).or_default() += 1;
        }
    }
    let total: usize = support.values().sum();
    let sum: f64 = support
        .iter()
        .map(|(c, &s)| {
            let tp = hits.get(c).copied().unwrap_or(0) as f64;
            let prec = ratio(tp as usize, predicted.get(c).copied().unwrap_or(0));
            let rec = tp / s as f64;
            let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            s as f64 * f1
        })
        .sum();
    Ok(sum / total as f64)
}

pub fn weighted_f1(predictions: &[usize], gold: &[usize]) -> Result<f64, EvalError> {
    weighted_f1_labels(predictions, gold)
}

/// Per-instance result fed into [`summarize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub answer_type: AnswerType,
    pub unanswerable: bool,
    pub valid_answers: Vec<String>,
    pub verdict: Verdict,
    /// Answer text the verdict stands for; `None` when out-of-scope.
    pub prediction: Option<String>,
    /// The client failed; the verdict is out-of-scope.
    pub error: bool,
}

impl Outcome {
    fn binary_correct(&self) -> bool {
        self.verdict.predicts_unanswerable() == Some(self.unanswerable)
    }

    fn open_correct(&self) -> bool {
        open_correct(self.prediction.as_deref(), &self.valid_answers, self.unanswerable)
    }

    fn gold_label(&self, protocol: Protocol) -> String {
        match protocol {
            Protocol::By => if self.unanswerable { "unanswerable" } else { "answerable" }.to_string(),
            _ if self.unanswerable => UNANSWERABLE.to_string(),
            _ => self.valid_answers.first().map(|a| normalize_answer(a)).unwrap_or_default(),
        }
    }

    fn predicted_label(&self, protocol: Protocol) -> String {
        match protocol {
            Protocol::By => match self.verdict.predicts_unanswerable() {
                Some(true) => "unanswerable".into(),
                Some(false) => "answerable".into(),
                None => OOS_LABEL.into(),
            },
            _ if self.open_correct() => self.gold_label(protocol),
            _ => self.prediction.as_deref().map(normalize_answer).unwrap_or_else(|| OOS_LABEL.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub n: usize,
    pub acc_b: f64,
    /// Not defined for the binary protocol.
    pub acc_o: Option<f64>,
    pub f1_weighted: f64,
    pub oos_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub n: usize,
    pub acc_b: f64,
    pub acc_o: Option<f64>,
    pub f1_weighted: f64,
    pub oos_ratio: f64,
    pub correct_b: usize,
    /// Wrong binary verdicts, genuine out-of-scope replies included.
    pub incorrect_b: usize,
    /// Out-of-scope replies, client errors included.
    pub oos: usize,
    /// Client failures; these are out-of-scope and tallied here instead of
    /// in `incorrect_b`.
    pub errors: usize,
    /// Keys `yes/no`, `number`, `other` and `all`.
    pub by_answer_type: BTreeMap<String, TypeMetrics>,
}

fn type_metrics(protocol: Protocol, outcomes: &[&Outcome]) -> TypeMetrics {
    let n = outcomes.len();
    let preds: Vec<String> = outcomes.iter().map(|o| o.predicted_label(protocol)).collect();
    let gold: Vec<String> = outcomes.iter().map(|o| o.gold_label(protocol)).collect();
    TypeMetrics {
        n,
        acc_b: ratio(outcomes.iter().filter(|o| o.binary_correct()).count(), n),
        acc_o: (protocol != Protocol::By).then(|| ratio(outcomes.iter().filter(|o| o.open_correct()).count(), n)),
        f1_weighted: weighted_f1_labels(&preds, &gold).expect("equal lengths"),
        oos_ratio: ratio(outcomes.iter().filter(|o| o.verdict.is_out_of_scope()).count(), n),
    }
}

/// Aggregate per-instance outcomes. Order-independent.
pub fn summarize(protocol: Protocol, outcomes: &[Outcome]) -> MetricReport {
    let all: Vec<&Outcome> = outcomes.iter().collect();
    let overall = type_metrics(protocol, &all);
    let mut by_answer_type = BTreeMap::new();
    for t in AnswerType::ALL {
        let subset: Vec<&Outcome> = outcomes.iter().filter(|o| o.answer_type == t).collect();
        by_answer_type.insert(t.as_str().to_string(), type_metrics(protocol, &subset));
    }
    by_answer_type.insert("all".to_string(), overall.clone());
    let correct_b = outcomes.iter().filter(|o| o.binary_correct()).count();
    let errors = outcomes.iter().filter(|o| o.error).count();
    MetricReport {
        protocol,
        n: outcomes.len(),
        acc_b: overall.acc_b,
        acc_o: overall.acc_o,
        f1_weighted: overall.f1_weighted,
        oos_ratio: overall.oos_ratio,
        correct_b,
        incorrect_b: outcomes.len() - correct_b - errors,
        oos: outcomes.iter().filter(|o| o.verdict.is_out_of_scope()).count(),
        errors,
        by_answer_type,
    }
}
