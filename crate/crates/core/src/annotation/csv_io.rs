//! CSV exchange of tasks and responses.
//!
//! Task rows: `task_id,source_id,kind,image,question,option_original,
//! option_baseline,option_random,random_fallback,exemplars` (exemplars as a
//! JSON array). Response rows: `task_id,worker_id,answerable,reason,
//! unanswerable_answer,altered_element,chosen_answer,confidence`, with
//! empty cells for absent fields.

use std::path::Path;

use super::{
    AlteredElement, AnnotationTask, AnnotatorResponse, AnswerOption, Provenance, Reason, UnanswerableAnswer,
};
use crate::data::{DataError, LineDiagnostic, PerturbationKind};

pub const TASK_HEADER: [&str; 10] = [
    "task_id",
    "source_id",
    "kind",
    "image",
    "question",
    "option_original",
    "option_baseline",
    "option_random",
    "random_fallback",
    "exemplars",
];

pub const RESPONSE_HEADER: [&str; 8] = [
    "task_id",
    "worker_id",
    "answerable",
    "reason",
    "unanswerable_answer",
    "altered_element",
    "chosen_answer",
    "confidence",
];

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport<T> {
    pub accepted: Vec<T>,
    /// Line numbers count the header as line 1.
    pub rejected: Vec<LineDiagnostic>,
}

impl<T> Default for IngestReport<T> {
    fn default() -> Self {
        Self { accepted: Vec::new(), rejected: Vec::new() }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io { path: path.to_path_buf(), source },
        other => DataError::Invalid(format!("{}: {other:?}", path.display())),
    }
}

fn kind_str(kind: PerturbationKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn export_tasks(tasks: &[AnnotationTask], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TASK_HEADER).map_err(|e| csv_err(path, e))?;
    for t in tasks {
        let opt = |p: Provenance| t.option(p).map(|o| o.text.clone()).unwrap_or_default();
        let exemplars = serde_json::to_string(&t.exemplars).map_err(|e| DataError::Invalid(e.to_string()))?;
        w.write_record([
            t.task_id.clone(),
            t.source_id.clone(),
            kind_str(t.kind),
            t.image.clone(),
            t.question.clone(),
            opt(Provenance::Original),
            opt(Provenance::Baseline),
            opt(Provenance::Random),
            t.random_fallback.to_string(),
            exemplars,
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

fn optional<T>(cell: &str, name: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>, String> {
    if cell.trim().is_empty() {
        return Ok(None);
    }
    parse(cell).map(Some).ok_or_else(|| format!("bad {name}: {cell:?}"))
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), DataError> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(DataError::Schema {
            path: path.to_path_buf(),
            diagnostics: vec![LineDiagnostic { line: 1, message: format!("expected header {}", want.join(",")) }],
        });
    }
    Ok(())
}

pub fn ingest_tasks(path: &Path) -> Result<IngestReport<AnnotationTask>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| csv_err(path, e))?;
    check_header(path, &rdr.headers().map_err(|e| csv_err(path, e))?.clone(), &TASK_HEADER)?;
    let mut report = IngestReport::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            if row.len() != TASK_HEADER.len() {
                return Err(format!("expected {} fields, got {}", TASK_HEADER.len(), row.len()));
            }
            let kind: PerturbationKind =
                serde_json::from_value(serde_json::Value::String(row[2].to_string())).map_err(|e| e.to_string())?;
            let exemplars = if row[9].trim().is_empty() {
                Vec::new()
            } else {
                serde_json::from_str(&row[9]).map_err(|e| format!("bad exemplars: {e}"))?
            };
            let options: Vec<AnswerOption> = Provenance::ALL
                .iter()
                .zip(row.iter().skip(5))
                .map(|(p, t)| AnswerOption { text: t.to_string(), provenance: *p })
                .collect();
            if options.iter().any(|o| o.text.trim().is_empty()) {
                return Err("answer options must be non-empty".into());
            }
            Ok(AnnotationTask {
                task_id: row[0].to_string(),
                source_id: row[1].to_string(),
                kind,
                image: row[3].to_string(),
                question: row[4].to_string(),
                exemplars,
                answer_options: options,
                random_fallback: parse_bool(&row[8])?,
            })
        });
        match parsed {
            Ok(t) => report.accepted.push(t),
            Err(message) => report.rejected.push(LineDiagnostic { line, message }),
        }
    }
    Ok(report)
}

pub fn export_responses(responses: &[AnnotatorResponse], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(RESPONSE_HEADER).map_err(|e| csv_err(path, e))?;
    for r in responses {
        w.write_record([
            r.task_id.as_str(),
            r.worker_id.as_str(),
            if r.answerable { "true" } else { "false" },
            r.reason.map(Reason::code).unwrap_or(""),
            r.unanswerable_answer.map(UnanswerableAnswer::code).unwrap_or(""),
            r.altered_element.map(AlteredElement::as_str).unwrap_or(""),
            r.chosen_answer.map(Provenance::as_str).unwrap_or(""),
            &r.confidence.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn parse_response(row: &csv::StringRecord) -> Result<AnnotatorResponse, String> {
    if row.len() != RESPONSE_HEADER.len() {
        return Err(format!("expected {} fields, got {}", RESPONSE_HEADER.len(), row.len()));
    }
    let confidence: u8 = row[7].trim().parse().map_err(|_| format!("bad confidence: {:?}", &row[7]))?;
    let r = AnnotatorResponse {
        task_id: row[0].trim().to_string(),
        worker_id: row[1].trim().to_string(),
        answerable: parse_bool(&row[2])?,
        reason: optional(&row[3], "reason", Reason::from_code)?,
        unanswerable_answer: optional(&row[4], "unanswerable_answer", UnanswerableAnswer::from_code)?,
        altered_element: optional(&row[5], "altered_element", AlteredElement::parse)?,
        chosen_answer: optional(&row[6], "chosen_answer", Provenance::parse)?,
        confidence,
    };
    r.validate()?;
    Ok(r)
}

/// Read responses, rejecting rows that break the response invariants.
pub fn ingest_responses(path: &Path) -> Result<IngestReport<AnnotatorResponse>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| csv_err(path, e))?;
    check_header(path, &rdr.headers().map_err(|e| csv_err(path, e))?.clone(), &RESPONSE_HEADER)?;
    let mut report = IngestReport::default();
    for (i, row) in rdr.records().enumerate() {
        match row.map_err(|e| e.to_string()).and_then(|r| parse_response(&r)) {
            Ok(r) => report.accepted.push(r),
            Err(message) => report.rejected.push(LineDiagnostic { line: i + 2, message }),
        }
    }
    Ok(report)
}
