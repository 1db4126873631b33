//! Corpus data model, JSONL storage, binary-answer filtering and splitting.
//!
//! Records are stored one JSON object per line. Instance keys are
//! `id, image, question, answers, question_type, answer_type, split`;
//! perturbation keys are `source_id, kind, perturbed_question,
//! perturbed_image, params, baseline_answer`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::normalize::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {} invalid line(s); first: {}", diagnostics.len(), diagnostics[0])]
    Schema { path: PathBuf, diagnostics: Vec<LineDiagnostic> },
    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("invalid record: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no", alias = "yes-no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl AnswerType {
    pub const ALL: [AnswerType; 3] = [AnswerType::YesNo, AnswerType::Number, AnswerType::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerType::YesNo => "yes/no",
            AnswerType::Number => "number",
            AnswerType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    #[default]
    Unassigned,
}

/// One image/question/answers record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaInstance {
    pub id: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    pub question: String,
    pub answers: Vec<String>,
    pub question_type: String,
    pub answer_type: AnswerType,
    #[serde(default)]
    pub split: Split,
}

impl VqaInstance {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("instance {:?}: empty question", self.id));
        }
        if self.answers.is_empty() {
            return Err(format!("instance {:?}: no answers", self.id));
        }
        Ok(())
    }

    /// Most frequent answer after normalisation; earliest wins ties.
    pub fn primary_answer(&self) -> Option<&str> {
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
        for (i, a) in self.answers.iter().enumerate() {
            let e = counts.entry(normalize_label(a)).or_insert((0, i));
            e.0 += 1;
        }
        counts
            .values()
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|&(_, i)| self.answers[i].as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "T1_word_replace")]
    WordReplace,
    #[serde(rename = "T2_negation")]
    Negation,
    #[serde(rename = "I1_image_replace")]
    ImageReplace,
    #[serde(rename = "I2_object_mask")]
    ObjectMask,
    #[serde(rename = "I3_copy_move")]
    CopyMove,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::WordReplace,
        PerturbationKind::Negation,
        PerturbationKind::ImageReplace,
        PerturbationKind::ObjectMask,
        PerturbationKind::CopyMove,
    ];

    pub fn is_text(self) -> bool {
        matches!(self, PerturbationKind::WordReplace | PerturbationKind::Negation)
    }

    pub fn code(self) -> &'static str {
        match self {
            PerturbationKind::WordReplace => "T-1",
            PerturbationKind::Negation => "T-2",
            PerturbationKind::ImageReplace => "I-1",
            PerturbationKind::ObjectMask => "I-2",
            PerturbationKind::CopyMove => "I-3",
        }
    }
}

pub type Params = BTreeMap<String, serde_json::Value>;

/// A single perturbation applied to a source instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub source_id: String,
    pub kind: PerturbationKind,
    pub perturbed_question: Option<String>,
    #[serde(rename = "perturbed_image")]
    pub perturbed_image_ref: Option<String>,
    pub params: Params,
    pub baseline_answer: Option<String>,
}

impl PerturbationRecord {
    pub fn text(source_id: &str, kind: PerturbationKind, question: String, params: Params) -> Self {
        debug_assert!(kind.is_text());
        Self {
            source_id: source_id.to_string(),
            kind,
            perturbed_question: Some(question),
            perturbed_image_ref: None,
            params,
            baseline_answer: None,
        }
    }

    pub fn image(source_id: &str, kind: PerturbationKind, image_ref: String, params: Params) -> Self {
        debug_assert!(!kind.is_text());
        Self {
            source_id: source_id.to_string(),
            kind,
            perturbed_question: None,
            perturbed_image_ref: Some(image_ref),
            params,
            baseline_answer: None,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let ok = if self.kind.is_text() {
            self.perturbed_question.is_some() && self.perturbed_image_ref.is_none()
        } else {
            self.perturbed_question.is_none() && self.perturbed_image_ref.is_some()
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "{} record for {:?} must set exactly the {} field",
                self.kind.code(),
                self.source_id,
                if self.kind.is_text() { "perturbed_question" } else { "perturbed_image" }
            ))
        }
    }

    /// Question shown to annotators and models: the rewritten one for text
    /// perturbations, the source question otherwise.
    pub fn effective_question<'a>(&'a self, source: &'a VqaInstance) -> &'a str {
        self.perturbed_question.as_deref().unwrap_or(&source.question)
    }

    pub fn effective_image<'a>(&'a self, source: &'a VqaInstance) -> &'a str {
        self.perturbed_image_ref.as_deref().unwrap_or(&source.image_ref)
    }
}

/// Why a perturbation was not produced for an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub source_id: String,
    pub kind: PerturbationKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PerturbOutcome {
    pub records: Vec<PerturbationRecord>,
    pub skips: Vec<Skip>,
}

impl PerturbOutcome {
    pub fn skip(&mut self, source_id: &str, kind: PerturbationKind, reason: impl Into<String>) {
        self.skips.push(Skip { source_id: source_id.to_string(), kind, reason: reason.into() });
    }

    pub fn extend(&mut self, other: PerturbOutcome) {
        self.records.extend(other.records);
        self.skips.extend(other.skips);
    }
}

/// Read a JSONL file, returning each record with its 1-based line number.
/// Whitespace-only lines are skipped. All malformed lines are reported.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => out.push((idx + 1, v)),
            Err(e) => diagnostics.push(LineDiagnostic { line: idx + 1, message: e.to_string() }),
        }
    }
    if diagnostics.is_empty() {
        Ok(out)
    } else {
        Err(DataError::Schema { path: path.to_path_buf(), diagnostics })
    }
}

/// Write records as JSONL while holding an exclusive advisory lock on the file.
pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let file = OpenOptions::new().create(true).write(true).truncate(false).open(path).map_err(io_err)?;
    file.lock().map_err(io_err)?;
    file.set_len(0).map_err(io_err)?;
    let mut w = BufWriter::new(&file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| DataError::Invalid(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    drop(w);
    file.unlock().map_err(io_err)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<VqaInstance>> {
    let rows: Vec<(usize, VqaInstance)> = read_jsonl(path)?;
    let mut diagnostics = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, inst) in rows {
        if let Err(msg) = inst.validate() {
            diagnostics.push(LineDiagnostic { line, message: msg });
            continue;
        }
        if let Some(&first) = seen.get(&inst.id) {
            return Err(DataError::DuplicateId { id: inst.id, first, second: line });
        }
        seen.insert(inst.id.clone(), line);
        out.push(inst);
    }
    if diagnostics.is_empty() {
        Ok(out)
    } else {
        Err(DataError::Schema { path: path.to_path_buf(), diagnostics })
    }
}

pub fn save_dataset(instances: &[VqaInstance], path: &Path) -> Result<()> {
    write_jsonl(path, instances)
}

pub fn load_perturbations(path: &Path) -> Result<Vec<PerturbationRecord>> {
    let rows: Vec<(usize, PerturbationRecord)> = read_jsonl(path)?;
    let diagnostics: Vec<_> = rows
        .iter()
        .filter_map(|(line, r)| r.validate().err().map(|message| LineDiagnostic { line: *line, message }))
        .collect();
    if !diagnostics.is_empty() {
        return Err(DataError::Schema { path: path.to_path_buf(), diagnostics });
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn save_perturbations(records: &[PerturbationRecord], path: &Path) -> Result<()> {
    write_jsonl(path, records)
}

pub fn is_binary_answer(answer: &str) -> bool {
    matches!(normalize_label(answer).as_str(), "yes" | "no")
}

/// Drop every yes/no instance: flipping such a question just flips the answer.
pub fn filter_binary_answers(instances: &[VqaInstance]) -> Vec<VqaInstance> {
    instances
        .iter()
        .filter(|i| i.answer_type != AnswerType::YesNo && !i.answers.iter().any(|a| is_binary_answer(a)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub valid_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_ids.len(), self.valid_ids.len(), self.test_ids.len())
    }

    pub fn split_of(&self, id: &str) -> Split {
        if self.train_ids.iter().any(|x| x == id) {
            Split::Train
        } else if self.valid_ids.iter().any(|x| x == id) {
            Split::Valid
        } else if self.test_ids.iter().any(|x| x == id) {
            Split::Test
        } else {
            Split::Unassigned
        }
    }

    /// Write the split assignment back onto the instances.
    pub fn apply(&self, instances: &mut [VqaInstance]) {
        let mut lookup: HashMap<&str, Split> = HashMap::new();
        for (ids, split) in [(&self.train_ids, Split::Train), (&self.valid_ids, Split::Valid), (&self.test_ids, Split::Test)] {
            lookup.extend(ids.iter().map(|id| (id.as_str(), split)));
        }
        for inst in instances {
            inst.split = lookup.get(inst.id.as_str()).copied().unwrap_or(Split::Unassigned);
        }
    }
}

fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    let positive = [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0);
    if !positive || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(ratios));
    }
    Ok(())
}

/// Valid/test sizes are `floor(ratio * n)`; the remainder goes to train.
fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let valid = floor(ratios.1);
    let test = floor(ratios.2);
    (n - valid - test, valid, test)
}

fn unique_ids(instances: &[VqaInstance]) -> Result<Vec<String>> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, inst) in instances.iter().enumerate() {
        if let Some(&first) = seen.get(inst.id.as_str()) {
            return Err(DataError::DuplicateId { id: inst.id.clone(), first: first + 1, second: i + 1 });
        }
        seen.insert(&inst.id, i);
    }
    Ok(instances.iter().map(|i| i.id.clone()).collect())
}

/// Seeded, unstratified train/valid/test partition.
pub fn split_dataset(instances: &[VqaInstance], ratios: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    check_ratios(ratios)?;
    let mut ids = unique_ids(instances)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let (_, valid, test) = split_sizes(ids.len(), ratios);
    let test_ids = ids.split_off(ids.len() - test);
    let valid_ids = ids.split_off(ids.len() - valid);
    Ok(DatasetSplit { train_ids: ids, valid_ids, test_ids, seed })
}

/// Like [`split_dataset`] but partitions each stratum separately, so every
/// stratum keeps the requested proportions. Strata are visited in sorted
/// key order.
pub fn split_dataset_stratified<F>(
    instances: &[VqaInstance],
    ratios: (f64, f64, f64),
    seed: u64,
    stratum: F,
) -> Result<DatasetSplit>
where
    F: Fn(&VqaInstance) -> String,
{
    check_ratios(ratios)?;
    unique_ids(instances)?;
    let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for inst in instances {
        strata.entry(stratum(inst)).or_default().push(inst.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit { train_ids: vec![], valid_ids: vec![], test_ids: vec![], seed };
    for (_, mut ids) in strata {
        ids.shuffle(&mut rng);
        let (_, valid, test) = split_sizes(ids.len(), ratios);
        split.test_ids.extend(ids.split_off(ids.len() - test));
        split.valid_ids.extend(ids.split_off(ids.len() - valid));
        split.train_ids.extend(ids);
    }
    Ok(split)
}

/// Ids as a set, for partition checks.
pub fn id_set(instances: &[VqaInstance]) -> HashSet<&str> {
    instances.iter().map(|i| i.id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn inst(id: &str, q: &str, answers: &[&str], ty: AnswerType) -> VqaInstance {
        VqaInstance {
            id: id.into(),
            image_ref: format!("images/{id}.png"),
            question: q.into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            question_type: "what".into(),
            answer_type: ty,
            split: Split::Unassigned,
        }
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(load_dataset(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_dataset(Path::new("/nonexistent/x.jsonl")).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn single_record_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let line = r#"{"id":"1","image":"img/1.jpg","question":"What is on the table?","answers":["cup"],"question_type":"what is","answer_type":"other","split":"test"}"#;
        std::fs::write(&p, format!("{line}\n")).unwrap();
        let loaded = load_dataset(&p).unwrap();
        assert_eq!(loaded.len(), 1);
        let q = dir.path().join("e.jsonl");
        save_dataset(&loaded, &q).unwrap();
        assert_eq!(std::fs::read_to_string(&q).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let a = inst("dup", "What?", &["cat"], AnswerType::Other);
        let line = serde_json::to_string(&a).unwrap();
        std::fs::write(&p, format!("{line}\n{line}\n")).unwrap();
        match load_dataset(&p).unwrap_err() {
            DataError::DuplicateId { id, first, second } => {
                assert_eq!((id.as_str(), first, second), ("dup", 1, 2));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_violations_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let good = serde_json::to_string(&inst("a", "What?", &["cat"], AnswerType::Other)).unwrap();
        let no_answers = serde_json::to_string(&inst("b", "What?", &[], AnswerType::Other)).unwrap();
        std::fs::write(&p, format!("{good}\n{{\"id\":\"x\"}}\n{no_answers}\n")).unwrap();
        match load_dataset(&p).unwrap_err() {
            DataError::Schema { diagnostics, .. } => {
                assert_eq!(diagnostics.len(), 1);
                assert_eq!(diagnostics[0].line, 2);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn save_writes_one_line_per_instance_and_keeps_unicode() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let xs = vec![
            inst("1", "What is on the café table?", &["crème brûlée"], AnswerType::Other),
            inst("2", "How many 猫?", &["2"], AnswerType::Number),
            inst("3", "What?", &["x"], AnswerType::Other),
        ];
        save_dataset(&xs, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 3);
        assert_eq!(load_dataset(&p).unwrap(), xs);
        save_dataset(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "");
    }

    #[test]
    fn binary_filter() {
        let xs = vec![
            inst("1", "Is it red?", &["yes"], AnswerType::Other),
            inst("2", "How many?", &["2"], AnswerType::Number),
            inst("3", "Is it?", &["maybe"], AnswerType::YesNo),
            inst("4", "What?", &[" No."], AnswerType::Other),
        ];
        let kept = filter_binary_answers(&xs);
        assert_eq!(kept.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), vec!["2"]);
        assert!(filter_binary_answers(&[]).is_empty());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let xs: Vec<_> = (0..100).map(|i| inst(&i.to_string(), "What?", &["a"], AnswerType::Other)).collect();
        let s = split_dataset(&xs, (0.7, 0.1, 0.2), 3).unwrap();
        assert_eq!(s.sizes(), (70, 10, 20));
        assert_eq!(s, split_dataset(&xs, (0.7, 0.1, 0.2), 3).unwrap());
        assert_ne!(s, split_dataset(&xs, (0.7, 0.1, 0.2), 4).unwrap());
        let xs7: Vec<_> = xs[..7].to_vec();
        assert_eq!(split_dataset(&xs7, (0.7, 0.1, 0.2), 0).unwrap().sizes(), (6, 0, 1));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        assert!(matches!(split_dataset(&[], (0.7, 0.2, 0.2), 0), Err(DataError::BadRatios(_))));
        assert!(matches!(split_dataset(&[], (1.0, 0.0, 0.0), 0), Err(DataError::BadRatios(_))));
    }

    #[test]
    fn stratified_split_keeps_proportions_per_stratum() {
        let xs: Vec<_> = (0..200)
            .map(|i| {
                let mut x = inst(&i.to_string(), "What?", &["a"], AnswerType::Other);
                x.question_type = if i % 2 == 0 { "even".into() } else { "odd".into() };
                x
            })
            .collect();
        let s = split_dataset_stratified(&xs, (0.7, 0.1, 0.2), 1, |i| i.question_type.clone()).unwrap();
        assert_eq!(s.sizes(), (140, 20, 40));
        let even_test = s.test_ids.iter().filter(|id| id.parse::<u32>().unwrap() % 2 == 0).count();
        assert_eq!(even_test, 20);
    }

    #[test]
    fn perturbation_record_validation() {
        let r = PerturbationRecord::text("1", PerturbationKind::Negation, "q".into(), Params::new());
        assert!(r.validate().is_ok());
        let mut bad = r.clone();
        bad.perturbed_image_ref = Some("x.png".into());
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"kind\":\"T2_negation\""));
        assert!(json.contains("\"perturbed_image\":null"));
    }

    #[test]
    fn primary_answer_is_mode() {
        let x = inst("1", "What?", &["cat", "Dog", "dog", "cat", "dog"], AnswerType::Other);
        assert_eq!(x.primary_answer(), Some("Dog"));
    }
}
