use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use abstain_core::annotation::{
    self, analytics, build_task, consensus_all, export_tasks, ingest_responses, ingest_tasks, AnalyticsReport, Exemplar,
    TaskPool,
};
use abstain_core::data::{load_dataset, load_perturbations, read_jsonl, write_jsonl, LineDiagnostic};
use abstain_core::{AnnotationTask, AnnotatorResponse, ConsensusOutcome, PerturbationKind};
use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::{Manifest, OutputDir};
use crate::service::{self, AppState};

pub const TASKS: &str = "tasks.csv";
pub const EXPORT_REPORT: &str = "export_report.json";
pub const RESPONSES: &str = "responses.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const CONSENSUS: &str = "consensus.jsonl";
pub const ANALYTICS: &str = "analytics.json";
pub const CONSENSUS_REPORT: &str = "consensus_report.json";
pub const SERVED_RESPONSES: &str = "served_responses.jsonl";

/// Baseline-model answer to a perturbed question. Rows without `kind`
/// apply to every perturbation of the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub source_id: String,
    #[serde(default)]
    pub kind: Option<PerturbationKind>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub source_id: String,
    pub kind: PerturbationKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportReport {
    pub records: usize,
    pub tasks: usize,
    pub duplicates: usize,
    pub rejected: Vec<RejectedRecord>,
}

pub fn export(
    cfg: &RunConfig,
    out: &OutputDir,
    perturbations: &Path,
    baselines: Option<&Path>,
    exemplars: Option<&Path>,
) -> anyhow::Result<ExportReport> {
    let corpus_path = cfg.paths.corpus.as_deref().context("no corpus given (--corpus or paths.corpus)")?;
    out.claim(&[TASKS, EXPORT_REPORT, "annotate_export.manifest.json"])?;
    let corpus = load_dataset(corpus_path)?;
    let records = load_perturbations(perturbations)?;
    let mut base: HashMap<(String, Option<PerturbationKind>), String> = HashMap::new();
    if let Some(p) = baselines {
        for (_, row) in read_jsonl::<BaselineRow>(p)? {
            base.insert((row.source_id, row.kind), row.answer);
        }
    }
    let exemplar_list: Vec<Exemplar> = match exemplars {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => Vec::new(),
    };
    let by_id: HashMap<&str, _> = corpus.iter().map(|i| (i.id.as_str(), i)).collect();

    let mut tasks: Vec<AnnotationTask> = Vec::new();
    let mut seen = HashSet::new();
    let mut report = ExportReport { records: records.len(), tasks: 0, duplicates: 0, rejected: Vec::new() };
    for r in &records {
        let reject = |error: String| RejectedRecord { source_id: r.source_id.clone(), kind: r.kind, error };
        let Some(source) = by_id.get(r.source_id.as_str()) else {
            report.rejected.push(reject("source not in corpus".into()));
            continue;
        };
        let baseline = base
            .get(&(r.source_id.clone(), Some(r.kind)))
            .or_else(|| base.get(&(r.source_id.clone(), None)))
            .map(String::as_str);
        match build_task(r, source, baseline, cfg.annotate.seed, &corpus, &exemplar_list) {
            Ok(t) if !seen.insert(t.task_id.clone()) => {
                log::warn!("duplicate perturbation for {} ({}); keeping the first", r.source_id, r.kind.code());
                report.duplicates += 1;
            }
            Ok(t) => tasks.push(t),
            Err(e) => report.rejected.push(reject(e.to_string())),
        }
    }
    report.tasks = tasks.len();
    export_tasks(&tasks, &out.path(TASKS))?;
    out.write_json(EXPORT_REPORT, &report)?;

    let mut manifest = Manifest::new("annotate export", cfg);
    manifest.seed("annotate", cfg.annotate.seed);
    manifest.input("corpus", corpus_path)?;
    manifest.input("perturbations", perturbations)?;
    manifest.optional_input("baselines", baselines)?;
    manifest.optional_input("exemplars", exemplars)?;
    manifest.details = serde_json::json!({ "tasks": report.tasks, "rejected": report.rejected.len() });
    out.write_manifest(manifest, &[TASKS, EXPORT_REPORT])?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownTask {
    pub task_id: String,
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: Vec<LineDiagnostic>,
    pub unknown_tasks: Vec<UnknownTask>,
}

pub fn ingest(cfg: &RunConfig, out: &OutputDir, responses: &Path, tasks: Option<&Path>) -> anyhow::Result<IngestSummary> {
    out.claim(&[RESPONSES, INGEST_REPORT, "annotate_ingest.manifest.json"])?;
    let report = ingest_responses(responses)?;
    let mut accepted = report.accepted;
    let mut unknown_tasks = Vec::new();
    if let Some(t) = tasks {
        let known: HashSet<String> = ingest_tasks(t)?.accepted.into_iter().map(|t| t.task_id).collect();
        accepted.retain(|r| {
            let ok = known.contains(&r.task_id);
            if !ok {
                unknown_tasks.push(UnknownTask { task_id: r.task_id.clone(), worker_id: r.worker_id.clone() });
            }
            ok
        });
    }
    write_jsonl(&out.path(RESPONSES), &accepted)?;
    let summary = IngestSummary { accepted: accepted.len(), rejected: report.rejected, unknown_tasks };
    out.write_json(INGEST_REPORT, &summary)?;

    let mut manifest = Manifest::new("annotate ingest", cfg);
    manifest.input("responses", responses)?;
    manifest.optional_input("tasks", tasks)?;
    manifest.details = serde_json::json!({ "accepted": summary.accepted, "rejected": summary.rejected.len() });
    out.write_manifest(manifest, &[RESPONSES, INGEST_REPORT])?;
    Ok(summary)
}

/// Responses from CSV (by extension) or JSONL.
pub fn load_responses(path: &Path) -> anyhow::Result<Vec<AnnotatorResponse>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let report = ingest_responses(path)?;
        for d in &report.rejected {
            log::warn!("{}: {d}", path.display());
        }
        return Ok(report.accepted);
    }
    let rows: Vec<(usize, AnnotatorResponse)> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        match r.validate() {
            Ok(()) => out.push(r),
            Err(e) => log::warn!("{}:{line}: {e}", path.display()),
        }
    }
    Ok(out)
}

pub fn load_tasks(path: &Path) -> anyhow::Result<Vec<AnnotationTask>> {
    let report = ingest_tasks(path)?;
    if !report.rejected.is_empty() {
        let lines: Vec<String> = report.rejected.iter().map(|d| d.to_string()).collect();
        anyhow::bail!("{}: {} malformed task row(s): {}", path.display(), lines.len(), lines.join("; "));
    }
    Ok(report.accepted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub tasks: usize,
    pub labeled: usize,
    pub outcomes: BTreeMap<String, usize>,
    pub under_annotated: Vec<String>,
}

pub fn consensus(
    cfg: &RunConfig,
    out: &OutputDir,
    tasks_path: &Path,
    responses_path: &Path,
) -> anyhow::Result<(ConsensusSummary, AnalyticsReport)> {
    out.claim(&[CONSENSUS, ANALYTICS, CONSENSUS_REPORT, "annotate_consensus.manifest.json"])?;
    let tasks = load_tasks(tasks_path)?;
    let responses = load_responses(responses_path)?;
    let by_id: HashMap<String, AnnotationTask> = tasks.iter().map(|t| (t.task_id.clone(), t.clone())).collect();
    let kinds: HashMap<String, PerturbationKind> = tasks.iter().map(|t| (t.task_id.clone(), t.kind)).collect();
    let (records, errors) = consensus_all(&responses, &by_id);
    let report = analytics(&responses, &records, &kinds);

    let mut outcomes = BTreeMap::new();
    for o in [ConsensusOutcome::Answerable, ConsensusOutcome::Unanswerable, ConsensusOutcome::NoConsensus] {
        outcomes.insert(o.as_str().to_string(), records.iter().filter(|r| r.label.label == o).count());
    }
    let under_annotated: Vec<String> = errors
        .iter()
        .map(|e| match e {
            annotation::AnnotationError::UnderAnnotated { task_id, .. } => task_id.clone(),
            other => other.to_string(),
        })
        .collect();
    let summary = ConsensusSummary { tasks: tasks.len(), labeled: records.len(), outcomes, under_annotated };

    write_jsonl(&out.path(CONSENSUS), &records)?;
    out.write_json(ANALYTICS, &report)?;
    out.write_json(CONSENSUS_REPORT, &summary)?;
    let mut manifest = Manifest::new("annotate consensus", cfg);
    manifest.input("tasks", tasks_path)?;
    manifest.input("responses", responses_path)?;
    manifest.details = serde_json::to_value(&summary)?;
    out.write_manifest(manifest, &[CONSENSUS, ANALYTICS, CONSENSUS_REPORT])?;
    Ok((summary, report))
}

/// Build the service state: pool settings from the config, responses
/// persisted to (and restored from) `store`.
pub fn service_state(cfg: &RunConfig, tasks_path: &Path, store: &Path) -> anyhow::Result<AppState> {
    let tasks = load_tasks(tasks_path)?;
    let pool = TaskPool::with_settings(tasks, cfg.annotate.required_responses, Duration::from_secs(cfg.annotate.lease_secs));
    AppState::new(pool).with_store(store)
}

pub fn serve(cfg: &RunConfig, out: &OutputDir, tasks_path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out.root())?;
    let state = Arc::new(service_state(cfg, tasks_path, &out.path(SERVED_RESPONSES))?);
    let mut manifest = Manifest::new("annotate serve", cfg);
    manifest.input("tasks", tasks_path)?;
    out.write_manifest(manifest, &[SERVED_RESPONSES])?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(&cfg.annotate.addr, state))
}
