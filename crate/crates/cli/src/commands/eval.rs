use std::path::{Path, PathBuf};
use std::time::Duration;

use abstain_core::data::read_jsonl;
use abstain_core::eval::{
    render_table, run_eval, EchoStub, EmptyStub, EvalConfig, EvalItem, FixtureClient, ModelClient, RunSummary,
};
use abstain_core::{Protocol, ShotConfig};
use anyhow::{bail, Context};

use crate::client::HttpModelClient;
use crate::config::RunConfig;
use crate::manifest::{Manifest, OutputDir};

pub const TABLE: &str = "table.txt";

pub fn report_name(p: Protocol) -> String {
    format!("eval_{p}.report.json")
}

pub fn responses_name(p: Protocol) -> String {
    format!("eval_{p}.responses.jsonl")
}

pub fn load_items(path: &Path) -> anyhow::Result<Vec<EvalItem>> {
    let rows: Vec<(usize, EvalItem)> = read_jsonl(path)?;
    Ok(rows.into_iter().map(|(_, i)| i).collect())
}

fn client(cfg: &RunConfig, items: &[EvalItem], protocol: Protocol) -> anyhow::Result<Box<dyn ModelClient>> {
    let spec = cfg.eval.client.as_str();
    Ok(match spec {
        "echo" => Box::new(EchoStub::new(items, protocol, cfg.eval.seed)),
        "empty" => Box::new(EmptyStub),
        "http" => {
            let url = cfg.backends.model_endpoint.as_deref().context("client \"http\" needs backends.model_endpoint")?;
            Box::new(HttpModelClient::new(url, cfg.eval.model_name.as_deref(), Duration::from_secs(cfg.backends.timeout_secs))?)
        }
        s => match s.strip_prefix("fixture:") {
            Some(path) => Box::new(FixtureClient::from_jsonl(Path::new(path))?),
            None => bail!("unknown client {s:?} (expected echo, empty, fixture:<path> or http)"),
        },
    })
}

/// Evaluate every configured protocol; writes one report and one response
/// log per protocol plus the rendered table.
pub fn run(cfg: &RunConfig, out: &OutputDir, items_path: &Path, pool_path: Option<&Path>) -> anyhow::Result<Vec<RunSummary>> {
    cfg.validate()?;
    let e = &cfg.eval;
    if e.protocols.is_empty() {
        bail!("no protocol selected");
    }
    let mut names: Vec<String> = e.protocols.iter().flat_map(|p| [report_name(*p), responses_name(*p)]).collect();
    names.push(TABLE.into());
    names.push("eval.manifest.json".into());
    out.claim(&names.iter().map(String::as_str).collect::<Vec<_>>())?;

    let items = load_items(items_path)?;
    let pool = match pool_path {
        Some(p) => load_items(p)?,
        None => items.clone(),
    };
    let shots = ShotConfig { n_answerable: e.n_answerable, n_unanswerable: e.n_unanswerable, seed: e.shot_seed };
    let mut summaries = Vec::new();
    let mut client_ids = Vec::new();
    for &protocol in &e.protocols {
        let client = client(cfg, &items, protocol)?;
        let config = EvalConfig { protocol, shots, seed: e.seed, max_in_flight: e.max_in_flight, max_retries: e.max_retries };
        let run = run_eval(&items, &pool, client.as_ref(), &config)?;
        run.persist_responses(&out.path(&responses_name(protocol)))?;
        let summary = RunSummary {
            model: e.model_name.clone().unwrap_or_else(|| run.client.clone()),
            protocol,
            shots,
            report: run.report,
        };
        out.write_json(&report_name(protocol), &summary)?;
        log::info!("{protocol}: {:.1}% ({} OoS of {})", 100.0 * summary.headline(), summary.report.oos, summary.report.n);
        client_ids.push(run.client);
        summaries.push(summary);
    }
    out.write_text(TABLE, &render_table(&summaries))?;

    let mut manifest = Manifest::new("eval", cfg);
    manifest.seed("mc_shuffle", e.seed);
    manifest.seed("shots", e.shot_seed);
    manifest.input("items", items_path)?;
    manifest.optional_input("pool", pool_path)?;
    if let Some(path) = e.client.strip_prefix("fixture:") {
        manifest.input("client_fixture", Path::new(path))?;
    }
    manifest.details = serde_json::json!({
        "clients": client_ids,
        "shots": {
            "total": shots.total(),
            "n_answerable": shots.n_answerable,
            "n_unanswerable": shots.n_unanswerable,
            "seed": shots.seed,
        },
        "items": items.len(),
        "pool": pool.len(),
    });
    let mut outputs = names;
    outputs.pop();
    out.write_manifest(manifest, &outputs.iter().map(String::as_str).collect::<Vec<_>>())?;
    Ok(summaries)
}

/// Collect run reports from files and directories (`*.report.json`).
pub fn collect_reports(inputs: &[PathBuf]) -> anyhow::Result<Vec<RunSummary>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".report.json")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            let raw = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", f.display()))
        })
        .collect()
}

pub fn report(inputs: &[PathBuf]) -> anyhow::Result<String> {
    let runs = collect_reports(inputs)?;
    if runs.is_empty() {
        bail!("no run reports found");
    }
    Ok(render_table(&runs))
}
