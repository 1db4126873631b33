use std::collections::BTreeMap;
use std::time::Duration;

use abstain_core::data::{filter_binary_answers, load_dataset, save_perturbations, write_jsonl, PerturbOutcome, Skip};
use abstain_core::image::{self, FixtureDetector, ImageBackends, ImagePerturbConfig, LookupEmbedder};
use abstain_core::text::{
    self, EmbeddingTable, LmScorer, LookupScorer, RuleParser, RuleTagger, TextBackends, TextPerturbConfig, UnigramScorer,
};
use abstain_core::{PerturbationKind, VqaInstance};
use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::HttpScorer;
use crate::config::RunConfig;
use crate::manifest::{Manifest, OutputDir};

pub const RECORDS: &str = "perturbations.jsonl";
pub const SKIPS: &str = "skips.jsonl";
pub const SUMMARY: &str = "perturb_summary.json";
/// Subdirectory of the output dir holding masked / copy-moved images.
pub const IMAGE_DIR: &str = "perturbed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub instances: usize,
    pub binary_filtered: usize,
    pub records: usize,
    pub records_by_kind: BTreeMap<String, usize>,
    /// Skip reasons per kind code, with counts.
    pub skips_by_kind: BTreeMap<String, BTreeMap<String, usize>>,
}

fn scorer(cfg: &RunConfig, corpus: &[VqaInstance]) -> anyhow::Result<Box<dyn LmScorer>> {
    let b = &cfg.backends;
    Ok(match (&b.lm_endpoint, &b.lm_scores) {
        (Some(url), _) => Box::new(HttpScorer::new(url, Duration::from_secs(b.timeout_secs))?),
        (None, Some(path)) => Box::new(LookupScorer::from_json(path).with_context(|| format!("loading {}", path.display()))?),
        (None, None) => {
            log::info!("no LM backend configured; using a unigram scorer fitted on the corpus questions");
            Box::new(UnigramScorer::from_corpus(corpus.iter().map(|i| i.question.as_str())))
        }
    })
}

fn summarize(instances: usize, binary_filtered: usize, outcome: &PerturbOutcome) -> PerturbSummary {
    let mut records_by_kind = BTreeMap::new();
    for r in &outcome.records {
        *records_by_kind.entry(r.kind.code().to_string()).or_insert(0) += 1;
    }
    let mut skips_by_kind: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for s in &outcome.skips {
        *skips_by_kind.entry(s.kind.code().to_string()).or_default().entry(s.reason.clone()).or_insert(0) += 1;
    }
    PerturbSummary { instances, binary_filtered, records: outcome.records.len(), records_by_kind, skips_by_kind }
}

/// Run every enabled perturbation over the corpus and write the records,
/// the skip report, the summary and the manifest.
pub fn run(cfg: &RunConfig, out: &OutputDir) -> anyhow::Result<PerturbSummary> {
    cfg.validate()?;
    let corpus_path = cfg.paths.corpus.as_deref().context("no corpus given (--corpus or paths.corpus)")?;
    out.claim(&[RECORDS, SKIPS, SUMMARY, "perturb.manifest.json"])?;
    let corpus = load_dataset(corpus_path)?;
    let b = &cfg.backends;

    let tagger = match &b.pos_tags {
        Some(p) => RuleTagger::from_tsv(p).with_context(|| format!("loading {}", p.display()))?,
        None => RuleTagger::new(),
    };
    let parser = RuleParser::new(tagger.clone());
    let scorer = scorer(cfg, &corpus)?;
    let embeddings = match &b.word_embeddings {
        Some(p) => EmbeddingTable::load(p)?,
        None => EmbeddingTable::default(),
    };
    let embedder = match &b.image_embeddings {
        Some(p) => LookupEmbedder::from_json(p)?,
        None => LookupEmbedder::default(),
    };
    let detector = match &b.detections {
        Some(p) => FixtureDetector::from_json(p)?,
        None => FixtureDetector::default(),
    };
    let pool = embedder.pool();

    let p = &cfg.perturb;
    let text_cfg = TextPerturbConfig { epsilon: p.epsilon, neighbors: p.neighbors, word_replace: p.word_replace, negation: p.negation };
    let image_cfg = ImagePerturbConfig {
        alpha: p.alpha,
        top_n: p.top_n,
        detection_threshold: p.detection_threshold,
        object_cap: p.object_cap,
        seed: p.seed,
        image_replace: p.image_replace,
        object_mask: p.object_mask,
        copy_move: p.copy_move,
        copy_move_windows: cfg.copy_move(),
        image_root: cfg.paths.images.clone(),
        output_dir: out.path(IMAGE_DIR),
    };
    if p.object_mask || p.copy_move {
        std::fs::create_dir_all(&image_cfg.output_dir)
            .with_context(|| format!("creating {}", image_cfg.output_dir.display()))?;
    }
    let text_backends = TextBackends { tagger: &tagger, parser: &parser, scorer: scorer.as_ref(), embeddings: &embeddings };
    let image_backends = ImageBackends { embedder: &embedder, detector: &detector, tagger: &tagger, pool: &pool };

    let kept = filter_binary_answers(&corpus);
    let mut outcome = PerturbOutcome::default();
    let kept_ids: std::collections::HashSet<&str> = kept.iter().map(|i| i.id.as_str()).collect();
    for inst in corpus.iter().filter(|i| !kept_ids.contains(i.id.as_str())) {
        for kind in PerturbationKind::ALL {
            outcome.skip(&inst.id, kind, "binary answer");
        }
    }
    let per_instance: Vec<PerturbOutcome> = kept
        .par_iter()
        .map(|inst| {
            let mut o = text::perturb_text(inst, &text_cfg, text_backends);
            o.extend(image::perturb_image(inst, &image_cfg, image_backends));
            o
        })
        .collect();
    for o in per_instance {
        outcome.extend(o);
    }
    for r in &mut outcome.records {
        if matches!(r.kind, PerturbationKind::ObjectMask | PerturbationKind::CopyMove) {
            if let Some(img) = &mut r.perturbed_image_ref {
                *img = format!("{IMAGE_DIR}/{img}");
            }
        }
    }
    let disabled: Vec<PerturbationKind> = [
        (p.word_replace, PerturbationKind::WordReplace),
        (p.negation, PerturbationKind::Negation),
        (p.image_replace, PerturbationKind::ImageReplace),
        (p.object_mask, PerturbationKind::ObjectMask),
        (p.copy_move, PerturbationKind::CopyMove),
    ]
    .into_iter()
    .filter_map(|(on, k)| (!on).then_some(k))
    .collect();
    outcome.skips.retain(|s: &Skip| !disabled.contains(&s.kind));

    save_perturbations(&outcome.records, &out.path(RECORDS))?;
    write_jsonl(&out.path(SKIPS), &outcome.skips)?;
    let summary = summarize(corpus.len(), corpus.len() - kept.len(), &outcome);
    out.write_json(SUMMARY, &summary)?;

    let mut manifest = Manifest::new("perturb", cfg);
    manifest.seed("perturb", p.seed);
    manifest.input("corpus", corpus_path)?;
    manifest.optional_input("word_embeddings", b.word_embeddings.as_deref())?;
    manifest.optional_input("pos_tags", b.pos_tags.as_deref())?;
    manifest.optional_input("lm_scores", b.lm_scores.as_deref())?;
    manifest.optional_input("image_embeddings", b.image_embeddings.as_deref())?;
    manifest.optional_input("detections", b.detections.as_deref())?;
    manifest.details = serde_json::to_value(&summary)?;
    out.write_manifest(manifest, &[RECORDS, SKIPS, SUMMARY, IMAGE_DIR])?;
    Ok(summary)
}
