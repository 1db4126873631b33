mod common;

use std::path::{Path, PathBuf};

use abstain_cli::commands::{annotate, eval, perturb, select};
use abstain_cli::config::RunConfig;
use abstain_cli::manifest::{sha256_file, Manifest, OutputDir};
use abstain_cli::{Cli, Command};
use abstain_core::annotation::{export_responses, AlteredElement, Provenance, Reason, UnanswerableAnswer};
use abstain_core::data::{load_perturbations, write_jsonl};
use abstain_core::eval::EvalItem;
use abstain_core::selective::{save_heads, write_features, write_labels, LabelRecord, LinearHead, Prediction, SelectiveHeads};
use abstain_core::{AnnotatorResponse, AnswerType, FusedFeature, Protocol, Variant};
use clap::Parser;
use common::{fixture, Fixture};

fn config(f: &Fixture, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.corpus = Some(f.corpus.clone());
    cfg.paths.images = f.images.clone();
    cfg.paths.output = out.to_path_buf();
    cfg.backends.word_embeddings = Some(f.word_embeddings.clone());
    cfg.backends.lm_scores = Some(f.lm_scores.clone());
    cfg.backends.image_embeddings = Some(f.image_embeddings.clone());
    cfg.backends.detections = Some(f.detections.clone());
    cfg
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn perturb_into(f: &Fixture, out: PathBuf) -> (RunConfig, perturb::PerturbSummary) {
    let cfg = config(f, &out);
    let s = perturb::run(&cfg, &OutputDir::new(&out, false)).unwrap();
    (cfg, s)
}

#[test]
fn perturb_is_deterministic_and_covers_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let (_, a) = perturb_into(&f, dir.path().join("a"));
    let (_, b) = perturb_into(&f, dir.path().join("b"));
    assert_eq!(a, b);
    assert_eq!(a.instances, 5);
    assert_eq!(a.binary_filtered, 1);
    for code in ["T-1", "T-2", "I-1", "I-2", "I-3"] {
        assert!(a.records_by_kind.get(code).copied().unwrap_or(0) > 0, "no {code} record: {a:?}");
    }
    for name in [perturb::RECORDS, perturb::SKIPS] {
        assert_eq!(read(dir.path().join("a").join(name)), read(dir.path().join("b").join(name)), "{name}");
    }
    for r in load_perturbations(&dir.path().join("a").join(perturb::RECORDS)).unwrap() {
        r.validate().unwrap();
        if let Some(img) = r.perturbed_image_ref.as_deref().filter(|i| i.starts_with(perturb::IMAGE_DIR)) {
            assert_eq!(read(dir.path().join("a").join(img)), read(dir.path().join("b").join(img)), "{img}");
        }
    }
}

#[test]
fn missing_image_only_affects_its_instance() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    perturb_into(&f, dir.path().join("o"));
    let records = load_perturbations(&dir.path().join("o").join(perturb::RECORDS)).unwrap();
    let pixel_kinds = |id: &str| records.iter().filter(|r| r.source_id == id && r.perturbed_image_ref.as_deref().is_some_and(|i| i.starts_with("perturbed/"))).count();
    assert_eq!(pixel_kinds("q4"), 0);
    assert_eq!(pixel_kinds("q1"), 2);
    assert_eq!(pixel_kinds("q5"), 2);
    let skips = String::from_utf8(read(dir.path().join("o").join(perturb::SKIPS))).unwrap();
    assert!(skips.lines().any(|l| l.contains("\"q4\"") && l.contains("I2_object_mask") && l.contains("missing.png")));
}

#[test]
fn binary_only_corpus_yields_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let corpus = dir.path().join("yesno.jsonl");
    std::fs::write(
        &corpus,
        "{\"id\":\"y1\",\"image\":\"img1.png\",\"question\":\"Is it red?\",\"answers\":[\"yes\"],\"question_type\":\"is it\",\"answer_type\":\"yes/no\"}\n\
         {\"id\":\"y2\",\"image\":\"img2.png\",\"question\":\"Are there dogs?\",\"answers\":[\"No\"],\"question_type\":\"are there\",\"answer_type\":\"other\"}\n",
    )
    .unwrap();
    let mut cfg = config(&f, &dir.path().join("o"));
    cfg.paths.corpus = Some(corpus);
    let s = perturb::run(&cfg, &OutputDir::new(dir.path().join("o"), false)).unwrap();
    assert_eq!((s.records, s.binary_filtered), (0, 2));
    for kind in ["T-1", "T-2", "I-1", "I-2", "I-3"] {
        assert_eq!(s.skips_by_kind[kind]["binary answer"], 2);
    }
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let (cfg, _) = perturb_into(&f, dir.path().join("o"));
    let err = perturb::run(&cfg, &OutputDir::new(dir.path().join("o"), false)).unwrap_err();
    assert!(err.to_string().contains("--force"), "{err}");
    perturb::run(&cfg, &OutputDir::new(dir.path().join("o"), true)).unwrap();
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let out = dir.path().join("o");
    let mut cfg = config(&f, &out);
    cfg.perturb.seed = 17;
    perturb::run(&cfg, &OutputDir::new(&out, false)).unwrap();
    let mpath = out.join("perturb.manifest.json");
    let m: Manifest = serde_json::from_slice(&read(&mpath)).unwrap();
    assert_eq!(m.config, cfg);
    assert_eq!(m.seeds["perturb"], 17);
    assert_eq!(m.inputs["corpus"].sha256, sha256_file(&f.corpus).unwrap());
    assert!(m.inputs.contains_key("lm_scores") && m.inputs.contains_key("detections"));

    let mut again = RunConfig::load(&mpath).unwrap();
    again.paths.output = dir.path().join("o2");
    perturb::run(&again, &OutputDir::new(&again.paths.output, false)).unwrap();
    assert_eq!(read(out.join(perturb::RECORDS)), read(dir.path().join("o2").join(perturb::RECORDS)));
}

fn export_tasks_for(f: &Fixture, dir: &Path) -> (RunConfig, PathBuf) {
    let (cfg, _) = perturb_into(f, dir.join("p"));
    let records = load_perturbations(&dir.join("p").join(perturb::RECORDS)).unwrap();
    let baselines: Vec<annotate::BaselineRow> = records
        .iter()
        .map(|r| annotate::BaselineRow { source_id: r.source_id.clone(), kind: Some(r.kind), answer: "blue".into() })
        .collect();
    write_jsonl(&dir.join("baselines.jsonl"), &baselines).unwrap();
    let out = OutputDir::new(dir.join("a"), false);
    let report = annotate::export(&cfg, &out, &dir.join("p").join(perturb::RECORDS), Some(&dir.join("baselines.jsonl")), None).unwrap();
    assert_eq!(report.tasks, records.len(), "{report:?}");
    assert!(report.rejected.is_empty());
    (cfg, dir.join("a").join(annotate::TASKS))
}

#[test]
fn annotation_round_trip_and_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let (cfg, tasks_csv) = export_tasks_for(&f, dir.path());
    let tasks = annotate::load_tasks(&tasks_csv).unwrap();
    let t0 = &tasks[0].task_id;
    let t1 = &tasks[1].task_id;
    let responses = vec![
        AnnotatorResponse::unanswerable(t0, "w1", Reason::R1, UnanswerableAnswer::A2, 4),
        AnnotatorResponse::unanswerable(t0, "w2", Reason::R3, UnanswerableAnswer::A1, 3),
        AnnotatorResponse::answerable(t0, "w3", AlteredElement::Question, Provenance::Baseline, 2),
        AnnotatorResponse::answerable(t1, "w1", AlteredElement::Image, Provenance::Original, 5),
        AnnotatorResponse::answerable(t1, "w2", AlteredElement::Image, Provenance::Original, 4),
        AnnotatorResponse::unanswerable(t1, "w3", Reason::R2, UnanswerableAnswer::A3, 1),
        AnnotatorResponse::unanswerable("ghost", "w3", Reason::R2, UnanswerableAnswer::A3, 1),
    ];
    let csv = dir.path().join("responses.csv");
    export_responses(&responses, &csv).unwrap();

    let ing = annotate::ingest(&cfg, &OutputDir::new(dir.path().join("i"), false), &csv, Some(&tasks_csv)).unwrap();
    assert!(ing.rejected.is_empty(), "{ing:?}");
    assert_eq!(ing.accepted, 6);
    assert_eq!(ing.unknown_tasks.len(), 1);

    let (summary, analytics) = annotate::consensus(
        &cfg,
        &OutputDir::new(dir.path().join("c"), false),
        &tasks_csv,
        &dir.path().join("i").join(annotate::RESPONSES),
    )
    .unwrap();
    assert_eq!(summary.labeled, 2);
    assert_eq!(summary.outcomes["unanswerable"], 1);
    assert_eq!(summary.outcomes["answerable"], 1);
    assert_eq!(analytics.responses, 6);
    assert_eq!(analytics.agreement["2/3"], 2);
    let lines = String::from_utf8(read(dir.path().join("c").join(annotate::CONSENSUS))).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().find(|l| l.contains(t0.as_str())).unwrap()).unwrap();
    assert_eq!(first["label"], "unanswerable");
    assert_eq!(first["answer_text"], "I don't know");
}

#[test]
fn export_rejects_missing_and_equal_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let (cfg, _) = perturb_into(&f, dir.path().join("p"));
    std::fs::write(dir.path().join("b.jsonl"), "{\"source_id\":\"q1\",\"answer\":\"Red\"}\n").unwrap();
    let r = annotate::export(
        &cfg,
        &OutputDir::new(dir.path().join("a"), false),
        &dir.path().join("p").join(perturb::RECORDS),
        Some(&dir.path().join("b.jsonl")),
        None,
    )
    .unwrap();
    assert_eq!(r.tasks, 0);
    assert!(r.rejected.iter().any(|x| x.source_id == "q1" && x.error.contains("matches the original")));
    assert!(r.rejected.iter().any(|x| x.source_id == "q2" && x.error.contains("no baseline")));
}

fn write_separable(dir: &Path) -> (PathBuf, PathBuf) {
    // Answer 0 near (1, 0), answer 1 near (0, 1), unanswerable near (-1, -1).
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let j = i as f64 * 0.01;
        let (x, answer) = match i % 3 {
            0 => (vec![1.0 + j, 0.0, 1.0], Some(0)),
            1 => (vec![0.0, 1.0 + j, 1.0], Some(1)),
            _ => (vec![-1.0 - j, -1.0, 1.0], None),
        };
        feats.push(FusedFeature::new(format!("f{i}"), x).unwrap());
        labels.push(LabelRecord { id: format!("f{i}"), answer });
    }
    let fm = dir.join("feats.json");
    write_features(&feats, &fm).unwrap();
    let lp = dir.join("labels.jsonl");
    write_labels(&labels, &lp).unwrap();
    (fm, lp)
}

#[test]
fn select_fit_calibrate_infer() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, labels) = write_separable(dir.path());
    let mut cfg = RunConfig::default();
    cfg.select.variant = Variant::Cls;
    let fit = select::fit(&cfg, &OutputDir::new(dir.path().join("fit"), false), &feats, &labels).unwrap();
    assert_eq!(fit.train_acc_b, 1.0, "{fit:?}");
    assert_eq!(fit.train_accuracy, 1.0);
    assert_eq!(fit.n_answers, 2);
    let heads = dir.path().join("fit").join(select::HEADS);

    cfg.select.grid = vec![0.37];
    let cal = select::calibrate_cmd(&cfg, &OutputDir::new(dir.path().join("cal"), false), &heads, &feats, &labels).unwrap();
    assert_eq!(cal.theta, 0.37);

    let rows = select::infer(
        &cfg,
        &OutputDir::new(dir.path().join("inf"), false),
        &heads,
        &feats,
        Some(&dir.path().join("fit").join("..").join("cal").join(select::CALIBRATION)),
    )
    .unwrap();
    assert_eq!(rows.len(), 30);
}

#[test]
fn ent_on_uniform_outputs_abstains_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let (feats, _) = write_separable(dir.path());
    let heads = SelectiveHeads { variant: Variant::Ent, answer: LinearHead::zeros(4, 3), binary: None };
    let hp = dir.path().join("uniform.json");
    save_heads(&heads, &hp).unwrap();
    let mut cfg = RunConfig::default();
    cfg.select.theta = Some(1.0);
    let rows = select::infer(&cfg, &OutputDir::new(dir.path().join("inf"), false), &hp, &feats, None).unwrap();
    assert!(rows.iter().all(|r| r.result == Prediction::Abstain));
    assert!(rows.iter().all(|r| (r.confidence - 4f64.ln()).abs() < 1e-12));
}

pub fn eval_items(n: usize) -> Vec<EvalItem> {
    (0..n)
        .map(|i| {
            let unanswerable = i % 3 == 0;
            EvalItem {
                id: format!("e{i}"),
                source_id: format!("s{i}"),
                kind: None,
                image: format!("img{i}.png"),
                question: format!("What is object {i}?"),
                question_type: "what is".into(),
                answer_type: [AnswerType::Other, AnswerType::Number, AnswerType::YesNo][i % 3],
                unanswerable,
                options: vec![format!("thing{i}"), format!("other{i}"), format!("random{i}")],
                valid_answers: if unanswerable { vec![] } else { vec![format!("thing{i}")] },
                reason: unanswerable.then_some(Reason::R3),
            }
        })
        .collect()
}

#[test]
fn eval_echo_is_perfect_and_logs_shots() {
    let dir = tempfile::tempdir().unwrap();
    let items = dir.path().join("items.jsonl");
    write_jsonl(&items, &eval_items(12)).unwrap();
    let mut cfg = RunConfig::default();
    cfg.eval.n_answerable = 1;
    cfg.eval.n_unanswerable = 1;
    let out = dir.path().join("o");
    let runs = eval::run(&cfg, &OutputDir::new(&out, false), &items, None).unwrap();
    assert_eq!(runs.len(), 4);
    for r in &runs {
        assert_eq!(r.report.acc_b, 1.0, "{}", r.protocol);
        assert_eq!(r.report.oos_ratio, 0.0);
        if r.protocol != Protocol::By {
            assert_eq!(r.report.acc_o, Some(1.0));
        }
    }
    let table = String::from_utf8(read(out.join(eval::TABLE))).unwrap();
    for col in ["BY (%)", "MC (%)", "OE (%)", "OEH (%)"] {
        assert!(table.contains(col), "{table}");
    }
    let m: Manifest = serde_json::from_slice(&read(out.join("eval.manifest.json"))).unwrap();
    assert_eq!(m.details["shots"]["total"], 2);
    assert_eq!(m.details["shots"]["n_answerable"], 1);
    assert_eq!(m.details["shots"]["n_unanswerable"], 1);
    let responses = String::from_utf8(read(out.join(eval::responses_name(Protocol::By)))).unwrap();
    assert!(responses.lines().all(|l| l.contains("\"exemplar_ids\":[\"")));

    let rendered = eval::report(&[out]).unwrap();
    assert_eq!(rendered, table);
}

#[test]
fn eval_with_fixture_client_counts_oos() {
    let dir = tempfile::tempdir().unwrap();
    let items = dir.path().join("items.jsonl");
    write_jsonl(&items, &eval_items(4)).unwrap();
    let fixture = dir.path().join("model.jsonl");
    std::fs::write(
        &fixture,
        "{\"id\":\"e0\",\"response\":\"Unanswerable.\"}\n{\"id\":\"e1\",\"response\":\"It is answerable\"}\n{\"id\":\"e2\",\"response\":\"\"}\n",
    )
    .unwrap();
    let mut cfg = RunConfig::default();
    cfg.eval.protocols = vec![Protocol::By];
    cfg.eval.client = format!("fixture:{}", fixture.display());
    cfg.eval.max_retries = 0;
    let runs = eval::run(&cfg, &OutputDir::new(dir.path().join("o"), false), &items, None).unwrap();
    let r = &runs[0].report;
    assert_eq!((r.correct_b, r.oos, r.errors), (2, 2, 1));
    assert_eq!(r.correct_b + r.incorrect_b + r.errors, r.n);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, "[perturb]\nepsilon = 0.9\nseed = 3\n[eval]\nn_answerable = 2\n").unwrap();
    let cli = Cli::try_parse_from(["abstain", "--config", cfg_path.to_str().unwrap(), "perturb", "--epsilon", "0.1", "--kinds", "T-1,I-3"]).unwrap();
    let cfg = cli.effective_config().unwrap();
    assert_eq!(cfg.perturb.epsilon, 0.1);
    assert_eq!(cfg.perturb.seed, 3);
    assert!(cfg.perturb.word_replace && cfg.perturb.copy_move);
    assert!(!cfg.perturb.negation && !cfg.perturb.image_replace && !cfg.perturb.object_mask);

    let cli = Cli::try_parse_from(["abstain", "--config", cfg_path.to_str().unwrap(), "eval", "--items", "x", "--protocols", "BY,OEH", "--n-unanswerable", "1"]).unwrap();
    assert!(matches!(cli.command, Command::Eval(_)));
    let cfg = cli.effective_config().unwrap();
    assert_eq!((cfg.eval.n_answerable, cfg.eval.n_unanswerable), (2, 1));
    assert_eq!(cfg.eval.protocols, vec![Protocol::By, Protocol::Oeh]);

    assert!(Cli::try_parse_from(["abstain", "perturb", "--kinds", "T-9"]).unwrap().effective_config().is_err());
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_abstain"))
        .args(["perturb", "--out"])
        .arg(dir.path().join("o"))
        .args(["--corpus", "/nonexistent/corpus.jsonl"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["command"], "perturb");
}

#[test]
fn binary_runs_the_fixture_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture(dir.path());
    let run = |out: &str| {
        std::process::Command::new(env!("CARGO_BIN_EXE_abstain"))
            .arg("perturb")
            .args(["--corpus", f.corpus.to_str().unwrap()])
            .args(["--images", f.images.to_str().unwrap()])
            .args(["--out", dir.path().join(out).to_str().unwrap()])
            .env("ABSTAIN_WORD_EMBEDDINGS", &f.word_embeddings)
            .env("ABSTAIN_LM_SCORES", &f.lm_scores)
            .env("ABSTAIN_IMAGE_EMBEDDINGS", &f.image_embeddings)
            .env("ABSTAIN_DETECTIONS", &f.detections)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    };
    let a = run("a");
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(run("b").status.success());
    assert_eq!(read(dir.path().join("a").join(perturb::RECORDS)), read(dir.path().join("b").join(perturb::RECORDS)));
    let m: Manifest = serde_json::from_slice(&read(dir.path().join("a").join("perturb.manifest.json"))).unwrap();
    assert_eq!(m.config.backends.detections.as_deref(), Some(f.detections.as_path()));
}
