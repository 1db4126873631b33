use std::collections::HashMap;

use abstain_core::annotation::{
    build_task, consensus_all, export_responses, export_tasks, ingest_responses, ingest_tasks, AlteredElement,
    Provenance, Reason, UnanswerableAnswer,
};
use abstain_core::data::{load_perturbations, save_perturbations};
use abstain_core::eval::{run_eval, EchoStub, EmptyStub, EvalConfig, EvalItem};
use abstain_core::selective::{
    fit_selective, load_heads, read_features, save_heads, write_features, LabeledFeature, TrainConfig,
};
use abstain_core::text::{perturb_text, LookupScorer, RuleParser, RuleTagger, TextBackends, TextPerturbConfig};
use abstain_core::{
    AnnotatorResponse, AnswerType, ConsensusOutcome, EmbeddingTable, FusedFeature, PerturbationKind, Protocol,
    ShotConfig, Split, Variant, VqaInstance,
};

fn inst(id: &str, question: &str, answers: &[&str], qt: &str) -> VqaInstance {
    VqaInstance {
        id: id.into(),
        image_ref: format!("{id}.png"),
        question: question.into(),
        answers: answers.iter().map(|a| a.to_string()).collect(),
        question_type: qt.into(),
        answer_type: AnswerType::Other,
        split: Split::Unassigned,
    }
}

#[test]
fn text_perturbations_to_labeled_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = vec![
        inst("a", "What color is the car?", &["red", "red"], "what color"),
        inst("b", "What color is the sky?", &["blue"], "what color"),
        inst("c", "What color is the wall?", &["white"], "what color"),
    ];
    let table = EmbeddingTable::from_rows([
        ("car", vec![1.0, 0.0, 0.0]),
        ("truck", vec![0.95, 0.05, 0.0]),
        ("cars", vec![0.99, 0.0, 0.0]),
        ("van", vec![0.9, 0.1, 0.0]),
        ("apple", vec![0.0, 0.0, 1.0]),
    ])
    .unwrap();
    let scorer = LookupScorer::new([
        ("What color is the car?", 10.0),
        ("What color is the truck?", 10.2),
        ("What color is the van?", 10.9),
        ("What color is the apple?", 10.1),
        ("What color is not the car?", 10.3),
    ]);
    let tagger = RuleTagger::new();
    let parser = RuleParser::new(RuleTagger::new());
    let config = TextPerturbConfig { neighbors: 3, ..Default::default() };
    let backends = TextBackends { tagger: &tagger, parser: &parser, scorer: &scorer, embeddings: &table };
    let out = perturb_text(&corpus[0], &config, backends);

    let questions: Vec<(&str, PerturbationKind)> =
        out.records.iter().map(|r| (r.perturbed_question.as_deref().unwrap(), r.kind)).collect();
    assert_eq!(
        questions,
        vec![
            ("What color is the truck?", PerturbationKind::WordReplace),
            ("What color is not the car?", PerturbationKind::Negation),
        ],
        "{:?}",
        out.skips
    );
    // "cars" folds into the anchor; "van" scores too high.
    assert!(out.skips.iter().any(|s| s.reason.contains("\"van\"") && s.reason.contains("> epsilon")));
    assert!(out.records.iter().all(|r| r.validate().is_ok()));

    let path = dir.path().join("records.jsonl");
    save_perturbations(&out.records, &path).unwrap();
    let records = load_perturbations(&path).unwrap();
    assert_eq!(records, out.records);

    let tasks: Vec<_> = records.iter().map(|r| build_task(r, &corpus[0], Some("green"), 5, &corpus, &[]).unwrap()).collect();
    for t in &tasks {
        let random = &t.answer_options[2].text;
        assert!(random == "blue" || random == "white", "{random}");
        assert!(!t.random_fallback);
    }
    assert_ne!(tasks[0].task_id, tasks[1].task_id);
    let tasks_csv = dir.path().join("tasks.csv");
    export_tasks(&tasks, &tasks_csv).unwrap();
    let back = ingest_tasks(&tasks_csv).unwrap();
    assert!(back.rejected.is_empty());
    assert_eq!(back.accepted, tasks);

    let (t0, t1) = (&tasks[0].task_id, &tasks[1].task_id);
    let responses = vec![
        AnnotatorResponse::unanswerable(t0, "x", Reason::R3, UnanswerableAnswer::A2, 5),
        AnnotatorResponse::unanswerable(t0, "y", Reason::R3, UnanswerableAnswer::A2, 4),
        AnnotatorResponse::answerable(t0, "z", AlteredElement::Question, Provenance::Original, 2),
        AnnotatorResponse::answerable(t1, "x", AlteredElement::Question, Provenance::Baseline, 3),
        AnnotatorResponse::answerable(t1, "y", AlteredElement::Question, Provenance::Baseline, 3),
        AnnotatorResponse::unanswerable(t1, "z", Reason::R1, UnanswerableAnswer::A1, 1),
    ];
    let responses_csv = dir.path().join("responses.csv");
    export_responses(&responses, &responses_csv).unwrap();
    let ingested = ingest_responses(&responses_csv).unwrap();
    assert!(ingested.rejected.is_empty());
    assert_eq!(ingested.accepted, responses);

    let by_id: HashMap<_, _> = tasks.iter().map(|t| (t.task_id.clone(), t.clone())).collect();
    let (records, errors) = consensus_all(&ingested.accepted, &by_id);
    assert!(errors.is_empty());
    let label = |id: &str| records.iter().find(|r| r.label.task_id == id).unwrap();
    assert_eq!(label(t0).label.label, ConsensusOutcome::Unanswerable);
    assert_eq!(label(t0).reason, Some(Reason::R3));
    assert_eq!(label(t1).label.label, ConsensusOutcome::Answerable);
    assert_eq!(label(t1).answer_text.as_deref(), Some("green"));
}

#[test]
fn malformed_response_rows_are_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(
        &path,
        "task_id,worker_id,answerable,reason,unanswerable_answer,altered_element,chosen_answer,confidence\n\
         t1,w1,false,R1,A2,,,4\n\
         t1,w2,false,R9,A2,,,4\n\
         t1,w3,true,,,question,original,0\n\
         t1,w4,true,R1,,image,baseline,3\n",
    )
    .unwrap();
    let r = ingest_responses(&path).unwrap();
    assert_eq!(r.accepted.len(), 1);
    let lines: Vec<usize> = r.rejected.iter().map(|d| d.line).collect();
    assert_eq!(lines, vec![3, 4, 5]);
}

fn eval_item(i: usize) -> EvalItem {
    let unanswerable = i % 4 == 0;
    EvalItem {
        id: format!("e{i}"),
        source_id: format!("e{i}"),
        kind: unanswerable.then_some(PerturbationKind::CopyMove),
        image: format!("e{i}.png"),
        question: format!("What is thing {i}?"),
        question_type: "what is".into(),
        answer_type: [AnswerType::Other, AnswerType::Number][i % 2],
        unanswerable,
        options: vec![format!("x{i}"), format!("y{i}"), format!("z{i}")],
        valid_answers: if unanswerable { vec![] } else { vec![format!("x{i}")] },
        reason: unanswerable.then_some(Reason::R4),
    }
}

#[test]
fn echo_is_perfect_and_empty_is_out_of_scope() {
    let items: Vec<EvalItem> = (0..16).map(eval_item).collect();
    for protocol in Protocol::ALL {
        let shots = ShotConfig { n_answerable: 1, n_unanswerable: 1, seed: 3 };
        let config = EvalConfig { protocol, shots, seed: 11, ..Default::default() };
        let echo = EchoStub::new(&items, protocol, config.seed);
        let run = run_eval(&items, &items, &echo, &config).unwrap();
        assert_eq!(run.report.acc_b, 1.0, "{protocol}");
        assert_eq!(run.report.oos, 0);
        assert!((run.report.f1_weighted - 1.0).abs() < 1e-12, "{protocol}: {}", run.report.f1_weighted);
        assert!(run.records.iter().all(|r| r.exemplar_ids.len() == 2 && r.image_refs.len() == 3));

        let empty = run_eval(&items, &items, &EmptyStub, &config).unwrap();
        assert_eq!(empty.report.oos, items.len(), "{protocol}");
        assert_eq!(empty.report.acc_b, 0.0);
    }
}

#[test]
fn trained_heads_survive_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<LabeledFeature> = (0..40)
        .map(|i| {
            let answer = (i % 4 != 0).then_some(i % 2);
            let x = match answer {
                Some(0) => vec![2.0, 0.1 * (i % 3) as f64],
                Some(_) => vec![0.1 * (i % 3) as f64, 2.0],
                None => vec![-1.0, -1.0],
            };
            LabeledFeature { feature: FusedFeature::new(format!("f{i}"), x).unwrap(), answer }
        })
        .collect();
    for variant in Variant::ALL {
        let heads = fit_selective(&data, &TrainConfig { variant, n_answers: 2, ..Default::default() }).unwrap();
        let path = dir.path().join(format!("{}.json", variant.as_str()));
        save_heads(&heads, &path).unwrap();
        let back = load_heads(&path).unwrap();
        assert_eq!(back, heads);
        for l in &data {
            assert_eq!(back.score(&l.feature).unwrap(), heads.score(&l.feature).unwrap());
        }
    }
    let features: Vec<FusedFeature> = data.iter().map(|l| l.feature.clone()).collect();
    let fpath = dir.path().join("features.json");
    write_features(&features, &fpath).unwrap();
    // The blob stores single precision.
    let narrowed: Vec<FusedFeature> =
        features.iter().map(|f| FusedFeature::new(f.id.clone(), f.x.iter().map(|v| *v as f32 as f64).collect()).unwrap()).collect();
    assert_eq!(read_features(&fpath).unwrap(), narrowed);
}
